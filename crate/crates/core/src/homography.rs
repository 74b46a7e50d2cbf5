//! Plane-to-plane homographies: normalized DLT and a seeded RANSAC wrapper.
//!
//! A homography here maps the undistorted image plane of a camera to the
//! metric ground plane. Point sets are Hartley-normalized (centroid at the
//! origin, mean radius √2) before the linear system is solved, which makes
//! the estimate invariant to similarity transforms of either point set.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::UndistortedPoint;
use crate::error::{Error, Result};
use crate::geo::WorldPoint;

const MIN_PAIRS: usize = 4;
const DET_EPS: f64 = 1e-12;
const COLLINEAR_EPS: f64 = 1e-9;
const RANK_EPS: f64 = 1e-10;

/// Projective map normalized so that `h[2][2] = 1`, or to unit Frobenius
/// norm when that entry vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Homography {
    h: Matrix3<f64>,
}

impl From<[[f64; 3]; 3]> for Homography {
    fn from(rows: [[f64; 3]; 3]) -> Self {
        Self { h: Matrix3::from_fn(|r, c| rows[r][c]) }
    }
}

impl From<Homography> for [[f64; 3]; 3] {
    fn from(h: Homography) -> Self {
        let m = h.h;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

impl Homography {
    pub fn identity() -> Self {
        Self { h: Matrix3::identity() }
    }

    /// Normalizes `m` and rejects singular matrices.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("homography has non-finite entries".into()));
        }
        let norm = m.norm();
        if norm == 0.0 {
            return Err(Error::Degenerate("zero homography".into()));
        }
        let h = if m[(2, 2)].abs() > DET_EPS * norm { m / m[(2, 2)] } else { m / norm };
        if h.determinant().abs() <= DET_EPS {
            return Err(Error::Degenerate("singular homography".into()));
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.h
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self
            .h
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("homography is not invertible".into()))?;
        Homography::from_matrix(inv)
    }

    /// Homogeneous image of `(x, y, 1)`.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> Vector3<f64> {
        self.h * Vector3::new(x, y, 1.0)
    }

    /// Dehomogenized image, `None` when the point maps to infinity.
    #[inline]
    pub fn project(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let q = self.apply(x, y);
        if q.z.abs() < 1e-300 {
            return None;
        }
        Some((q.x / q.z, q.y / q.z))
    }

    /// Like [`Homography::project`] but only for points on the positive side
    /// of the line at infinity, i.e. rays that actually hit the target plane.
    #[inline]
    pub fn project_front(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let q = self.apply(x, y);
        if q.z <= 1e-300 {
            return None;
        }
        Some((q.x / q.z, q.y / q.z))
    }
}

/// One undistorted-image / world-plane correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub image: UndistortedPoint,
    pub world: WorldPoint,
}

impl Correspondence {
    pub fn new(image: UndistortedPoint, world: WorldPoint) -> Self {
        Self { image, world }
    }
}

/// World-space distance between `H(image)` and `world`; infinite when the
/// point maps to infinity.
pub fn transfer_error(h: &Homography, c: &Correspondence) -> f64 {
    match h.project(c.image.x, c.image.y) {
        Some((x, y)) => (x - c.world.x).hypot(y - c.world.y),
        None => f64::INFINITY,
    }
}

/// Similarity that moves the centroid to the origin and scales the mean
/// radius to √2.
fn normalizing_transform(pts: &[[f64; 2]]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    let (mx, my) = (sx / n, sy / n);
    let mean_r = pts.iter().map(|p| (p[0] - mx).hypot(p[1] - my)).sum::<f64>() / n;
    if !mean_r.is_finite() || mean_r <= f64::EPSILON * (1.0 + mx.abs().max(my.abs())) {
        return Err(Error::Degenerate("coincident points".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_r;
    Ok(Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0))
}

fn transform(t: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    [t[(0, 0)] * p[0] + t[(0, 2)], t[(1, 1)] * p[1] + t[(1, 2)]]
}

fn check_collinear(pts: &[[f64; 2]]) -> Result<()> {
    // points are normalized, so cross products are scale-free
    let cross = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
    };
    if pts.len() == MIN_PAIRS {
        for i in 0..4 {
            for j in i + 1..4 {
                for k in j + 1..4 {
                    if cross(pts[i], pts[j], pts[k]) < COLLINEAR_EPS {
                        return Err(Error::Degenerate("three collinear points in a minimal set".into()));
                    }
                }
            }
        }
        return Ok(());
    }
    // all points on one line: second moment matrix has a null direction
    let n = pts.len() as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        sxx += p[0] * p[0];
        sxy += p[0] * p[1];
        syy += p[1] * p[1];
    }
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let det = sxx * syy - sxy * sxy;
    if det < COLLINEAR_EPS {
        return Err(Error::Degenerate("all points are collinear".into()));
    }
    Ok(())
}

/// Direct linear transform with Hartley normalization of both point sets.
pub fn estimate_homography_dlt(pairs: &[Correspondence]) -> Result<Homography> {
    let n = pairs.len();
    if n < MIN_PAIRS {
        return Err(Error::InsufficientPairs { needed: MIN_PAIRS, got: n });
    }
    let src: Vec<[f64; 2]> = pairs.iter().map(|c| [c.image.x, c.image.y]).collect();
    let dst: Vec<[f64; 2]> = pairs.iter().map(|c| [c.world.x, c.world.y]).collect();
    if src.iter().chain(dst.iter()).any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Degenerate("non-finite coordinates".into()));
    }
    let t_src = normalizing_transform(&src)?;
    let t_dst = normalizing_transform(&dst)?;
    let src_n: Vec<[f64; 2]> = src.iter().map(|&p| transform(&t_src, p)).collect();
    let dst_n: Vec<[f64; 2]> = dst.iter().map(|&p| transform(&t_dst, p)).collect();
    check_collinear(&src_n)?;
    check_collinear(&dst_n)?;

    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in src_n.iter().zip(&dst_n).enumerate() {
        let (x, y) = (s[0], s[1]);
        let (u, v) = (d[0], d[1]);
        let r0 = 2 * i;
        let r1 = r0 + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("svd failed".into()))?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smallest = order[0];
    let second = svd.singular_values[order[1]];
    let largest = svd.singular_values[order[8]];
    if second <= RANK_EPS * largest {
        return Err(Error::Degenerate("homography is not uniquely determined".into()));
    }
    let hv = v_t.row(smallest);
    let hn = Matrix3::new(hv[0], hv[1], hv[2], hv[3], hv[4], hv[5], hv[6], hv[7], hv[8]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("normalization not invertible".into()))?;
    Homography::from_matrix(t_dst_inv * hn * t_src)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    /// Maximum world-space transfer error of an inlier (meters).
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { iterations: 1000, inlier_threshold: 0.5, seed: 0 }
    }
}

/// RANSAC over 4-point minimal samples followed by a DLT refit on the
/// consensus set. The consensus must contain at least one pair beyond the
/// minimal sample, so four pairs can never be accepted unverified.
pub fn estimate_homography_ransac(
    pairs: &[Correspondence],
    params: &RansacParams,
) -> Result<(Homography, Vec<bool>)> {
    let n = pairs.len();
    if n < MIN_PAIRS {
        return Err(Error::InsufficientPairs { needed: MIN_PAIRS, got: n });
    }
    if params.iterations == 0 || !(params.inlier_threshold > 0.0) {
        return Err(Error::InvalidParameter("ransac needs iterations > 0 and a positive threshold".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, f64, Vec<bool>)> = None;
    let mut sample = Vec::with_capacity(MIN_PAIRS);

    for _ in 0..params.iterations {
        sample.clear();
        sample.extend(
            rand::seq::index::sample(&mut rng, n, MIN_PAIRS)
                .into_iter()
                .map(|i| pairs[i]),
        );
        let Ok(h) = estimate_homography_dlt(&sample) else { continue };

        let mut mask = vec![false; n];
        let mut count = 0;
        let mut score = 0.0;
        for (m, c) in mask.iter_mut().zip(pairs) {
            let e = transfer_error(&h, c);
            if e <= params.inlier_threshold {
                *m = true;
                count += 1;
                score += e;
            }
        }
        let better = match &best {
            None => true,
            Some((bc, bs, _)) => count > *bc || (count == *bc && score < *bs),
        };
        if better {
            best = Some((count, score, mask));
            if count == n {
                break;
            }
        }
    }

    let (count, _, mask) = best.unwrap_or((0, 0.0, vec![false; n]));
    if count <= MIN_PAIRS {
        return Err(Error::NoConsensus { inliers: count });
    }
    let inliers: Vec<Correspondence> = pairs
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(c, _)| *c)
        .collect();
    let h = estimate_homography_dlt(&inliers)?;
    Ok((h, mask))
}
