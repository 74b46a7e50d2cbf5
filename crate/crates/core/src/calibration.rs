//! Landmark-based camera calibration.
//!
//! A calibrated camera is a [`CameraRig`]: intrinsics, a lens model and a set
//! of pixel-space segments, each carrying its own homography from the
//! undistorted image plane to the ground plane. Pinhole rigs are fitted by
//! per-segment DLT (with RANSAC when a segment has enough landmarks); fisheye
//! rigs are initialized the same way from a nominal lens and then refined
//! jointly with Levenberg-Marquardt on the world-plane residuals.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::camera::{
    pixel_from_undistorted, undistorted_from_pixel, Intrinsics, Lens, PixelPoint, RadialModel,
    UndistortedPoint, DEFAULT_THETA_MAX,
};
use crate::error::{Error, Result};
use crate::geo::{GeoOrigin, WorldPoint};
use crate::homography::{
    estimate_homography_dlt, estimate_homography_ransac, Correspondence, Homography, RansacParams,
};
use crate::lm::{levenberg_marquardt, LeastSquaresProblem, LmOptions};
use crate::metrics::{RoiSpec, Stats};

const EDGE_EPS: f64 = 1e-9;

/// Annotated ground landmark: where it appears in the image and where it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPair {
    pub id: String,
    pub pixel: PixelPoint,
    pub world: WorldPoint,
}

/// Pixel-space region covered by one planar piece of the ground model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub index: usize,
    pub polygon: Vec<PixelPoint>,
}

impl SegmentSpec {
    pub fn new(index: usize, polygon: Vec<PixelPoint>) -> Self {
        Self { index, polygon }
    }

    /// One segment spanning the whole image (pixel centers at integer coordinates).
    pub fn full_image(width: usize, height: usize) -> Vec<SegmentSpec> {
        let (w, h) = (width as f64 - 0.5, height as f64 - 0.5);
        vec![SegmentSpec::new(1, rect(-0.5, -0.5, w, h))]
    }

    /// Four quadrants meeting at `(cx, cy)`, numbered clockwise from the top-left.
    pub fn quadrants(width: usize, height: usize, cx: f64, cy: f64) -> Vec<SegmentSpec> {
        let (w, h) = (width as f64 - 0.5, height as f64 - 0.5);
        vec![
            SegmentSpec::new(1, rect(-0.5, -0.5, cx, cy)),
            SegmentSpec::new(2, rect(cx, -0.5, w, cy)),
            SegmentSpec::new(3, rect(cx, cy, w, h)),
            SegmentSpec::new(4, rect(-0.5, cy, cx, h)),
        ]
    }

    /// Point-in-polygon with points on the boundary counted as inside.
    pub fn contains(&self, p: PixelPoint) -> bool {
        let poly = &self.polygon;
        let n = poly.len();
        let mut inside = false;
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            if on_segment(p, a, b) {
                return true;
            }
            if (a.v > p.v) != (b.v > p.v) {
                let x = a.u + (p.v - a.v) * (b.u - a.u) / (b.v - a.v);
                if p.u < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn edges(&self) -> impl Iterator<Item = (PixelPoint, PixelPoint)> + '_ {
        let n = self.polygon.len();
        (0..n).map(move |i| (self.polygon[i], self.polygon[(i + 1) % n]))
    }

    /// Non-adjacent edges never touch and the polygon has nonzero area.
    pub fn is_simple(&self) -> bool {
        let n = self.polygon.len();
        if n < 3 || self.polygon.iter().any(|p| !p.u.is_finite() || !p.v.is_finite()) {
            return false;
        }
        if signed_area(&self.polygon).abs() < EDGE_EPS {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_touch(edges[i], edges[j]) {
                    return false;
                }
            }
        }
        true
    }

    fn strictly_contains(&self, p: PixelPoint) -> bool {
        self.contains(p) && !self.edges().any(|(a, b)| on_segment(p, a, b))
    }

    /// Interiors intersect (shared edges and vertices are allowed).
    pub fn overlaps(&self, other: &SegmentSpec) -> bool {
        for e in self.edges() {
            for f in other.edges() {
                if segments_cross_properly(e, f) {
                    return true;
                }
            }
        }
        let centroid = |s: &SegmentSpec| {
            let n = s.polygon.len() as f64;
            let (u, v) = s.polygon.iter().fold((0.0, 0.0), |(a, b), p| (a + p.u, b + p.v));
            PixelPoint::new(u / n, v / n)
        };
        self.polygon.iter().any(|&p| other.strictly_contains(p))
            || other.polygon.iter().any(|&p| self.strictly_contains(p))
            || other.strictly_contains(centroid(self))
            || self.strictly_contains(centroid(other))
    }
}

fn rect(u0: f64, v0: f64, u1: f64, v1: f64) -> Vec<PixelPoint> {
    vec![
        PixelPoint::new(u0, v0),
        PixelPoint::new(u1, v0),
        PixelPoint::new(u1, v1),
        PixelPoint::new(u0, v1),
    ]
}

fn signed_area(poly: &[PixelPoint]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.u * b.v - b.u * a.v
        })
        .sum::<f64>()
        * 0.5
}

fn orient(a: PixelPoint, b: PixelPoint, c: PixelPoint) -> f64 {
    (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u)
}

fn on_segment(p: PixelPoint, a: PixelPoint, b: PixelPoint) -> bool {
    let len = a.distance(&b).max(1.0);
    orient(a, b, p).abs() <= EDGE_EPS * len
        && p.u >= a.u.min(b.u) - EDGE_EPS
        && p.u <= a.u.max(b.u) + EDGE_EPS
        && p.v >= a.v.min(b.v) - EDGE_EPS
        && p.v <= a.v.max(b.v) + EDGE_EPS
}

fn segments_cross_properly(e: (PixelPoint, PixelPoint), f: (PixelPoint, PixelPoint)) -> bool {
    let d1 = orient(f.0, f.1, e.0);
    let d2 = orient(f.0, f.1, e.1);
    let d3 = orient(e.0, e.1, f.0);
    let d4 = orient(e.0, e.1, f.1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn segments_touch(e: (PixelPoint, PixelPoint), f: (PixelPoint, PixelPoint)) -> bool {
    segments_cross_properly(e, f)
        || on_segment(e.0, f.0, f.1)
        || on_segment(e.1, f.0, f.1)
        || on_segment(f.0, e.0, e.1)
        || on_segment(f.1, e.0, e.1)
}

/// A calibrated camera: image geometry, lens and piecewise-planar ground model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub image_width: usize,
    pub image_height: usize,
    pub intrinsics: Intrinsics,
    pub lens: Lens,
    pub segments: Vec<SegmentSpec>,
    /// Undistorted image plane to world plane, one per segment.
    pub homographies: Vec<Homography>,
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::InvalidParameter("image size must be positive".into()));
        }
        self.intrinsics.validate()?;
        if let Some(radial) = self.lens.radial() {
            radial.validate()?;
        }
        if self.segments.is_empty() || self.segments.len() != self.homographies.len() {
            return Err(Error::InvalidParameter(format!(
                "rig needs one homography per segment and at least one segment, got {} segments and {} homographies",
                self.segments.len(),
                self.homographies.len()
            )));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !s.is_simple() {
                return Err(Error::InvalidParameter(format!("segment {} is not a simple polygon", s.index)));
            }
            for t in &self.segments[i + 1..] {
                if s.overlaps(t) {
                    return Err(Error::InvalidParameter(format!(
                        "segments {} and {} overlap",
                        s.index, t.index
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn segment_of(&self, p: PixelPoint) -> Option<usize> {
        self.segments.iter().position(|s| s.contains(p))
    }

    pub fn in_image(&self, p: PixelPoint) -> bool {
        p.u >= 0.0
            && p.v >= 0.0
            && p.u <= (self.image_width - 1) as f64
            && p.v <= (self.image_height - 1) as f64
    }

    pub fn undistort(&self, p: PixelPoint) -> Result<UndistortedPoint> {
        undistorted_from_pixel(p, &self.intrinsics, &self.lens)
    }

    pub fn distort(&self, q: UndistortedPoint) -> Result<PixelPoint> {
        pixel_from_undistorted(q, &self.intrinsics, &self.lens)
    }

    /// Lifts a pixel to the ground plane. Returns the world point and the
    /// zero-based segment position.
    pub fn pixel_to_world(&self, p: PixelPoint) -> Result<(WorldPoint, usize)> {
        let seg = self.segment_of(p).ok_or(Error::Uncovered { u: p.u, v: p.v })?;
        let q = self.undistort(p).map_err(|_| Error::Uncovered { u: p.u, v: p.v })?;
        let (x, y) = self.homographies[seg]
            .project_front(q.x, q.y)
            .ok_or(Error::Uncovered { u: p.u, v: p.v })?;
        Ok((WorldPoint::new(x, y), seg))
    }

    /// Inverse of [`CameraRig::pixel_to_world`]: the first segment whose
    /// inverse homography lands the point inside that segment wins.
    pub fn world_to_pixel(&self, w: WorldPoint) -> Result<PixelPoint> {
        for (seg, h) in self.segments.iter().zip(&self.homographies) {
            let Ok(inv) = h.inverse() else { continue };
            let Some((x, y)) = inv.project_front(w.x, w.y) else { continue };
            let Ok(p) = self.distort(UndistortedPoint::new(x, y)) else { continue };
            if self.in_image(p) && seg.contains(p) {
                return Ok(p);
            }
        }
        Err(Error::OutOfCoverage { x: w.x, y: w.y })
    }
}

/// Which projection family to calibrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LensKind {
    Pinhole,
    Fisheye,
}

/// Camera description consumed by [`calibrate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub camera_id: u32,
    pub kind: LensKind,
    pub image_width: usize,
    pub image_height: usize,
    #[serde(default)]
    pub origin: GeoOrigin,
    /// Ground position of the camera, used for the ROI split of reports.
    #[serde(default)]
    pub position: Option<WorldPoint>,
    /// Required for pinhole cameras whose normalized coordinates matter;
    /// defaults to `f = width` at the image center otherwise.
    #[serde(default)]
    pub intrinsics: Option<Intrinsics>,
    #[serde(default)]
    pub segments: Option<Vec<SegmentSpec>>,
    #[serde(default)]
    pub theta_max: Option<f64>,
}

impl CameraSpec {
    fn center(&self) -> (f64, f64) {
        ((self.image_width as f64 - 1.0) / 2.0, (self.image_height as f64 - 1.0) / 2.0)
    }

    /// One segment for pinhole cameras, four quadrants for fisheye.
    pub fn default_segments(&self) -> Vec<SegmentSpec> {
        match self.kind {
            LensKind::Pinhole => SegmentSpec::full_image(self.image_width, self.image_height),
            LensKind::Fisheye => {
                let (cx, cy) = self.center();
                SegmentSpec::quadrants(self.image_width, self.image_height, cx, cy)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub ransac: RansacParams,
    pub lm: LmSettings,
}

/// Serializable subset of the LM settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmSettings {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub relative_tolerance: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        let d = LmOptions::default();
        Self {
            max_iterations: d.max_iterations,
            initial_lambda: d.initial_lambda,
            relative_tolerance: d.relative_tolerance,
        }
    }
}

/// Result of a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub rig: CameraRig,
    /// World-plane RMSE over the landmarks used in the fit (meters).
    pub rmse: f64,
    pub initial_rmse: f64,
    /// Landmarks kept by the robust stage, in input order.
    pub inliers: Vec<bool>,
    pub lm_iterations: usize,
    /// Objective after each accepted LM step (empty for pinhole rigs).
    pub accepted_costs: Vec<f64>,
}

fn group_by_segment(pairs: &[LandmarkPair], segments: &[SegmentSpec]) -> Result<Vec<Vec<usize>>> {
    let mut groups = vec![Vec::new(); segments.len()];
    let mut seen = HashSet::new();
    for (i, p) in pairs.iter().enumerate() {
        if !seen.insert(p.id.as_str()) {
            return Err(Error::InvalidParameter(format!("duplicate landmark id {}", p.id)));
        }
        let seg = segments
            .iter()
            .position(|s| s.contains(p.pixel))
            .ok_or_else(|| Error::InvalidParameter(format!("landmark {} lies outside every segment", p.id)))?;
        groups[seg].push(i);
    }
    Ok(groups)
}

fn world_rmse(rig: &CameraRig, pairs: &[LandmarkPair], used: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, &u) in pairs.iter().zip(used) {
        if !u {
            continue;
        }
        let e = match rig.pixel_to_world(p.pixel) {
            Ok((w, _)) => w.distance(&p.world),
            Err(_) => f64::INFINITY,
        };
        sum += e * e;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    (sum / n as f64).sqrt()
}

/// Dispatches on the lens kind of `spec`.
pub fn calibrate(pairs: &[LandmarkPair], spec: &CameraSpec, opts: &CalibrationOptions) -> Result<Calibration> {
    let segments = spec.segments.clone().unwrap_or_else(|| spec.default_segments());
    match spec.kind {
        LensKind::Pinhole => {
            let (cx, cy) = spec.center();
            let k = spec
                .intrinsics
                .unwrap_or(Intrinsics { fx: spec.image_width as f64, fy: spec.image_width as f64, cx, cy });
            calibrate_pinhole(pairs, (spec.image_width, spec.image_height), k, segments, &opts.ransac)
        }
        LensKind::Fisheye => calibrate_fisheye(
            pairs,
            (spec.image_width, spec.image_height),
            segments,
            spec.theta_max.unwrap_or(DEFAULT_THETA_MAX),
            opts,
        ),
    }
}

/// Per-segment homographies for a distortion-free camera. Segments with
/// more than four landmarks go through RANSAC; exactly four are fitted by DLT.
pub fn calibrate_pinhole(
    pairs: &[LandmarkPair],
    image_size: (usize, usize),
    intrinsics: Intrinsics,
    segments: Vec<SegmentSpec>,
    ransac: &RansacParams,
) -> Result<Calibration> {
    intrinsics.validate()?;
    if pairs.len() < 4 {
        return Err(Error::InsufficientPairs { needed: 4, got: pairs.len() });
    }
    let groups = group_by_segment(pairs, &segments)?;
    let lens = Lens::Pinhole;
    let mut inliers = vec![false; pairs.len()];
    let mut homographies = Vec::with_capacity(segments.len());
    for (seg, idx) in segments.iter().zip(&groups) {
        if idx.len() < 4 {
            return Err(Error::Degenerate(format!(
                "segment {} has {} landmarks, at least 4 are required",
                seg.index,
                idx.len()
            )));
        }
        let corr: Vec<Correspondence> = idx
            .iter()
            .map(|&i| {
                let q = undistorted_from_pixel(pairs[i].pixel, &intrinsics, &lens)?;
                Ok(Correspondence::new(q, pairs[i].world))
            })
            .collect::<Result<_>>()?;
        let h = if corr.len() > 4 {
            let (h, mask) = estimate_homography_ransac(&corr, ransac)?;
            for (&i, m) in idx.iter().zip(mask) {
                inliers[i] = m;
            }
            h
        } else {
            for &i in idx {
                inliers[i] = true;
            }
            estimate_homography_dlt(&corr)?
        };
        homographies.push(h);
    }
    let rig = CameraRig {
        image_width: image_size.0,
        image_height: image_size.1,
        intrinsics,
        lens,
        segments,
        homographies,
    };
    rig.validate()?;
    let rmse = world_rmse(&rig, pairs, &inliers);
    Ok(Calibration { rig, rmse, initial_rmse: rmse, inliers, lm_iterations: 0, accepted_costs: Vec::new() })
}

/// Parameter layout: `[fx, fy, cx, cy, k2, k3, H_1 (8), …, H_P (8)]`. `k1`
/// stays at 1 because only the product `f·k1` is observable.
struct FisheyeProblem<'a> {
    pairs: &'a [LandmarkPair],
    groups: &'a [Vec<usize>],
    theta_max: f64,
}

const LENS_PARAMS: usize = 6;

impl FisheyeProblem<'_> {
    fn lens_from(&self, p: &DVector<f64>) -> Result<(Intrinsics, RadialModel)> {
        let k = Intrinsics::new(p[0], p[1], p[2], p[3])?;
        let radial = RadialModel::new(1.0, p[4], p[5], self.theta_max)?;
        Ok((k, radial))
    }

    fn homography_from(p: &DVector<f64>, seg: usize) -> Matrix3<f64> {
        let o = LENS_PARAMS + 8 * seg;
        Matrix3::new(p[o], p[o + 1], p[o + 2], p[o + 3], p[o + 4], p[o + 5], p[o + 6], p[o + 7], 1.0)
    }

    fn pack(k: &Intrinsics, radial: &RadialModel, hs: &[Homography]) -> DVector<f64> {
        let mut v = vec![k.fx, k.fy, k.cx, k.cy, radial.k2, radial.k3];
        for h in hs {
            let m = h.matrix() / h.matrix()[(2, 2)];
            for r in 0..3 {
                for c in 0..3 {
                    if r < 2 || c < 2 {
                        v.push(m[(r, c)]);
                    }
                }
            }
        }
        DVector::from_vec(v)
    }
}

impl LeastSquaresProblem for FisheyeProblem<'_> {
    fn residuals(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let (k, radial) = self.lens_from(p)?;
        let lens = Lens::fisheye(radial);
        let n: usize = self.groups.iter().map(Vec::len).sum();
        let mut r = DVector::zeros(2 * n);
        let mut row = 0;
        for (seg, idx) in self.groups.iter().enumerate() {
            let h = Self::homography_from(p, seg);
            for &i in idx {
                let pair = &self.pairs[i];
                let q = undistorted_from_pixel(pair.pixel, &k, &lens)?;
                let w = h * nalgebra::Vector3::new(q.x, q.y, 1.0);
                if w.z.abs() < 1e-300 {
                    return Err(Error::Degenerate("landmark maps to infinity".into()));
                }
                r[row] = w.x / w.z - pair.world.x;
                r[row + 1] = w.y / w.z - pair.world.y;
                row += 2;
            }
        }
        Ok(r)
    }
}

/// Two-stage fisheye calibration: nominal lens plus per-segment DLT, then
/// joint Levenberg-Marquardt over intrinsics, radial terms and homographies.
pub fn calibrate_fisheye(
    pairs: &[LandmarkPair],
    image_size: (usize, usize),
    segments: Vec<SegmentSpec>,
    theta_max: f64,
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    let (width, height) = image_size;
    if pairs.len() < 4 {
        return Err(Error::InsufficientPairs { needed: 4, got: pairs.len() });
    }
    let groups = group_by_segment(pairs, &segments)?;
    for (seg, idx) in segments.iter().zip(&groups) {
        if idx.len() < 4 {
            return Err(Error::Degenerate(format!(
                "segment {} has {} landmarks, at least 4 are required",
                seg.index,
                idx.len()
            )));
        }
    }

    let f0 = width as f64 / std::f64::consts::PI;
    let k0 = Intrinsics::new(f0, f0, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)?;
    let radial0 = RadialModel::new(1.0, 0.0, 0.0, theta_max)?;
    let lens0 = Lens::fisheye(radial0);
    let mut h0 = Vec::with_capacity(segments.len());
    for (seg, idx) in segments.iter().zip(&groups) {
        let corr: Vec<Correspondence> = idx
            .iter()
            .map(|&i| {
                let q = undistorted_from_pixel(pairs[i].pixel, &k0, &lens0).map_err(|e| {
                    Error::Degenerate(format!("landmark {} outside nominal lens domain: {e}", pairs[i].id))
                })?;
                Ok(Correspondence::new(q, pairs[i].world))
            })
            .collect::<Result<_>>()?;
        let h = estimate_homography_dlt(&corr)
            .map_err(|e| Error::Degenerate(format!("segment {}: {e}", seg.index)))?;
        if h.matrix()[(2, 2)].abs() < 1e-12 {
            return Err(Error::Degenerate(format!("segment {} homography has h22 = 0", seg.index)));
        }
        h0.push(h);
    }
    let used = vec![true; pairs.len()];
    let initial_rig = CameraRig {
        image_width: width,
        image_height: height,
        intrinsics: k0,
        lens: lens0,
        segments: segments.clone(),
        homographies: h0.clone(),
    };
    let initial_rmse = world_rmse(&initial_rig, pairs, &used);

    let problem = FisheyeProblem { pairs, groups: &groups, theta_max };
    let lm_opts = LmOptions {
        max_iterations: opts.lm.max_iterations,
        initial_lambda: opts.lm.initial_lambda,
        relative_tolerance: opts.lm.relative_tolerance,
        ..LmOptions::default()
    };
    let report = levenberg_marquardt(&problem, FisheyeProblem::pack(&k0, &radial0, &h0), &lm_opts)?;
    let (k, radial) = problem.lens_from(&report.params)?;
    let homographies = (0..segments.len())
        .map(|s| Homography::from_matrix(FisheyeProblem::homography_from(&report.params, s)))
        .collect::<Result<Vec<_>>>()?;
    let rig = CameraRig {
        image_width: width,
        image_height: height,
        intrinsics: k,
        lens: Lens::fisheye(radial),
        segments,
        homographies,
    };
    rig.validate()?;
    let rmse = world_rmse(&rig, pairs, &used);
    if !report.converged && rmse > 10.0 * initial_rmse {
        return Err(Error::NonConvergence { final_rmse: rmse, initial_rmse });
    }
    Ok(Calibration {
        rig,
        rmse,
        initial_rmse,
        inliers: used,
        lm_iterations: report.iterations,
        accepted_costs: report.accepted_costs,
    })
}

/// World-space error of one landmark under a calibrated rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkError {
    pub id: String,
    /// `None` when the landmark pixel is not covered by the rig.
    pub error_m: Option<f64>,
    pub in_roi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub landmarks: Vec<LandmarkError>,
    pub in_roi: Option<Stats>,
    pub out_roi: Option<Stats>,
}

/// Per-landmark world error, split by whether the landmark lies in `roi`.
pub fn calibration_report(rig: &CameraRig, pairs: &[LandmarkPair], roi: &RoiSpec) -> CalibrationReport {
    let landmarks: Vec<LandmarkError> = pairs
        .iter()
        .map(|p| LandmarkError {
            id: p.id.clone(),
            error_m: rig.pixel_to_world(p.pixel).ok().map(|(w, _)| w.distance(&p.world)),
            in_roi: roi.contains(&p.world),
        })
        .collect();
    let collect = |inside: bool| -> Vec<f64> {
        landmarks.iter().filter(|l| l.in_roi == inside).filter_map(|l| l.error_m).collect()
    };
    CalibrationReport {
        in_roi: Stats::of(&collect(true)),
        out_roi: Stats::of(&collect(false)),
        landmarks,
    }
}

impl CalibrationReport {
    /// Fixed-width table of landmark errors.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16} {:>10} {:>6}\n", "landmark", "error_m", "roi");
        for l in &self.landmarks {
            let e = l.error_m.map(|e| format!("{e:.4}")).unwrap_or_else(|| "uncovered".into());
            out.push_str(&format!("{:<16} {:>10} {:>6}\n", l.id, e, if l.in_roi { "in" } else { "out" }));
        }
        for (name, s) in [("in-ROI", &self.in_roi), ("out-ROI", &self.out_roi)] {
            if let Some(s) = s {
                out.push_str(&format!("{name}: {:.4} ± {:.4} m (n={})\n", s.mean, s.std, s.count));
            }
        }
        out
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct LandmarkRow {
    id: String,
    pixel_u: f64,
    pixel_v: f64,
    lon: f64,
    lat: f64,
}

/// Reads `id,pixel_u,pixel_v,lon,lat` rows and converts to the local frame.
pub fn read_landmarks_csv<R: Read>(reader: R, origin: &GeoOrigin) -> Result<Vec<LandmarkPair>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["id", "pixel_u", "pixel_v", "lon", "lat"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse { line: 1, message: format!("expected header {}", expected.join(",")) });
    }
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: LandmarkRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if ![row.pixel_u, row.pixel_v, row.lon, row.lat].iter().all(|v| v.is_finite()) {
            return Err(Error::Parse { line, message: "non-finite coordinate".into() });
        }
        if !ids.insert(row.id.clone()) {
            return Err(Error::Parse { line, message: format!("duplicate landmark id {}", row.id) });
        }
        out.push(LandmarkPair {
            id: row.id,
            pixel: PixelPoint::new(row.pixel_u, row.pixel_v),
            world: origin.to_local(row.lon, row.lat),
        });
    }
    Ok(out)
}

pub fn write_landmarks_csv<W: Write>(writer: W, pairs: &[LandmarkPair], origin: &GeoOrigin) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in pairs {
        let (lon, lat) = origin.to_geodetic(p.world);
        w.serialize(LandmarkRow { id: p.id.clone(), pixel_u: p.pixel.u, pixel_v: p.pixel.v, lon, lat })?;
    }
    w.flush()?;
    Ok(())
}

/// Calibration output file for one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub camera_id: u32,
    pub origin: GeoOrigin,
    #[serde(default)]
    pub position: Option<WorldPoint>,
    pub rig: CameraRig,
    pub rmse_m: f64,
}
