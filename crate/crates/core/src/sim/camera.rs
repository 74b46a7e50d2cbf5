//! Posed cameras for the simulator. The rig derived here is the exact
//! ground-plane model of the pose, so it doubles as ground truth for
//! calibration and localization tests.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::{CameraRig, LandmarkPair, LensKind, SegmentSpec};
use crate::camera::{Intrinsics, Lens, PixelPoint, RadialModel, DEFAULT_THETA_MAX};
use crate::error::{Error, Result};
use crate::geo::WorldPoint;
use crate::homography::Homography;

pub const FISHEYE_SIZE: usize = 1280;
pub const FISHEYE_FOCAL: f64 = 407.0;
pub const FISHEYE_HEIGHT: f64 = 12.0;
pub const FISHEYE_TILT_DEG: f64 = 10.0;
pub const FISHEYE_K: [f64; 3] = [1.0, -0.05, 0.002];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCamera {
    pub camera_id: u32,
    /// Optical center `[x, y, z]` in meters.
    pub position: [f64; 3],
    /// Point the optical axis passes through.
    pub target: [f64; 3],
    pub image_width: usize,
    pub image_height: usize,
    pub intrinsics: Intrinsics,
    pub lens: Lens,
    /// Defaults to quadrants for fisheye and the full image for pinhole.
    #[serde(default)]
    pub segments: Option<Vec<SegmentSpec>>,
}

impl SimCamera {
    /// Mast-mounted fisheye at ground position `(x, y)`, tilted toward `look_toward`.
    pub fn fisheye(camera_id: u32, x: f64, y: f64, look_toward: WorldPoint) -> Result<Self> {
        let (dx, dy) = (look_toward.x - x, look_toward.y - y);
        let d = dx.hypot(dy);
        let reach = FISHEYE_HEIGHT * FISHEYE_TILT_DEG.to_radians().tan();
        let (ux, uy) = if d > 0.0 { (dx / d, dy / d) } else { (0.0, 0.0) };
        let c = (FISHEYE_SIZE as f64 - 1.0) / 2.0;
        let [k1, k2, k3] = FISHEYE_K;
        Ok(Self {
            camera_id,
            position: [x, y, FISHEYE_HEIGHT],
            target: [x + reach * ux, y + reach * uy, 0.0],
            image_width: FISHEYE_SIZE,
            image_height: FISHEYE_SIZE,
            intrinsics: Intrinsics::new(FISHEYE_FOCAL, FISHEYE_FOCAL, c, c)?,
            lens: Lens::fisheye(RadialModel::new(k1, k2, k3, DEFAULT_THETA_MAX)?),
            segments: None,
        })
    }

    /// 640x512 pinhole (thermal-style) camera.
    pub fn thermal(camera_id: u32, position: [f64; 3], target: [f64; 3]) -> Result<Self> {
        Ok(Self {
            camera_id,
            position,
            target,
            image_width: 640,
            image_height: 512,
            intrinsics: Intrinsics::new(800.0, 800.0, 319.5, 255.5)?,
            lens: Lens::Pinhole,
            segments: None,
        })
    }

    pub fn kind(&self) -> LensKind {
        match self.lens {
            Lens::Pinhole => LensKind::Pinhole,
            Lens::Fisheye { .. } => LensKind::Fisheye,
        }
    }

    pub fn ground_position(&self) -> WorldPoint {
        WorldPoint::new(self.position[0], self.position[1])
    }

    pub fn segments(&self) -> Vec<SegmentSpec> {
        if let Some(s) = &self.segments {
            return s.clone();
        }
        match self.lens {
            Lens::Pinhole => SegmentSpec::full_image(self.image_width, self.image_height),
            Lens::Fisheye { .. } => SegmentSpec::quadrants(
                self.image_width,
                self.image_height,
                self.intrinsics.cx,
                self.intrinsics.cy,
            ),
        }
    }

    /// World-to-camera rotation; rows are the camera x (image right),
    /// y (image down) and z (optical axis) directions.
    pub fn rotation(&self) -> Result<Matrix3<f64>> {
        let c = Vector3::from(self.position);
        let f = Vector3::from(self.target) - c;
        let f = f
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidParameter(format!("camera {} looks at its own position", self.camera_id)))?;
        let up = Vector3::z();
        let x = f.cross(&up).try_normalize(1e-9).unwrap_or_else(Vector3::x);
        let y = f.cross(&x);
        Ok(Matrix3::from_rows(&[x.transpose(), y.transpose(), f.transpose()]))
    }

    fn to_camera(&self, r: &Matrix3<f64>, p: [f64; 3]) -> Vector3<f64> {
        r * (Vector3::from(p) - Vector3::from(self.position))
    }

    /// Physical projection of a 3D point; `None` when it is behind the
    /// lens, beyond the fisheye field or outside the image.
    pub fn project_point(&self, p: [f64; 3]) -> Option<PixelPoint> {
        let r = self.rotation().ok()?;
        let q = self.to_camera(&r, p);
        let px = match &self.lens {
            Lens::Pinhole => {
                if q.z <= 0.0 {
                    return None;
                }
                self.intrinsics.apply(q.x / q.z, q.y / q.z)
            }
            Lens::Fisheye { radial } => {
                let rho = q.x.hypot(q.y);
                if rho == 0.0 {
                    if q.z <= 0.0 {
                        return None;
                    }
                    PixelPoint::new(self.intrinsics.cx, self.intrinsics.cy)
                } else {
                    let theta = rho.atan2(q.z);
                    let rd = radial.forward(theta).ok()?;
                    self.intrinsics.apply(rd * q.x / rho, rd * q.y / rho)
                }
            }
        };
        let inside = px.u >= 0.0
            && px.v >= 0.0
            && px.u <= (self.image_width - 1) as f64
            && px.v <= (self.image_height - 1) as f64;
        inside.then_some(px)
    }

    /// Undistorted-plane to ground homography of this pose.
    pub fn ground_homography(&self) -> Result<Homography> {
        let r = self.rotation()?;
        let t = -(r * Vector3::from(self.position));
        let g = Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), t]);
        let inv = g
            .try_inverse()
            .ok_or_else(|| Error::Degenerate(format!("camera {} sees the ground edge-on", self.camera_id)))?;
        Homography::from_matrix(inv)
    }

    /// Exact rig: the same ground homography for every segment.
    pub fn rig(&self) -> Result<CameraRig> {
        let h = self.ground_homography()?;
        let segments = self.segments();
        let rig = CameraRig {
            image_width: self.image_width,
            image_height: self.image_height,
            intrinsics: self.intrinsics,
            lens: self.lens,
            homographies: vec![h; segments.len()],
            segments,
        };
        rig.validate()?;
        Ok(rig)
    }

    /// Surveyed ground points within `radius` of the camera, `per_segment`
    /// in each segment, with Gaussian pixel noise of `sigma_px`.
    pub fn synthetic_landmarks(&self, per_segment: usize, radius: f64, sigma_px: f64, seed: u64) -> Result<Vec<LandmarkPair>> {
        let rig = self.rig()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma_px.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut counts = vec![0usize; rig.segments.len()];
        let mut out = Vec::new();
        let g = self.ground_position();
        let budget = 2000 * per_segment * rig.segments.len() + 1000;
        for _ in 0..budget {
            if counts.iter().all(|&c| c >= per_segment) {
                break;
            }
            let rr = radius * rng.random::<f64>().sqrt();
            let ang = rng.random::<f64>() * std::f64::consts::TAU;
            let w = WorldPoint::new(g.x + rr * ang.cos(), g.y + rr * ang.sin());
            let Some(p) = self.project_point([w.x, w.y, 0.0]) else { continue };
            let Some(seg) = rig.segment_of(p) else { continue };
            if counts[seg] >= per_segment {
                continue;
            }
            counts[seg] += 1;
            let pixel = PixelPoint::new(p.u + noise.sample(&mut rng), p.v + noise.sample(&mut rng));
            out.push(LandmarkPair { id: format!("c{}_s{}_{}", self.camera_id, seg + 1, counts[seg]), pixel, world: w });
        }
        if let Some(seg) = counts.iter().position(|&c| c < per_segment) {
            return Err(Error::InvalidParameter(format!(
                "segment {} of camera {} sees too little ground within {radius} m",
                seg + 1,
                self.camera_id
            )));
        }
        Ok(out)
    }
}

/// Four fisheyes on the diagonals at `(±offset, ±offset)`, tilted toward `center`.
pub fn corner_fisheyes(center: WorldPoint, offset: f64) -> Result<Vec<SimCamera>> {
    [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
        .iter()
        .enumerate()
        .map(|(i, &(sx, sy))| SimCamera::fisheye(i as u32 + 1, center.x + sx * offset, center.y + sy * offset, center))
        .collect()
}
