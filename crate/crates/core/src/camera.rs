//! Pinhole and radially-symmetric fisheye projection.
//!
//! The fisheye model maps the incidence angle `θ` of a ray to a normalized
//! image radius with an odd polynomial `r(θ) = k1·θ + k2·θ³ + k3·θ⁵`. A
//! pinhole lens is the same interface with distortion disabled, so every
//! downstream stage handles both with one code path.
//!
//! Undistorted points live on the normalized image plane `z = 1` of the
//! camera; pixels are obtained by applying the intrinsic matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the incidence angle of the fisheye model (radians).
pub const DEFAULT_THETA_MAX: f64 = 1.65;

const MAX_ITERATIONS: usize = 100;
const MONOTONIC_GRID_STEP: f64 = 1e-3;
/// Rays this close to perpendicular to the optical axis never reach `z = 1`.
const PLANE_ANGLE_MARGIN: f64 = 1e-9;

/// Image location in pixels, `u` to the right and `v` down.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Point on the normalized (distortion-free) image plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UndistortedPoint {
    pub x: f64,
    pub y: f64,
}

impl UndistortedPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Zero-skew intrinsic matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "intrinsics need positive finite focal lengths, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    /// Normalized coordinates to pixels.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> PixelPoint {
        PixelPoint::new(self.fx * x + self.cx, self.fy * y + self.cy)
    }

    /// Pixels to normalized coordinates.
    #[inline]
    pub fn unapply(&self, p: PixelPoint) -> (f64, f64) {
        ((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy)
    }
}

/// Odd-polynomial radial model `r(θ) = k1·θ + k2·θ³ + k3·θ⁵` on `[0, theta_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialModel {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub theta_max: f64,
}

impl RadialModel {
    /// Builds a model and checks that it is strictly increasing on its domain.
    pub fn new(k1: f64, k2: f64, k3: f64, theta_max: f64) -> Result<Self> {
        let m = Self { k1, k2, k3, theta_max };
        m.validate()?;
        Ok(m)
    }

    /// Equidistant model `r = θ`.
    pub fn equidistant() -> Self {
        Self { k1: 1.0, k2: 0.0, k3: 0.0, theta_max: DEFAULT_THETA_MAX }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.k1, self.k2, self.k3, self.theta_max].iter().all(|v| v.is_finite());
        if !finite || self.k1 <= 0.0 || self.theta_max <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "radial model needs k1 > 0 and theta_max > 0, got k1={} theta_max={}",
                self.k1, self.theta_max
            )));
        }
        let steps = (self.theta_max / MONOTONIC_GRID_STEP).ceil() as usize;
        for i in 0..=steps {
            let theta = (i as f64 * MONOTONIC_GRID_STEP).min(self.theta_max);
            if self.derivative(theta) <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "radial model is not increasing at theta={theta:.3}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        theta * (self.k1 + t2 * (self.k2 + t2 * self.k3))
    }

    #[inline]
    pub fn derivative(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        self.k1 + t2 * (3.0 * self.k2 + 5.0 * self.k3 * t2)
    }

    /// Largest radius reachable inside the domain.
    pub fn max_radius(&self) -> f64 {
        self.eval(self.theta_max)
    }

    /// `r(θ)` for `θ` in `[0, theta_max]`.
    pub fn forward(&self, theta: f64) -> Result<f64> {
        if !(0.0..=self.theta_max).contains(&theta) {
            return Err(Error::Domain(format!(
                "theta {theta} outside [0, {}]",
                self.theta_max
            )));
        }
        Ok(self.eval(theta))
    }

    /// Solves `r(θ) = r` by Newton iteration seeded at `r / k1`, falling back
    /// to bisection on the whole domain.
    pub fn inverse(&self, r: f64) -> Result<f64> {
        let r_max = self.max_radius();
        if !(0.0..=r_max).contains(&r) {
            return Err(Error::Domain(format!("radius {r} outside [0, {r_max}]")));
        }
        let tol = 1e-12 * r.max(1.0);

        let mut theta = (r / self.k1).clamp(0.0, self.theta_max);
        for _ in 0..MAX_ITERATIONS {
            let f = self.eval(theta) - r;
            if f.abs() <= tol {
                return Ok(theta);
            }
            let next = theta - f / self.derivative(theta);
            if !next.is_finite() || !(0.0..=self.theta_max).contains(&next) {
                break;
            }
            theta = next;
        }

        let (mut lo, mut hi) = (0.0, self.theta_max);
        for _ in 0..MAX_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            let f = self.eval(mid) - r;
            if f.abs() <= tol {
                return Ok(mid);
            }
            if f < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(Error::Convergence(format!("radial inverse for r={r}")))
    }
}

/// Lens projection family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lens {
    Pinhole,
    Fisheye { radial: RadialModel },
}

impl Lens {
    pub fn fisheye(radial: RadialModel) -> Self {
        Lens::Fisheye { radial }
    }

    pub fn radial(&self) -> Option<&RadialModel> {
        match self {
            Lens::Pinhole => None,
            Lens::Fisheye { radial } => Some(radial),
        }
    }
}

/// Projects a normalized image-plane point to pixels.
pub fn pixel_from_undistorted(p: UndistortedPoint, k: &Intrinsics, lens: &Lens) -> Result<PixelPoint> {
    match lens {
        Lens::Pinhole => Ok(k.apply(p.x, p.y)),
        Lens::Fisheye { radial } => {
            let rho = p.x.hypot(p.y);
            if rho == 0.0 {
                return Ok(PixelPoint::new(k.cx, k.cy));
            }
            let theta = rho.atan();
            let scale = radial.forward(theta)? / rho;
            Ok(k.apply(scale * p.x, scale * p.y))
        }
    }
}

/// Maps a pixel back to the normalized image plane.
pub fn undistorted_from_pixel(p: PixelPoint, k: &Intrinsics, lens: &Lens) -> Result<UndistortedPoint> {
    let (xd, yd) = k.unapply(p);
    match lens {
        Lens::Pinhole => Ok(UndistortedPoint::new(xd, yd)),
        Lens::Fisheye { radial } => {
            let r = xd.hypot(yd);
            if r == 0.0 {
                return Ok(UndistortedPoint::new(0.0, 0.0));
            }
            let theta = radial.inverse(r)?;
            if theta >= std::f64::consts::FRAC_PI_2 - PLANE_ANGLE_MARGIN {
                return Err(Error::Domain(format!(
                    "pixel ({:.2}, {:.2}) views a ray at {theta:.4} rad, beyond the image plane",
                    p.u, p.v
                )));
            }
            let scale = theta.tan() / r;
            Ok(UndistortedPoint::new(scale * xd, scale * yd))
        }
    }
}
