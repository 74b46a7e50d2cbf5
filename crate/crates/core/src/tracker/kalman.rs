//! Constant-velocity Kalman filter over `[x, y, s, r, vx, vy, vs, vr]`.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type State = SVector<f64, 8>;
pub type Covariance = SMatrix<f64, 8, 8>;
pub type Measurement = SVector<f64, 4>;

pub const MIN_AREA: f64 = 1e-6;

/// Noise scales. Process noise is `dt · diag(q_pos, q_pos, q_s, q_r,
/// q_vel, q_vel, q_s, q_r)`, measurement noise `diag(r_pos, r_pos, r_s, r_r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub q_pos: f64,
    pub q_s: f64,
    pub q_r: f64,
    pub q_vel: f64,
    pub r_pos: f64,
    pub r_s: f64,
    pub r_r: f64,
    /// Velocity variance of a track seen once.
    pub initial_velocity_var: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { q_pos: 1e-2, q_s: 1e-2, q_r: 1e-4, q_vel: 1.0, r_pos: 0.25, r_s: 0.25, r_r: 0.01, initial_velocity_var: 100.0 }
    }
}

impl NoiseParams {
    pub fn measurement(&self) -> SMatrix<f64, 4, 4> {
        SMatrix::<f64, 4, 4>::from_diagonal(&SVector::<f64, 4>::new(self.r_pos, self.r_pos, self.r_s, self.r_r))
    }

    pub fn process(&self, dt: f64) -> Covariance {
        let d = SVector::<f64, 8>::from_column_slice(&[
            self.q_pos, self.q_pos, self.q_s, self.q_r, self.q_vel, self.q_vel, self.q_s, self.q_r,
        ]);
        Covariance::from_diagonal(&(d * dt))
    }
}

pub fn transition(dt: f64) -> Covariance {
    let mut f = Covariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = dt;
    }
    f
}

fn observation() -> SMatrix<f64, 4, 8> {
    let mut h = SMatrix::<f64, 4, 8>::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanFilter {
    pub x: State,
    pub p: Covariance,
}

fn check_spd(p: &Covariance) -> Result<()> {
    if p.iter().any(|v| !v.is_finite()) || p.cholesky().is_none() {
        return Err(Error::NonSpd);
    }
    Ok(())
}

impl KalmanFilter {
    /// Track seen once: measured position, zero rates, diffuse rate variance.
    pub fn from_measurement(z: &Measurement, noise: &NoiseParams) -> Self {
        let mut x = State::zeros();
        x.fixed_rows_mut::<4>(0).copy_from(z);
        x[2] = x[2].max(MIN_AREA);
        let r = noise.measurement();
        let mut p = Covariance::zeros();
        p.fixed_view_mut::<4, 4>(0, 0).copy_from(&r);
        for i in 4..8 {
            p[(i, i)] = noise.initial_velocity_var;
        }
        Self { x, p }
    }

    /// Exact posterior of a diffuse prior after two measurements `dt` apart:
    /// position from the latest, rates from the difference.
    pub fn from_two_measurements(z1: &Measurement, z2: &Measurement, dt: f64, noise: &NoiseParams) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("two-point start needs dt > 0, got {dt}")));
        }
        let r = noise.measurement();
        let mut x = State::zeros();
        x.fixed_rows_mut::<4>(0).copy_from(z2);
        x.fixed_rows_mut::<4>(4).copy_from(&((z2 - z1) / dt));
        x[2] = x[2].max(MIN_AREA);
        let mut p = Covariance::zeros();
        p.fixed_view_mut::<4, 4>(0, 0).copy_from(&r);
        p.fixed_view_mut::<4, 4>(0, 4).copy_from(&(r / dt));
        p.fixed_view_mut::<4, 4>(4, 0).copy_from(&(r / dt));
        p.fixed_view_mut::<4, 4>(4, 4).copy_from(&(r * (2.0 / (dt * dt))));
        check_spd(&p)?;
        Ok(Self { x, p })
    }

    pub fn predict(&mut self, dt: f64, noise: &NoiseParams) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("predict needs dt > 0, got {dt}")));
        }
        let f = transition(dt);
        self.x = f * self.x;
        self.x[2] = self.x[2].max(MIN_AREA);
        let p = f * self.p * f.transpose() + noise.process(dt);
        self.p = (p + p.transpose()) * 0.5;
        check_spd(&self.p)
    }

    /// Joseph-form measurement update.
    pub fn update(&mut self, z: &Measurement, noise: &NoiseParams) -> Result<()> {
        let h = observation();
        let r = noise.measurement();
        let s = h * self.p * h.transpose() + r;
        let s_inv = s.cholesky().ok_or(Error::NonSpd)?.inverse();
        let k = self.p * h.transpose() * s_inv;
        self.x += k * (z - h * self.x);
        self.x[2] = self.x[2].max(MIN_AREA);
        let a = Covariance::identity() - k * h;
        let p = a * self.p * a.transpose() + k * r * k.transpose();
        self.p = (p + p.transpose()) * 0.5;
        check_spd(&self.p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(x: f64, y: f64) -> Measurement {
        Measurement::new(x, y, 9.0, 2.25)
    }

    #[test]
    fn pure_x_velocity() {
        let noise = NoiseParams::default();
        let mut kf = KalmanFilter { x: State::from_column_slice(&[0.0, 0.0, 4.0, 1.0, 1.0, 0.0, 0.0, 0.0]), p: Covariance::identity() };
        kf.predict(1.0, &noise).unwrap();
        assert_eq!((kf.x[0], kf.x[1], kf.x[2]), (1.0, 0.0, 4.0));
    }

    #[test]
    fn covariance_grows_without_motion() {
        let noise = NoiseParams::default();
        let mut kf = KalmanFilter::from_measurement(&z(3.0, 4.0), &noise);
        let before = (kf.x, kf.p.trace());
        kf.predict(0.1, &noise).unwrap();
        assert_eq!(kf.x, before.0);
        assert!(kf.p.trace() > before.1);
    }

    #[test]
    fn predictions_compose() {
        let noise = NoiseParams::default();
        let start = KalmanFilter { x: State::from_column_slice(&[1.0, -2.0, 8.0, 2.0, 3.0, 0.5, 0.1, -0.01]), p: Covariance::identity() };
        let mut a = start.clone();
        for _ in 0..10 {
            a.predict(0.1, &noise).unwrap();
        }
        let mut b = start;
        b.predict(1.0, &noise).unwrap();
        assert!((a.x - b.x).amax() < 1e-9);
    }

    #[test]
    fn tiny_measurement_noise_pins_position() {
        let noise = NoiseParams { r_pos: 1e-12, r_s: 1e-12, r_r: 1e-12, ..NoiseParams::default() };
        let mut kf = KalmanFilter::from_measurement(&z(0.0, 0.0), &NoiseParams::default());
        kf.update(&z(5.0, -3.0), &noise).unwrap();
        assert!((kf.x[0] - 5.0).abs() < 1e-9 && (kf.x[1] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn repeated_updates_follow_scalar_closed_form() {
        let noise = NoiseParams::default();
        let mut kf = KalmanFilter::from_measurement(&z(0.0, 0.0), &noise);
        let p0 = kf.p[(0, 0)];
        let mut last = p0;
        for n in 1..=20 {
            kf.update(&z(0.1 * (n % 3) as f64, 0.0), &noise).unwrap();
            let expected = 1.0 / (1.0 / p0 + n as f64 / noise.r_pos);
            assert!((kf.p[(0, 0)] - expected).abs() < 1e-12);
            assert!(kf.p[(0, 0)] < last);
            last = kf.p[(0, 0)];
        }
    }

    #[test]
    fn two_point_start_is_exact_for_clean_motion() {
        let noise = NoiseParams::default();
        let kf = KalmanFilter::from_two_measurements(&z(0.0, 0.0), &z(1.0, 0.5), 0.1, &noise).unwrap();
        assert!((kf.x[4] - 10.0).abs() < 1e-12 && (kf.x[5] - 5.0).abs() < 1e-12);
        assert!(kf.p.cholesky().is_some());
    }
}
