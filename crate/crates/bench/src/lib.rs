//! Shared fixtures for the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roadside_core::calibration::CameraRig;
use roadside_core::camera::PixelPoint;
use roadside_core::geo::WorldPoint;
use roadside_core::localization::WorldDetection;
use roadside_core::sim::{RandomTraffic, Scenario, SimCamera};

pub fn fisheye_rig() -> CameraRig {
    SimCamera::fisheye(1, 28.0, 28.0, WorldPoint::new(0.0, 0.0)).and_then(|c| c.rig()).expect("default fisheye")
}

/// Pixels spread over the covered part of a fisheye image.
pub fn pixels(n: usize, seed: u64) -> Vec<PixelPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = 500.0 * rng.random::<f64>().sqrt();
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            PixelPoint::new(639.5 + r * a.cos(), 639.5 + r * a.sin())
        })
        .collect()
}

pub fn cost_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, m, |_, _| rng.random_range(0.0..100.0))
}

/// `n` vehicles on a grid moving east at 8 m/s, observed at `t`.
pub fn grid_detections(n: usize, t: f64) -> Vec<WorldDetection> {
    let side = (n as f64).sqrt().ceil() as usize;
    (0..n)
        .map(|k| WorldDetection {
            frame: (t * 10.0).round() as u64,
            timestamp: t,
            camera_id: 1 + (k % 4) as u32,
            pixel: PixelPoint::new(0.0, 0.0),
            position: WorldPoint::new((k % side) as f64 * 8.0 + 8.0 * t, (k / side) as f64 * 8.0),
            yaw: 0.0,
            s: 8.1,
            r: 2.5,
            class_id: 0,
            confidence: 0.9,
            gt_id: Some(k as u64),
        })
        .collect()
}

/// Four corner fisheyes with `vehicles` circulating for `duration` seconds.
pub fn dense_scenario(vehicles: usize, duration: f64) -> Scenario {
    let mut s = Scenario::default_roundabout(0, 9).expect("default scenario");
    s.duration = duration;
    s.random_traffic = Some(RandomTraffic {
        count: vehicles,
        entry_window: [-20.0, 0.0],
        speed_range: [6.0, 10.0],
        extra_laps: 3,
        collision_free: false,
    });
    s
}
