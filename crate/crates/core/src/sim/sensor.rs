//! Oracle detector: projects ground truth through a camera and corrupts it
//! with pixel noise, misses and false positives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::camera::SimCamera;
use super::GroundTruthFrame;
use crate::calibration::CameraRig;
use crate::camera::PixelPoint;
use crate::error::{Error, Result};
use crate::geo::WorldPoint;
use crate::localization::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// Standard deviation of the bottom-center pixel noise.
    pub pixel_noise_sigma: f64,
    pub miss_rate: f64,
    /// Expected false positives per frame and camera (Poisson mean).
    pub false_positive_rate: f64,
    /// False-positive confidences are uniform on `[0, fp_confidence_max]`.
    pub fp_confidence_max: f64,
    /// Standard deviation of the reported footprint (meters).
    pub size_noise_sigma: f64,
    /// Report the image of the box center at half height instead of the
    /// true ground contact point.
    pub box_center_proxy: bool,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            pixel_noise_sigma: 1.0,
            miss_rate: 0.02,
            false_positive_rate: 0.1,
            fp_confidence_max: 0.45,
            size_noise_sigma: 0.05,
            box_center_proxy: false,
        }
    }
}

impl SensorModel {
    pub fn exact() -> Self {
        Self {
            pixel_noise_sigma: 0.0,
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            size_noise_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.pixel_noise_sigma >= 0.0
            && self.size_noise_sigma >= 0.0
            && (0.0..=1.0).contains(&self.miss_rate)
            && (0.0..=1.0).contains(&self.false_positive_rate)
            && (0.0..=1.0).contains(&self.fp_confidence_max);
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid sensor model {self:?}")));
        }
        Ok(())
    }
}

/// Independent stream per `(seed, frame, camera)`.
pub fn frame_rng(seed: u64, frame: u64, camera_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame.wrapping_mul(1 << 20) ^ camera_id as u64);
    rng
}

/// Image direction of a ground heading at `p`, from pixels half a meter
/// behind and ahead.
fn heading_px(rig: &CameraRig, p: WorldPoint, yaw: f64, at: PixelPoint) -> Option<f64> {
    let (s, c) = yaw.sin_cos();
    let ahead = rig.world_to_pixel(WorldPoint::new(p.x + 0.5 * c, p.y + 0.5 * s)).ok();
    let behind = rig.world_to_pixel(WorldPoint::new(p.x - 0.5 * c, p.y - 0.5 * s)).ok();
    let (a, b) = match (ahead, behind) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, at),
        (None, Some(b)) => (at, b),
        (None, None) => return None,
    };
    Some((a.v - b.v).atan2(a.u - b.u))
}

/// Detections of one camera at one frame. Every ground-truth vehicle draws
/// the same number of random values whether or not it is visible, so the
/// stream of one vehicle does not depend on the others.
pub fn observe(
    gt: &GroundTruthFrame,
    camera: &SimCamera,
    rig: &CameraRig,
    sensor: &SensorModel,
    seed: u64,
) -> Result<Vec<Detection>> {
    sensor.validate()?;
    let mut rng = frame_rng(seed, gt.frame, camera.camera_id);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let sigma = sensor.pixel_noise_sigma;
    let mut out = Vec::new();
    for v in &gt.vehicles {
        let miss = rng.random::<f64>() < sensor.miss_rate;
        let (n_u, n_v) = (sigma * std_normal.sample(&mut rng), sigma * std_normal.sample(&mut rng));
        let (n_w, n_l) = (
            sensor.size_noise_sigma * std_normal.sample(&mut rng),
            sensor.size_noise_sigma * std_normal.sample(&mut rng),
        );
        if miss {
            continue;
        }
        let Ok(ground) = rig.world_to_pixel(v.position) else { continue };
        let Some(heading) = heading_px(rig, v.position, v.yaw, ground) else { continue };
        let anchor = if sensor.box_center_proxy {
            match camera.project_point([v.position.x, v.position.y, v.height / 2.0]) {
                Some(p) => p,
                None => continue,
            }
        } else {
            ground
        };
        let pixel = PixelPoint::new(anchor.u + n_u, anchor.v + n_v);
        if !rig.in_image(pixel) {
            continue;
        }
        let confidence = if sigma > 0.0 { (1.0 - n_u.hypot(n_v) / (4.0 * sigma)).max(0.0) } else { 1.0 };
        out.push(Detection {
            frame: gt.frame,
            timestamp: gt.timestamp,
            camera_id: camera.camera_id,
            bottom_center: pixel,
            heading_px: heading,
            size: [(v.width + n_w).max(0.1), (v.length + n_l).max(0.1)],
            class_id: v.class_id,
            confidence,
            gt_id: Some(v.vehicle_id),
        });
    }

    if sensor.false_positive_rate > 0.0 {
        let count = Poisson::new(sensor.false_positive_rate)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(&mut rng) as usize;
        for _ in 0..count {
            // rejection sampling over covered pixels, bounded for cameras
            // that see little ground
            for _ in 0..64 {
                let p = PixelPoint::new(
                    rng.random::<f64>() * (rig.image_width - 1) as f64,
                    rng.random::<f64>() * (rig.image_height - 1) as f64,
                );
                if rig.pixel_to_world(p).is_err() {
                    continue;
                }
                out.push(Detection {
                    frame: gt.frame,
                    timestamp: gt.timestamp,
                    camera_id: camera.camera_id,
                    bottom_center: p,
                    heading_px: rng.random::<f64>() * std::f64::consts::TAU - std::f64::consts::PI,
                    size: [1.8, 4.5],
                    class_id: 0,
                    confidence: rng.random::<f64>() * sensor.fp_confidence_max,
                    gt_id: None,
                });
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{GtVehicle, GroundTruthFrame};
    use super::*;
    use crate::metrics::wrap_angle;

    fn frame(vehicles: Vec<GtVehicle>) -> GroundTruthFrame {
        GroundTruthFrame { frame: 3, timestamp: 0.3, vehicles }
    }

    fn vehicle(id: u64, x: f64, y: f64, yaw: f64) -> GtVehicle {
        GtVehicle { vehicle_id: id, position: WorldPoint::new(x, y), yaw, width: 1.8, length: 4.5, height: 1.5, class_id: 0 }
    }

    fn cam() -> SimCamera {
        SimCamera::fisheye(1, 28.0, 28.0, WorldPoint::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn exact_sensor_round_trips_through_the_rig() {
        let c = cam();
        let rig = c.rig().unwrap();
        let gt = frame(vec![vehicle(1, 10.0, 5.0, 0.7), vehicle(2, 30.0, 12.0, -2.0)]);
        let dets = observe(&gt, &c, &rig, &SensorModel::exact(), 0).unwrap();
        assert_eq!(dets.len(), 2);
        for (d, v) in dets.iter().zip(&gt.vehicles) {
            assert_eq!(d.confidence, 1.0);
            let (w, _) = rig.pixel_to_world(d.bottom_center).unwrap();
            assert!(w.distance(&v.position) < 1e-6);
            // heading maps back to the true yaw
            let (s, co) = d.heading_px.sin_cos();
            let (a, _) = rig.pixel_to_world(PixelPoint::new(d.bottom_center.u + co, d.bottom_center.v + s)).unwrap();
            assert!(wrap_angle((a.y - w.y).atan2(a.x - w.x) - v.yaw).abs() < 0.02);
        }
    }

    #[test]
    fn confidence_tracks_noise_magnitude() {
        let c = cam();
        let rig = c.rig().unwrap();
        let sensor = SensorModel { pixel_noise_sigma: 2.0, miss_rate: 0.0, false_positive_rate: 0.0, ..SensorModel::default() };
        let truth = rig.world_to_pixel(WorldPoint::new(10.0, 5.0)).unwrap();
        for seed in 0..50 {
            let d = &observe(&frame(vec![vehicle(1, 10.0, 5.0, 0.0)]), &c, &rig, &sensor, seed).unwrap()[0];
            let n = d.bottom_center.distance(&truth);
            assert!((d.confidence - (1.0 - n / 8.0).max(0.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn streams_are_seeded_and_independent_of_other_vehicles() {
        let c = cam();
        let rig = c.rig().unwrap();
        let sensor = SensorModel::default();
        let one = frame(vec![vehicle(1, 10.0, 5.0, 0.0)]);
        let a = observe(&one, &c, &rig, &sensor, 9).unwrap();
        assert_eq!(a, observe(&one, &c, &rig, &sensor, 9).unwrap());
        assert_ne!(a, observe(&one, &c, &rig, &sensor, 10).unwrap());
        let far = frame(vec![vehicle(1, 10.0, 5.0, 0.0), vehicle(2, 528.0, 528.0, 0.0)]);
        let b = observe(&far, &c, &rig, &SensorModel { false_positive_rate: 0.0, ..sensor }, 9).unwrap();
        let a0 = observe(&one, &c, &rig, &SensorModel { false_positive_rate: 0.0, ..sensor }, 9).unwrap();
        assert_eq!(a0, b);
    }

    #[test]
    fn false_positives_are_low_confidence_and_covered() {
        let c = cam();
        let rig = c.rig().unwrap();
        let sensor = SensorModel { false_positive_rate: 1.0, ..SensorModel::default() };
        let mut n = 0;
        for seed in 0..100 {
            for d in observe(&frame(vec![]), &c, &rig, &sensor, seed).unwrap() {
                assert!(d.gt_id.is_none() && d.confidence <= 0.45);
                assert!(rig.pixel_to_world(d.bottom_center).is_ok());
                n += 1;
            }
        }
        assert!(n > 50);
    }

    #[test]
    fn pixel_noise_has_configured_spread() {
        let c = cam();
        let rig = c.rig().unwrap();
        let sensor = SensorModel { miss_rate: 0.0, false_positive_rate: 0.0, ..SensorModel::default() };
        let truth = rig.world_to_pixel(WorldPoint::new(10.0, 5.0)).unwrap();
        let mut e = Vec::new();
        for f in 0..1000 {
            let gt = GroundTruthFrame { frame: f, timestamp: f as f64 * 0.1, vehicles: vec![vehicle(1, 10.0, 5.0, 0.0)] };
            let d = &observe(&gt, &c, &rig, &sensor, 4).unwrap()[0];
            e.push(d.bottom_center.u - truth.u);
            e.push(d.bottom_center.v - truth.v);
        }
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let std = (e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / e.len() as f64).sqrt();
        assert!((std - 1.0).abs() < 0.05, "{std}");
    }

    #[test]
    fn certain_miss_is_empty() {
        let c = cam();
        let rig = c.rig().unwrap();
        let sensor = SensorModel { miss_rate: 1.0, false_positive_rate: 0.0, ..SensorModel::default() };
        assert!(observe(&frame(vec![vehicle(1, 10.0, 5.0, 0.0)]), &c, &rig, &sensor, 0).unwrap().is_empty());
    }

    #[test]
    fn box_center_proxy_lands_away_from_the_contact_point() {
        let c = cam();
        let rig = c.rig().unwrap();
        let sensor = SensorModel { box_center_proxy: true, ..SensorModel::exact() };
        let d = &observe(&frame(vec![vehicle(1, -10.0, -10.0, 0.0)]), &c, &rig, &sensor, 0).unwrap()[0];
        let (w, _) = rig.pixel_to_world(d.bottom_center).unwrap();
        // a point at half height seen from the mast lands beyond the vehicle
        assert!(w.distance(&WorldPoint::new(-10.0, -10.0)) > 1.0);
        assert!(w.distance(&c.ground_position()) > WorldPoint::new(-10.0, -10.0).distance(&c.ground_position()));
    }
}
