use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use roadside_core::calibration::{
    calibrate_fisheye, calibrate_pinhole, calibration_report, CalibrationOptions, LandmarkPair,
};
use roadside_core::camera::{undistorted_from_pixel, PixelPoint, DEFAULT_THETA_MAX};
use roadside_core::geo::WorldPoint;
use roadside_core::homography::{estimate_homography_dlt, Correspondence, RansacParams};
use roadside_core::metrics::RoiSpec;
use roadside_core::sim::SimCamera;

fn fisheye() -> SimCamera {
    SimCamera::fisheye(1, 28.0, 28.0, WorldPoint::new(0.0, 0.0)).unwrap()
}

fn thermal() -> SimCamera {
    SimCamera::thermal(5, [-45.0, 0.0, 10.0], [0.0, 0.0, 0.0]).unwrap()
}

fn fit_fisheye(cam: &SimCamera, pairs: &[LandmarkPair]) -> roadside_core::calibration::Calibration {
    calibrate_fisheye(
        pairs,
        (cam.image_width, cam.image_height),
        cam.segments(),
        DEFAULT_THETA_MAX,
        &CalibrationOptions::default(),
    )
    .unwrap()
}

#[test]
fn fisheye_zero_noise_recovers_the_rig() {
    let cam = fisheye();
    let truth = cam.rig().unwrap();
    let pairs = cam.synthetic_landmarks(10, 40.0, 0.0, 1).unwrap();
    let cal = fit_fisheye(&cam, &pairs);
    assert!(cal.rmse <= 1e-6, "rmse {}", cal.rmse);
    let (got, want) = (cal.rig.lens.radial().unwrap(), truth.lens.radial().unwrap());
    assert_eq!(got.k1, want.k1);
    assert!(((got.k2 - want.k2) / want.k2).abs() < 0.01, "k2 {} vs {}", got.k2, want.k2);
    assert!(((cal.rig.intrinsics.fx - truth.intrinsics.fx) / truth.intrinsics.fx).abs() < 0.01);
    let report = calibration_report(&cal.rig, &pairs, &RoiSpec::circular(cam.ground_position()));
    assert!(report.landmarks.iter().all(|l| l.error_m.unwrap() <= 1e-6));
}

#[test]
fn lm_accepted_costs_are_monotone() {
    let cam = fisheye();
    let pairs = cam.synthetic_landmarks(12, 40.0, 0.5, 2).unwrap();
    let cal = fit_fisheye(&cam, &pairs);
    assert!(cal.accepted_costs.len() > 1);
    assert!(cal.accepted_costs.windows(2).all(|w| w[1] <= w[0]));
    assert!(cal.rmse < cal.initial_rmse);
}

#[test]
fn few_landmarks_per_segment_still_calibrate() {
    let cam = fisheye();
    let pairs = cam.synthetic_landmarks(5, 30.0, 0.0, 3).unwrap();
    assert_eq!(pairs.len(), 20);
    assert!(fit_fisheye(&cam, &pairs).rmse < 1e-3);
}

/// RMS world error of each landmark when its pixel is perturbed and pushed
/// through the true rig.
fn propagated_rms(cam: &SimCamera, pairs: &[LandmarkPair], sigma: f64, samples: usize) -> f64 {
    let rig = cam.rig().unwrap();
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sum = 0.0;
    let mut n = 0;
    for p in pairs {
        let clean = rig.world_to_pixel(p.world).unwrap();
        for _ in 0..samples {
            let q = PixelPoint::new(clean.u + noise.sample(&mut rng), clean.v + noise.sample(&mut rng));
            if let Ok((w, _)) = rig.pixel_to_world(q) {
                sum += w.distance(&p.world).powi(2);
                n += 1;
            }
        }
    }
    (sum / n as f64).sqrt()
}

#[test]
fn noisy_landmark_errors_stay_within_propagated_bound() {
    let cam = fisheye();
    let pairs = cam.synthetic_landmarks(15, 40.0, 0.5, 4).unwrap();
    let cal = fit_fisheye(&cam, &pairs);
    let bound = propagated_rms(&cam, &pairs, 0.5, 200);
    let report = calibration_report(&cal.rig, &pairs, &RoiSpec::circular(cam.ground_position()));
    let errs: Vec<f64> = report.landmarks.iter().map(|l| l.error_m.unwrap()).collect();
    let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
    assert!(rms <= 3.0 * bound, "rms {rms} vs bound {bound}");

    // held-out ground points localize within the same bound
    let truth_free = cam.synthetic_landmarks(10, 40.0, 0.0, 40).unwrap();
    let held_bound = propagated_rms(&cam, &truth_free, 0.5, 200);
    let held = calibration_report(&cal.rig, &truth_free, &RoiSpec::circular(cam.ground_position()));
    let held_rms = (held.landmarks.iter().map(|l| l.error_m.unwrap().powi(2)).sum::<f64>()
        / held.landmarks.len() as f64)
        .sqrt();
    assert!(held_rms <= 3.0 * held_bound, "held-out rms {held_rms} vs bound {held_bound}");
}

#[test]
fn pinhole_calibration_is_plain_dlt() {
    let cam = thermal();
    let truth = cam.rig().unwrap();
    for per_segment in [4, 12] {
        let pairs = cam.synthetic_landmarks(per_segment, 50.0, 0.3, 5).unwrap();
        let cal = calibrate_pinhole(
            &pairs,
            (cam.image_width, cam.image_height),
            truth.intrinsics,
            cam.segments(),
            &RansacParams::default(),
        )
        .unwrap();
        assert!(cal.inliers.iter().all(|&m| m));
        let corr: Vec<Correspondence> = pairs
            .iter()
            .map(|p| Correspondence::new(undistorted_from_pixel(p.pixel, &truth.intrinsics, &truth.lens).unwrap(), p.world))
            .collect();
        let dlt = estimate_homography_dlt(&corr).unwrap();
        assert_eq!(cal.rig.homographies[0].matrix(), dlt.matrix());
        assert!(cal.accepted_costs.is_empty());
    }
}

#[test]
fn pinhole_zero_noise_report_is_exact() {
    let cam = thermal();
    let truth = cam.rig().unwrap();
    let pairs = cam.synthetic_landmarks(8, 50.0, 0.0, 6).unwrap();
    let cal = calibrate_pinhole(
        &pairs,
        (cam.image_width, cam.image_height),
        truth.intrinsics,
        cam.segments(),
        &RansacParams::default(),
    )
    .unwrap();
    let report = calibration_report(&cal.rig, &pairs, &RoiSpec::circular(cam.ground_position()));
    assert!(report.landmarks.iter().all(|l| l.error_m.unwrap() <= 1e-6));
}
