use std::sync::OnceLock;

use proptest::prelude::*;

use roadside_core::calibration::CameraRig;
use roadside_core::camera::PixelPoint;
use roadside_core::geo::WorldPoint;
use roadside_core::localization::LocalizationMap;
use roadside_core::sim::SimCamera;

fn fixture() -> &'static (SimCamera, CameraRig, LocalizationMap) {
    static CELL: OnceLock<(SimCamera, CameraRig, LocalizationMap)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cam = SimCamera::fisheye(1, 28.0, 28.0, WorldPoint::new(0.0, 0.0)).unwrap();
        let rig = cam.rig().unwrap();
        let map = LocalizationMap::build(&rig).unwrap();
        (cam, rig, map)
    })
}

/// Largest world step to a horizontal or vertical pixel neighbor.
fn ground_sample_distance(map: &LocalizationMap, p: PixelPoint) -> f64 {
    let here = map.lookup(p).unwrap();
    [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
        .iter()
        .filter_map(|(du, dv)| map.lookup(PixelPoint::new(p.u + du, p.v + dv)).ok())
        .map(|w| w.distance(&here))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn world_round_trip_within_two_gsd(r in 0.5f64..45.0, a in 0.0f64..std::f64::consts::TAU) {
        let (cam, rig, map) = fixture();
        let g = cam.ground_position();
        let w = WorldPoint::new(g.x + r * a.cos(), g.y + r * a.sin());
        let p = rig.world_to_pixel(w);
        prop_assume!(p.is_ok());
        let p = p.unwrap();
        let back = map.lookup(p);
        prop_assume!(back.is_ok());
        let gsd = ground_sample_distance(map, p);
        prop_assert!(back.unwrap().distance(&w) <= 2.0 * gsd, "{w:?}: gsd {gsd}");
    }
}

#[test]
fn covered_pixels_reproject_onto_themselves() {
    let (_, rig, map) = fixture();
    let mut checked = 0;
    for i in (0..rig.image_height).step_by(23) {
        for j in (0..rig.image_width).step_by(23) {
            let Some(w) = map.at(i, j) else { continue };
            let p = rig.world_to_pixel(w).unwrap();
            assert!(p.distance(&PixelPoint::new(j as f64, i as f64)) <= 0.5, "({i}, {j}) -> {p:?}");
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn landmarks_land_within_one_cell() {
    let (cam, _, map) = fixture();
    for l in cam.synthetic_landmarks(10, 40.0, 0.0, 8).unwrap() {
        let gsd = ground_sample_distance(map, l.pixel);
        assert!(map.lookup(l.pixel).unwrap().distance(&l.world) <= gsd, "{}", l.id);
    }
}

#[test]
fn rebuild_is_bit_identical() {
    let (_, rig, map) = fixture();
    assert_eq!(LocalizationMap::build(rig).unwrap().to_bytes(), map.to_bytes());
}
