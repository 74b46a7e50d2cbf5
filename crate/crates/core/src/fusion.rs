//! Pre-tracking fusion: each camera owns the part of the ground closest to
//! it and contributes only confident detections inside that cell.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::WorldPoint;
use crate::localization::WorldDetection;

/// Nearest-camera (Voronoi) partition of the ground plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    /// Sorted by camera id.
    cameras: Vec<(u32, WorldPoint)>,
}

impl RegionPartition {
    pub fn new(cameras: &[(u32, WorldPoint)]) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::EmptyInput("no cameras to partition".into()));
        }
        let mut sorted = cameras.to_vec();
        sorted.sort_by_key(|c| c.0);
        for (i, a) in sorted.iter().enumerate() {
            for b in &sorted[i + 1..] {
                if a.0 == b.0 {
                    return Err(Error::InvalidParameter(format!("camera id {} listed twice", a.0)));
                }
                if a.1 == b.1 {
                    return Err(Error::DuplicatePosition(b.0));
                }
            }
        }
        Ok(Self { cameras: sorted })
    }

    pub fn cameras(&self) -> &[(u32, WorldPoint)] {
        &self.cameras
    }

    /// Owner of `p`; equidistant points go to the lowest camera id.
    pub fn owner(&self, p: &WorldPoint) -> u32 {
        let mut best = self.cameras[0];
        let mut best_d = p.distance(&best.1);
        for &c in &self.cameras[1..] {
            let d = p.distance(&c.1);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        best.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    pub conf_threshold: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self { conf_threshold: 0.5 }
    }
}

fn keep(d: &WorldDetection, partition: &RegionPartition, params: &FusionParams) -> bool {
    d.confidence >= params.conf_threshold && partition.owner(&d.position) == d.camera_id
}

fn sort_stream(out: &mut [WorldDetection]) {
    out.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(b.confidence.total_cmp(&a.confidence)));
}

/// Keeps confident detections inside their own camera's cell, ordered by
/// timestamp and then descending confidence (stable otherwise).
pub fn fuse(
    per_camera: &BTreeMap<u32, Vec<WorldDetection>>,
    partition: &RegionPartition,
    params: &FusionParams,
) -> Vec<WorldDetection> {
    let mut out: Vec<WorldDetection> = per_camera
        .values()
        .flatten()
        .filter(|d| keep(d, partition, params))
        .cloned()
        .collect();
    sort_stream(&mut out);
    out
}

/// [`fuse`] over a flat stream, grouping by `camera_id` first.
pub fn fuse_flat(stream: &[WorldDetection], partition: &RegionPartition, params: &FusionParams) -> Vec<WorldDetection> {
    let mut groups: BTreeMap<u32, Vec<WorldDetection>> = BTreeMap::new();
    for d in stream {
        groups.entry(d.camera_id).or_default().push(d.clone());
    }
    fuse(&groups, partition, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::PixelPoint;
    use proptest::prelude::*;

    fn det(camera_id: u32, x: f64, y: f64, confidence: f64, t: f64) -> WorldDetection {
        WorldDetection {
            frame: 0,
            timestamp: t,
            camera_id,
            pixel: PixelPoint::new(0.0, 0.0),
            position: WorldPoint::new(x, y),
            yaw: 0.0,
            s: 9.0,
            r: 2.0,
            class_id: 0,
            confidence,
            gt_id: None,
        }
    }

    fn two() -> RegionPartition {
        RegionPartition::new(&[(0, WorldPoint::new(0.0, 0.0)), (1, WorldPoint::new(10.0, 0.0))]).unwrap()
    }

    #[test]
    fn partition_cases() {
        let one = RegionPartition::new(&[(4, WorldPoint::new(1.0, 1.0))]).unwrap();
        assert_eq!(one.owner(&WorldPoint::new(-500.0, 300.0)), 4);
        let p = two();
        assert_eq!(p.owner(&WorldPoint::new(3.0, 0.0)), 0);
        assert_eq!(p.owner(&WorldPoint::new(7.0, 0.0)), 1);
        assert_eq!(p.owner(&WorldPoint::new(5.0, 0.0)), 0);
        let rev = RegionPartition::new(&[(1, WorldPoint::new(10.0, 0.0)), (0, WorldPoint::new(0.0, 0.0))]).unwrap();
        assert_eq!(rev.owner(&WorldPoint::new(5.0, 0.0)), 0);
        assert!(matches!(
            RegionPartition::new(&[(0, WorldPoint::new(1.0, 1.0)), (1, WorldPoint::new(1.0, 1.0))]),
            Err(Error::DuplicatePosition(1))
        ));
        assert!(RegionPartition::new(&[]).is_err());
    }

    #[test]
    fn keeps_own_cell_and_confident_only() {
        let p = two();
        let mut input = BTreeMap::new();
        input.insert(0, vec![det(0, 3.0, 0.0, 0.9, 0.0), det(0, 4.0, 1.0, 0.4, 0.0)]);
        input.insert(1, vec![det(1, 3.0, 0.0, 0.95, 0.0)]);
        let out = fuse(&input, &p, &FusionParams::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].camera_id, 0);
    }

    #[test]
    fn output_order() {
        let p = two();
        let stream = vec![
            det(1, 9.0, 0.0, 0.6, 0.2),
            det(0, 1.0, 0.0, 0.7, 0.1),
            det(0, 2.0, 0.0, 0.9, 0.2),
        ];
        let out = fuse_flat(&stream, &p, &FusionParams::default());
        let key: Vec<(f64, f64)> = out.iter().map(|d| (d.timestamp, d.confidence)).collect();
        assert_eq!(key, vec![(0.1, 0.7), (0.2, 0.9), (0.2, 0.6)]);
    }

    proptest! {
        #[test]
        fn idempotent_and_disjoint(
            raw in proptest::collection::vec((0u32..3, -20.0f64..20.0, -20.0f64..20.0, 0.0f64..1.0, 0u8..3), 0..40)
        ) {
            let p = RegionPartition::new(&[
                (0, WorldPoint::new(-10.0, 0.0)),
                (1, WorldPoint::new(10.0, 0.0)),
                (2, WorldPoint::new(0.0, 12.0)),
            ]).unwrap();
            let stream: Vec<_> = raw.iter().map(|&(c, x, y, conf, t)| det(c, x, y, conf, t as f64 * 0.1)).collect();
            let once = fuse_flat(&stream, &p, &FusionParams::default());
            prop_assert!(once.len() <= stream.len());
            prop_assert_eq!(fuse_flat(&once, &p, &FusionParams::default()), once.clone());
            for d in &once {
                prop_assert_eq!(p.owner(&d.position), d.camera_id);
                prop_assert!(d.confidence >= 0.5);
            }
        }

        #[test]
        fn single_camera_is_a_confidence_filter(
            raw in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0, 0.0f64..1.0), 0..30)
        ) {
            let p = RegionPartition::new(&[(7, WorldPoint::new(0.0, 0.0))]).unwrap();
            let stream: Vec<_> = raw.iter().map(|&(x, y, c)| det(7, x, y, c, 0.0)).collect();
            let out = fuse_flat(&stream, &p, &FusionParams::default());
            prop_assert_eq!(out.len(), stream.iter().filter(|d| d.confidence >= 0.5).count());
        }
    }
}
