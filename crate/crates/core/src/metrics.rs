//! Evaluation: VOC07 average precision, trajectory projection error with an
//! in/out-ROI split, pose and size error, fusion comparison and identity
//! consistency.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::WorldPoint;

/// Mean, population standard deviation and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stats { mean, std: var.sqrt(), count: values.len() })
    }
}

pub const DEFAULT_ROI_RADIUS: f64 = 25.0;
pub const DEFAULT_MAX_RANGE: f64 = 200.0;

/// Region a camera is trusted in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoiSpec {
    Circular { center: WorldPoint, radius: f64 },
    /// Sector of half-angle `half_angle` (radians) around `heading`, out to `max_range`.
    FieldOfView { center: WorldPoint, heading: f64, half_angle: f64, max_range: f64 },
    Union { parts: Vec<RoiSpec> },
}

impl RoiSpec {
    pub fn circular(center: WorldPoint) -> Self {
        RoiSpec::Circular { center, radius: DEFAULT_ROI_RADIUS }
    }

    pub fn field_of_view(center: WorldPoint, heading: f64, half_angle: f64) -> Self {
        RoiSpec::FieldOfView { center, heading, half_angle, max_range: DEFAULT_MAX_RANGE }
    }

    pub fn contains(&self, p: &WorldPoint) -> bool {
        match self {
            RoiSpec::Circular { center, radius } => center.distance(p) <= *radius,
            RoiSpec::FieldOfView { center, heading, half_angle, max_range } => {
                let d = center.distance(p);
                if d > *max_range {
                    return false;
                }
                if d == 0.0 {
                    return true;
                }
                let bearing = (p.y - center.y).atan2(p.x - center.x);
                wrap_angle(bearing - heading).abs() <= *half_angle
            }
            RoiSpec::Union { parts } => parts.iter().any(|r| r.contains(p)),
        }
    }
}

/// Wraps to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut w = a.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w -= tau;
    }
    w
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Aabb {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self { min_x, min_y, max_x, max_y }
    }

    /// Bounding box of a `width × length` rectangle centered at `c` with its
    /// long axis along `yaw`.
    pub fn of_footprint(c: WorldPoint, yaw: f64, width: f64, length: f64) -> Self {
        let (s, co) = yaw.sin_cos();
        let hx = 0.5 * (length * co.abs() + width * s.abs());
        let hy = 0.5 * (length * s.abs() + width * co.abs());
        Self::new(c.x - hx, c.y - hy, c.x + hx, c.y + hy)
    }

    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x).max(0.0) * (self.max_y - self.min_y).max(0.0)
    }

    pub fn iou(&self, other: &Aabb) -> f64 {
        let inter = Aabb::new(
            self.min_x.max(other.min_x),
            self.min_y.max(other.min_y),
            self.max_x.min(other.max_x),
            self.max_y.min(other.max_y),
        )
        .area();
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    /// Frame (image) the box belongs to.
    pub image: u64,
    pub id: u64,
    pub bbox: Aabb,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub image: u64,
    pub bbox: Aabb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult {
    pub ap: f64,
    /// Ground-truth index matched by each detection, in input order.
    pub matches: Vec<Option<usize>>,
    pub true_positives: usize,
    pub false_positives: usize,
}

/// 11-point interpolated average precision. Detections are visited by
/// descending confidence (ties by id); each takes the ground truth of
/// highest IoU in its image and is a true positive when that IoU reaches
/// the threshold and the ground truth is still unclaimed.
pub fn voc07_ap(detections: &[ScoredBox], gts: &[GtBox], iou_threshold: f64) -> ApResult {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .total_cmp(&detections[a].confidence)
            .then(detections[a].id.cmp(&detections[b].id))
    });
    let mut by_image: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_image.entry(g.image).or_default().push(i);
    }
    let mut claimed = vec![false; gts.len()];
    let mut matches = vec![None; detections.len()];
    let mut precision = Vec::with_capacity(order.len());
    let mut recall = Vec::with_capacity(order.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    let npos = gts.len();

    for &d in &order {
        let det = &detections[d];
        let best = by_image.get(&det.image).and_then(|cands| {
            cands
                .iter()
                .map(|&g| (g, det.bbox.iou(&gts[g].bbox)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        });
        match best {
            Some((g, iou)) if iou >= iou_threshold && !claimed[g] => {
                claimed[g] = true;
                matches[d] = Some(g);
                tp += 1;
            }
            _ => fp += 1,
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(if npos == 0 { 0.0 } else { tp as f64 / npos as f64 });
    }

    let ap = if npos == 0 {
        0.0
    } else {
        (0..=10)
            .map(|t| {
                let thr = t as f64 / 10.0;
                precision
                    .iter()
                    .zip(&recall)
                    .filter(|(_, &r)| r >= thr)
                    .map(|(&p, _)| p)
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / 11.0
    };
    ApResult { ap, matches, true_positives: tp, false_positives: fp }
}

/// Closest point of segment `ab` to `p`.
pub fn project_onto_segment(p: &WorldPoint, a: &WorldPoint, b: &WorldPoint) -> WorldPoint {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return *a;
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    WorldPoint::new(a.x + t * dx, a.y + t * dy)
}

/// Distance to a polyline and the foot of the perpendicular.
pub fn project_onto_polyline(p: &WorldPoint, polyline: &[WorldPoint]) -> (f64, WorldPoint) {
    polyline
        .windows(2)
        .map(|w| {
            let q = project_onto_segment(p, &w[0], &w[1]);
            (p.distance(&q), q)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((f64::INFINITY, *p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub all: Stats,
    pub in_roi: Option<Stats>,
    pub out_roi: Option<Stats>,
}

/// Projection distance of each estimated point onto the ground-truth
/// polyline. A point counts as in-ROI when its projection lies in `roi`.
pub fn trajectory_error(points: &[WorldPoint], polyline: &[WorldPoint], roi: &RoiSpec) -> Result<TrajectoryError> {
    if points.is_empty() {
        return Err(Error::EmptyInput("no estimated points".into()));
    }
    if polyline.len() < 2 {
        return Err(Error::EmptyInput("ground-truth polyline needs at least two vertices".into()));
    }
    let mut all = Vec::with_capacity(points.len());
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for p in points {
        let (d, foot) = project_onto_polyline(p, polyline);
        all.push(d);
        if roi.contains(&foot) {
            inside.push(d);
        } else {
            outside.push(d);
        }
    }
    Ok(TrajectoryError {
        all: Stats::of(&all).expect("non-empty"),
        in_roi: Stats::of(&inside),
        out_roi: Stats::of(&outside),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSizeSample {
    pub yaw_pred: f64,
    pub yaw_gt: f64,
    pub size_pred: Vec<f64>,
    pub size_gt: Vec<f64>,
}

/// Mean absolute yaw difference in degrees (wrapped to [0°, 180°]) and mean
/// Euclidean size error over matched samples. Zero for an empty input.
pub fn pose_size_error(samples: &[PoseSizeSample]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let yaw = samples.iter().map(|s| wrap_angle(s.yaw_pred - s.yaw_gt).abs().to_degrees()).sum::<f64>() / n;
    let size = samples
        .iter()
        .map(|s| {
            s.size_pred
                .iter()
                .zip(&s.size_gt)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / n;
    (yaw, size)
}

/// Localization errors of one run, tagged with the scenario they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunErrors {
    pub label: String,
    pub scenario_key: String,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionComparison {
    pub single: Vec<(String, Stats)>,
    pub fused: Stats,
    pub single_average_mean: f64,
    /// `fused.mean / single_average_mean`.
    pub ratio: f64,
    pub pass: bool,
}

/// Compares per-camera runs against the fused run of the same scenario.
pub fn fusion_comparison(single: &[RunErrors], fused: &RunErrors) -> Result<FusionComparison> {
    if single.is_empty() {
        return Err(Error::EmptyInput("no single-camera runs".into()));
    }
    if let Some(bad) = single.iter().find(|r| r.scenario_key != fused.scenario_key) {
        return Err(Error::ScenarioMismatch(format!(
            "{} has {}, fused run has {}",
            bad.label, bad.scenario_key, fused.scenario_key
        )));
    }
    let fused_stats = Stats::of(&fused.errors).ok_or_else(|| Error::EmptyInput("fused run has no errors".into()))?;
    let mut per = Vec::with_capacity(single.len());
    for r in single {
        let s = Stats::of(&r.errors).ok_or_else(|| Error::EmptyInput(format!("{} has no errors", r.label)))?;
        per.push((r.label.clone(), s));
    }
    let avg = per.iter().map(|(_, s)| s.mean).sum::<f64>() / per.len() as f64;
    let ratio = if avg > 0.0 { fused_stats.mean / avg } else { f64::INFINITY };
    Ok(FusionComparison {
        single: per,
        fused: fused_stats,
        single_average_mean: avg,
        ratio,
        pass: fused_stats.mean < avg,
    })
}

/// One positioned sample of a labelled trajectory (track or ground truth).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelledPoint {
    pub timestamp: f64,
    pub label: u64,
    pub position: WorldPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdConsistency {
    pub id_switches: usize,
    /// Switches per ground-truth vehicle.
    pub per_vehicle: BTreeMap<u64, usize>,
    /// Ground-truth samples that found a track within the gate.
    pub assigned: usize,
    pub unassigned: usize,
}

fn time_key(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

/// Per timestamp, ground-truth vehicles are paired with tracks greedily by
/// distance (each track used once, at most `max_dist` meters). A switch is
/// counted when a vehicle's assigned track id differs from its previous one.
pub fn id_consistency(tracks: &[LabelledPoint], gt: &[LabelledPoint], max_dist: f64) -> IdConsistency {
    let mut track_frames: BTreeMap<i64, Vec<&LabelledPoint>> = BTreeMap::new();
    for t in tracks {
        track_frames.entry(time_key(t.timestamp)).or_default().push(t);
    }
    let mut gt_frames: BTreeMap<i64, Vec<&LabelledPoint>> = BTreeMap::new();
    for g in gt {
        gt_frames.entry(time_key(g.timestamp)).or_default().push(g);
    }

    let mut last: HashMap<u64, u64> = HashMap::new();
    let mut per_vehicle: BTreeMap<u64, usize> = BTreeMap::new();
    let mut switches = 0;
    let mut assigned = 0;
    let mut unassigned = 0;
    let empty = Vec::new();
    for (key, gts) in &gt_frames {
        let trs = track_frames.get(key).unwrap_or(&empty);
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (gi, g) in gts.iter().enumerate() {
            for (ti, t) in trs.iter().enumerate() {
                let d = g.position.distance(&t.position);
                if d <= max_dist {
                    cands.push((d, gi, ti));
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut g_used = vec![false; gts.len()];
        let mut t_used = vec![false; trs.len()];
        for (_, gi, ti) in cands {
            if g_used[gi] || t_used[ti] {
                continue;
            }
            g_used[gi] = true;
            t_used[ti] = true;
            let vid = gts[gi].label;
            let tid = trs[ti].label;
            per_vehicle.entry(vid).or_insert(0);
            if let Some(prev) = last.insert(vid, tid) {
                if prev != tid {
                    switches += 1;
                    *per_vehicle.get_mut(&vid).unwrap() += 1;
                }
            }
        }
        assigned += g_used.iter().filter(|&&u| u).count();
        unassigned += g_used.iter().filter(|&&u| !u).count();
    }
    IdConsistency { id_switches: switches, per_vehicle, assigned, unassigned }
}

/// Per-trip localization error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripError {
    pub vehicle_id: u64,
    pub error: TrajectoryError,
}

/// Summary written to `report.json` by a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub loc_all: Option<Stats>,
    pub loc_in_roi: Option<Stats>,
    pub loc_out_roi: Option<Stats>,
    pub yaw_err_deg: f64,
    pub size_err_m: f64,
    pub id_switches: usize,
    pub fusion: Option<FusionComparison>,
    pub trips: Vec<TripError>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box(x: f64) -> Aabb {
        Aabb::new(x, 0.0, x + 1.0, 1.0)
    }

    #[test]
    fn perfect_detections_score_one() {
        let gts: Vec<GtBox> = (0..5).map(|i| GtBox { image: i, bbox: unit_box(i as f64) }).collect();
        let dets: Vec<ScoredBox> = gts
            .iter()
            .enumerate()
            .map(|(i, g)| ScoredBox { image: g.image, id: i as u64, bbox: g.bbox, confidence: 0.9 })
            .collect();
        assert_eq!(voc07_ap(&dets, &gts, 0.5).ap, 1.0);
    }

    #[test]
    fn hand_computed_eleven_point_case() {
        let gts = [GtBox { image: 0, bbox: unit_box(0.0) }, GtBox { image: 0, bbox: unit_box(5.0) }];
        let dets = [
            ScoredBox { image: 0, id: 0, bbox: unit_box(0.0), confidence: 0.9 },
            ScoredBox { image: 0, id: 1, bbox: unit_box(20.0), confidence: 0.8 },
            ScoredBox { image: 0, id: 2, bbox: unit_box(5.0), confidence: 0.7 },
        ];
        let r = voc07_ap(&dets, &gts, 0.5);
        assert!((r.ap - 28.0 / 33.0).abs() < 1e-12);
        assert_eq!((r.true_positives, r.false_positives), (2, 1));
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let gts = [GtBox { image: 0, bbox: unit_box(0.0) }];
        let dets = [
            ScoredBox { image: 0, id: 0, bbox: unit_box(0.0), confidence: 0.9 },
            ScoredBox { image: 0, id: 1, bbox: unit_box(0.05), confidence: 0.8 },
        ];
        let r = voc07_ap(&dets, &gts, 0.5);
        assert_eq!(r.matches, vec![Some(0), None]);
    }

    #[test]
    fn footprint_box_of_rotated_car() {
        let b = Aabb::of_footprint(WorldPoint::new(0.0, 0.0), std::f64::consts::FRAC_PI_2, 2.0, 4.0);
        assert!((b.max_x - 1.0).abs() < 1e-12 && (b.max_y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_error_cases() {
        let line = [WorldPoint::new(0.0, 0.0), WorldPoint::new(10.0, 0.0)];
        let roi = RoiSpec::circular(WorldPoint::new(0.0, 0.0));
        let on = [WorldPoint::new(2.0, 0.0), WorldPoint::new(7.5, 0.0)];
        assert_eq!(trajectory_error(&on, &line, &roi).unwrap().all.mean, 0.0);
        let off = [WorldPoint::new(5.0, 2.0)];
        let e = trajectory_error(&off, &line, &roi).unwrap();
        assert_eq!(e.all.mean, 2.0);
        assert_eq!(e.all.std, 0.0);
        assert_eq!(e.in_roi.unwrap().mean, 2.0);
        assert!(e.out_roi.is_none());
        assert!(trajectory_error(&[], &line, &roi).is_err());
        assert!(trajectory_error(&off, &line[..1], &roi).is_err());
    }

    #[test]
    fn roi_split_uses_ground_truth_foot() {
        let line = [WorldPoint::new(0.0, 0.0), WorldPoint::new(100.0, 0.0)];
        let roi = RoiSpec::Circular { center: WorldPoint::new(0.0, 0.0), radius: 25.0 };
        // estimate lies outside the circle, its projection inside
        let e = trajectory_error(&[WorldPoint::new(20.0, 20.0)], &line, &roi).unwrap();
        assert!(e.in_roi.is_some() && e.out_roi.is_none());
    }

    #[test]
    fn field_of_view_roi() {
        let roi = RoiSpec::field_of_view(WorldPoint::new(0.0, 0.0), 0.0, 0.5);
        assert!(roi.contains(&WorldPoint::new(150.0, 10.0)));
        assert!(!roi.contains(&WorldPoint::new(250.0, 0.0)));
        assert!(!roi.contains(&WorldPoint::new(-10.0, 0.0)));
    }

    #[test]
    fn pose_size_cases() {
        let perfect = PoseSizeSample { yaw_pred: 1.0, yaw_gt: 1.0, size_pred: vec![2.0, 4.5], size_gt: vec![2.0, 4.5] };
        assert_eq!(pose_size_error(&[perfect]), (0.0, 0.0));
        let off: Vec<_> = (0..10)
            .map(|i| PoseSizeSample {
                yaw_pred: i as f64 * 0.3 + 0.1,
                yaw_gt: i as f64 * 0.3,
                size_pred: vec![2.0, 4.0],
                size_gt: vec![2.0, 4.0],
            })
            .collect();
        let (yaw, _) = pose_size_error(&off);
        assert!((yaw - 5.729577951308232).abs() < 1e-9);
        let wrapped = PoseSizeSample { yaw_pred: 3.1, yaw_gt: -3.1, size_pred: vec![], size_gt: vec![] };
        assert!((pose_size_error(&[wrapped]).0 - (std::f64::consts::TAU - 6.2).to_degrees()).abs() < 1e-9);
    }

    #[test]
    fn fusion_comparison_dominance_and_mismatch() {
        let a = RunErrors { label: "cam0".into(), scenario_key: "s".into(), errors: vec![0.5, 0.7] };
        let b = RunErrors { label: "cam1".into(), scenario_key: "s".into(), errors: vec![1.0, 3.0] };
        let fused = RunErrors { label: "fused".into(), scenario_key: "s".into(), errors: vec![0.5, 0.6] };
        let c = fusion_comparison(&[a.clone(), b.clone()], &fused).unwrap();
        assert!(c.pass);
        assert!(c.single.iter().all(|(_, s)| c.fused.mean <= s.mean));
        let other = RunErrors { scenario_key: "t".into(), ..fused };
        assert!(matches!(fusion_comparison(&[a, b], &other), Err(Error::ScenarioMismatch(_))));
    }

    #[test]
    fn id_switch_counting() {
        let gt: Vec<_> = (0..6)
            .map(|k| LabelledPoint { timestamp: k as f64 * 0.1, label: 7, position: WorldPoint::new(k as f64, 0.0) })
            .collect();
        let steady: Vec<_> = gt.iter().map(|g| LabelledPoint { label: 1, ..*g }).collect();
        assert_eq!(id_consistency(&steady, &gt, 2.0).id_switches, 0);
        let switched: Vec<_> = gt
            .iter()
            .enumerate()
            .map(|(k, g)| LabelledPoint { label: if k < 3 { 1 } else { 2 }, ..*g })
            .collect();
        let r = id_consistency(&switched, &gt, 2.0);
        assert_eq!(r.id_switches, 1);
        assert_eq!(r.per_vehicle[&7], 1);
    }

    fn brute_force_ap(dets: &[ScoredBox], gts: &[GtBox]) -> f64 {
        voc07_ap(dets, gts, 0.5).ap
    }

    proptest! {
        #[test]
        fn removing_false_positive_never_lowers_ap(
            gt_x in proptest::collection::vec(0u8..20, 1..6),
            det in proptest::collection::vec((0u8..24, 0u32..1000), 1..10),
        ) {
            let gts: Vec<GtBox> = gt_x.iter().map(|&x| GtBox { image: 0, bbox: unit_box(x as f64 * 2.0) }).collect();
            let dets: Vec<ScoredBox> = det.iter().enumerate().map(|(i, &(x, c))| ScoredBox {
                image: 0, id: i as u64, bbox: unit_box(x as f64 * 2.0), confidence: c as f64 / 1000.0,
            }).collect();
            let full = voc07_ap(&dets, &gts, 0.5);
            for (i, m) in full.matches.iter().enumerate() {
                if m.is_none() {
                    let mut fewer = dets.clone();
                    fewer.remove(i);
                    prop_assert!(brute_force_ap(&fewer, &gts) >= full.ap - 1e-15);
                }
            }
        }

        #[test]
        fn trajectory_error_translation_invariant(
            pts in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..20),
            line in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..8),
            tx in -100.0f64..100.0, ty in -100.0f64..100.0,
        ) {
            let p: Vec<_> = pts.iter().map(|&(x, y)| WorldPoint::new(x, y)).collect();
            let l: Vec<_> = line.iter().map(|&(x, y)| WorldPoint::new(x, y)).collect();
            let roi = RoiSpec::Circular { center: WorldPoint::new(0.0, 0.0), radius: 1e9 };
            let a = trajectory_error(&p, &l, &roi).unwrap();
            let shift = |w: &WorldPoint| WorldPoint::new(w.x + tx, w.y + ty);
            let roi2 = RoiSpec::Circular { center: WorldPoint::new(tx, ty), radius: 1e9 };
            let b = trajectory_error(&p.iter().map(shift).collect::<Vec<_>>(), &l.iter().map(shift).collect::<Vec<_>>(), &roi2).unwrap();
            prop_assert!((a.all.mean - b.all.mean).abs() < 1e-9);
            prop_assert!((a.all.std - b.all.std).abs() < 1e-9);
        }

        #[test]
        fn ap_independent_of_input_order(
            det in proptest::collection::vec((0u8..10, 0u32..1000), 1..8),
        ) {
            let gts: Vec<GtBox> = (0..5).map(|x| GtBox { image: 0, bbox: unit_box(x as f64 * 2.0) }).collect();
            let dets: Vec<ScoredBox> = det.iter().enumerate().map(|(i, &(x, c))| ScoredBox {
                image: 0, id: i as u64, bbox: unit_box(x as f64 * 2.0), confidence: c as f64 / 1000.0,
            }).collect();
            let mut rev = dets.clone();
            rev.reverse();
            prop_assert_eq!(voc07_ap(&dets, &gts, 0.5).ap, voc07_ap(&rev, &gts, 0.5).ap);
        }
    }
}
