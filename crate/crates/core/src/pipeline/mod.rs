//! End-to-end run: observe -> localize -> fuse -> track -> record, then
//! evaluation against the scenario's ground truth.

pub mod config;
pub mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{load_setups, EvalParams, PipelineConfig};

use crate::calibration::CameraRig;
use crate::error::{Error, Result};
use crate::fusion::{fuse, FusionParams, RegionPartition};
use crate::geo::WorldPoint;
use crate::localization::{sha256_hex, Detection, LocalizationMap, WorldDetection};
use crate::metrics::{
    fusion_comparison, id_consistency, pose_size_error, project_onto_polyline, trajectory_error, voc07_ap, Aabb,
    EvalReport, GtBox, LabelledPoint, PoseSizeSample, RoiSpec, RunErrors, ScoredBox, Stats, TripError,
};
use crate::sim::{gen_ground_truth, observe, GroundTruthFrame, Scenario};
use crate::tracker::{write_track_rows, TrackSnapshot, Tracker, TrackerParams, TRACK_HEADER};

/// Localization side of one camera: the rig it was calibrated to and its
/// lookup masks.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSetup {
    pub camera_id: u32,
    pub position: WorldPoint,
    pub rig: CameraRig,
    pub map: LocalizationMap,
}

impl CameraSetup {
    pub fn from_rig(camera_id: u32, position: WorldPoint, rig: CameraRig) -> Result<Self> {
        let map = LocalizationMap::build(&rig)?;
        Ok(Self { camera_id, position, rig, map })
    }
}

/// Setups built from the simulator's exact rigs.
pub fn exact_setups(scenario: &Scenario) -> Result<Vec<CameraSetup>> {
    scenario
        .cameras
        .par_iter()
        .map(|c| CameraSetup::from_rig(c.camera_id, c.ground_position(), c.rig()?))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub tracker: TrackerParams,
    pub fusion: FusionParams,
}

pub const STAGES: [&str; 5] = ["observe", "localize", "fuse", "track", "record"];

/// Wall-clock totals per stage (milliseconds).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub observe_ms: f64,
    pub localize_ms: f64,
    pub fuse_ms: f64,
    pub track_ms: f64,
    pub record_ms: f64,
}

impl StageTimings {
    /// Everything downstream of the detector.
    pub fn post_detector_ms(&self) -> f64 {
        self.localize_ms + self.fuse_ms + self.track_ms + self.record_ms
    }

    pub fn per_frame(&self, frames: u64) -> BTreeMap<String, f64> {
        let n = frames.max(1) as f64;
        BTreeMap::from([
            ("observe".to_string(), self.observe_ms / n),
            ("localize".to_string(), self.localize_ms / n),
            ("fuse".to_string(), self.fuse_ms / n),
            ("track".to_string(), self.track_ms / n),
            ("record".to_string(), self.record_ms / n),
        ])
    }
}

/// CSV bytes produced by the record stage, headers included.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Recorded {
    pub detections: Vec<u8>,
    pub localized: Vec<u8>,
    pub fused: Vec<u8>,
    pub tracks: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub ground_truth: Vec<GroundTruthFrame>,
    pub detections: Vec<Detection>,
    /// Every detection that localized, before fusion.
    pub localized: Vec<WorldDetection>,
    pub fused: Vec<WorldDetection>,
    pub tracks: Vec<TrackSnapshot>,
    pub recorded: Recorded,
    pub timings: StageTimings,
    /// Stage names in execution order for one frame.
    pub stage_log: Vec<String>,
    /// Detections whose pixel had no ground coverage in the masks.
    pub dropped_uncovered: usize,
    pub frames: u64,
    pub cameras: usize,
}

impl RunOutput {
    /// Aggregate camera-frames per second through localize, fuse, track and record.
    pub fn post_detector_fps(&self) -> f64 {
        let secs = self.timings.post_detector_ms() / 1000.0;
        if secs > 0.0 {
            (self.frames as usize * self.cameras) as f64 / secs
        } else {
            f64::INFINITY
        }
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

fn stage_err(stage: &'static str, frame: u64) -> impl Fn(Error) -> Error {
    move |e| Error::Stage { stage, frame, source: Box::new(e) }
}

/// Runs the scenario. Observation uses the simulator's exact cameras;
/// localization uses `setups`, which may come from calibration.
pub fn run(scenario: &Scenario, setups: &[CameraSetup], opts: &RunOptions) -> Result<RunOutput> {
    let ground_truth = gen_ground_truth(scenario)?;
    let obs_rigs: Vec<CameraRig> = scenario.cameras.par_iter().map(|c| c.rig()).collect::<Result<_>>()?;
    let mut by_id: BTreeMap<u32, &CameraSetup> = BTreeMap::new();
    for s in setups {
        by_id.insert(s.camera_id, s);
    }
    for c in &scenario.cameras {
        if !by_id.contains_key(&c.camera_id) {
            return Err(Error::InvalidParameter(format!("no localization setup for camera {}", c.camera_id)));
        }
    }
    let positions: Vec<(u32, WorldPoint)> = setups.iter().map(|s| (s.camera_id, s.position)).collect();
    let partition = RegionPartition::new(&positions)?;
    let mut tracker = Tracker::new(opts.tracker)?;

    let mut timings = StageTimings::default();
    let mut stage_log = Vec::new();
    let mut recorded = Recorded::default();
    {
        use std::io::Write;
        writeln!(recorded.detections, "{}", io::DETECTION_HEADER)?;
        writeln!(recorded.localized, "{}", io::FUSED_HEADER)?;
        writeln!(recorded.fused, "{}", io::FUSED_HEADER)?;
        writeln!(recorded.tracks, "{TRACK_HEADER}")?;
    }
    let mut detections = Vec::new();
    let mut localized = Vec::new();
    let mut fused_all = Vec::new();
    let mut tracks = Vec::new();
    let mut dropped = 0;

    for gt in &ground_truth {
        let f = gt.frame;
        let log = |stage_log: &mut Vec<String>, s: &str| {
            if f == 0 {
                stage_log.push(s.to_string());
            }
        };

        let t0 = Instant::now();
        let observed: Vec<Vec<Detection>> = scenario
            .cameras
            .par_iter()
            .zip(obs_rigs.par_iter())
            .map(|(c, rig)| observe(gt, c, rig, &scenario.sensor, scenario.seed))
            .collect::<Result<_>>()
            .map_err(stage_err("observe", f))?;
        timings.observe_ms += ms(t0);
        log(&mut stage_log, "observe");

        let t0 = Instant::now();
        let mut per_camera: BTreeMap<u32, Vec<WorldDetection>> = BTreeMap::new();
        for (c, dets) in scenario.cameras.iter().zip(&observed) {
            let setup = by_id[&c.camera_id];
            let out = per_camera.entry(c.camera_id).or_default();
            for d in dets {
                match setup.map.localize(d) {
                    Ok(w) => out.push(w),
                    Err(Error::Uncovered { .. } | Error::OutOfImage { .. }) => dropped += 1,
                    Err(e) => return Err(stage_err("localize", f)(e)),
                }
            }
        }
        timings.localize_ms += ms(t0);
        log(&mut stage_log, "localize");

        let t0 = Instant::now();
        let fused = fuse(&per_camera, &partition, &opts.fusion);
        timings.fuse_ms += ms(t0);
        log(&mut stage_log, "fuse");

        let t0 = Instant::now();
        let snaps = tracker.step(&fused, gt.timestamp).map_err(stage_err("track", f))?;
        timings.track_ms += ms(t0);
        log(&mut stage_log, "track");

        let t0 = Instant::now();
        for dets in &observed {
            io::write_detection_rows(&mut recorded.detections, dets).map_err(stage_err("record", f))?;
        }
        for dets in per_camera.values() {
            io::write_world_detection_rows(&mut recorded.localized, dets).map_err(stage_err("record", f))?;
        }
        io::write_world_detection_rows(&mut recorded.fused, &fused).map_err(stage_err("record", f))?;
        write_track_rows(&mut recorded.tracks, &snaps).map_err(stage_err("record", f))?;
        timings.record_ms += ms(t0);
        log(&mut stage_log, "record");

        detections.extend(observed.into_iter().flatten());
        localized.extend(per_camera.into_values().flatten());
        fused_all.extend(fused);
        tracks.extend(snaps);
    }

    Ok(RunOutput {
        frames: ground_truth.len() as u64,
        ground_truth,
        detections,
        localized,
        fused: fused_all,
        tracks,
        recorded,
        timings,
        stage_log,
        dropped_uncovered: dropped,
        cameras: scenario.cameras.len(),
    })
}

/// Hex SHA-256 of the scenario's canonical JSON; identifies runs that can
/// be compared.
pub fn scenario_key(scenario: &Scenario) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(scenario)?))
}

/// Per-point errors against each vehicle's trip polyline, with the in-ROI
/// flag of the projection foot.
fn point_errors(
    dets: &[&WorldDetection],
    polylines: &BTreeMap<u64, Vec<WorldPoint>>,
    roi: &RoiSpec,
) -> Vec<(u64, f64, bool)> {
    dets.par_iter()
        .filter_map(|d| {
            let id = d.gt_id?;
            let line = polylines.get(&id)?;
            let (dist, foot) = project_onto_polyline(&d.position, line);
            Some((id, dist, roi.contains(&foot)))
        })
        .collect()
}

/// Everything needed to score a run; all of it can be read back from a run
/// directory.
pub struct EvalInputs<'a> {
    pub scenario: &'a Scenario,
    pub ground_truth: &'a [GroundTruthFrame],
    pub localized: &'a [WorldDetection],
    pub fused: &'a [WorldDetection],
    pub tracks: &'a [TrackSnapshot],
}

pub fn evaluate(inputs: &EvalInputs, eval: &EvalParams, fusion: &FusionParams) -> Result<EvalReport> {
    let scenario = inputs.scenario;
    let key = scenario_key(scenario)?;
    let polylines: BTreeMap<u64, Vec<WorldPoint>> = scenario
        .paths()?
        .into_iter()
        .map(|(id, (_, p))| (id, p.polyline(eval.polyline_step)))
        .collect();
    let cameras: Vec<(u32, WorldPoint)> = scenario.cameras.iter().map(|c| (c.camera_id, c.ground_position())).collect();
    let roi = RoiSpec::Union {
        parts: cameras.iter().map(|&(_, p)| RoiSpec::Circular { center: p, radius: eval.roi_radius }).collect(),
    };

    // fused localization error
    let fused_refs: Vec<&WorldDetection> = inputs.fused.iter().collect();
    let fused_err = point_errors(&fused_refs, &polylines, &roi);
    let all: Vec<f64> = fused_err.iter().map(|e| e.1).collect();
    let inside: Vec<f64> = fused_err.iter().filter(|e| e.2).map(|e| e.1).collect();
    let outside: Vec<f64> = fused_err.iter().filter(|e| !e.2).map(|e| e.1).collect();

    let mut trips = Vec::new();
    for (id, line) in &polylines {
        let pts: Vec<WorldPoint> = inputs.fused.iter().filter(|d| d.gt_id == Some(*id)).map(|d| d.position).collect();
        if pts.is_empty() {
            continue;
        }
        trips.push(TripError { vehicle_id: *id, error: trajectory_error(&pts, line, &roi)? });
    }

    // single-camera streams: confident localized detections of each camera
    let mut single = Vec::new();
    for &(cid, pos) in &cameras {
        let own: Vec<&WorldDetection> = inputs
            .localized
            .iter()
            .filter(|d| d.camera_id == cid && d.confidence >= fusion.conf_threshold)
            .collect();
        let own_roi = RoiSpec::Circular { center: pos, radius: eval.roi_radius };
        let errors = point_errors(&own, &polylines, &own_roi).into_iter().map(|e| e.1).collect();
        single.push(RunErrors { label: format!("camera {cid}"), scenario_key: key.clone(), errors });
    }
    let fused_run = RunErrors { label: "fused".into(), scenario_key: key, errors: all.clone() };
    let comparison = fusion_comparison(&single, &fused_run).ok();

    // visible ground truth: vehicles that project into at least one camera
    let rigs: Vec<CameraRig> = scenario.cameras.iter().map(|c| c.rig()).collect::<Result<_>>()?;
    let mut gt_boxes = Vec::new();
    let mut gt_meta = Vec::new();
    let mut gt_points = Vec::new();
    for f in inputs.ground_truth {
        for v in &f.vehicles {
            if !rigs.iter().any(|r| r.world_to_pixel(v.position).is_ok()) {
                continue;
            }
            gt_boxes.push(GtBox { image: f.frame, bbox: Aabb::of_footprint(v.position, v.yaw, v.width, v.length) });
            gt_meta.push(v);
            gt_points.push(LabelledPoint { timestamp: f.timestamp, label: v.vehicle_id, position: v.position });
        }
    }

    let scored: Vec<ScoredBox> = inputs
        .fused
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let [w, l] = d.footprint();
            ScoredBox { image: d.frame, id: i as u64, bbox: Aabb::of_footprint(d.position, d.yaw, w, l), confidence: d.confidence }
        })
        .collect();
    let ap = voc07_ap(&scored, &gt_boxes, eval.iou_threshold);
    let samples: Vec<PoseSizeSample> = ap
        .matches
        .iter()
        .enumerate()
        .filter_map(|(i, m)| {
            let g = gt_meta[(*m)?];
            let d = &inputs.fused[i];
            Some(PoseSizeSample {
                yaw_pred: d.yaw,
                yaw_gt: g.yaw,
                size_pred: d.footprint().to_vec(),
                size_gt: vec![g.width, g.length],
            })
        })
        .collect();
    let (yaw_err_deg, size_err_m) = pose_size_error(&samples);

    let track_points: Vec<LabelledPoint> = inputs
        .tracks
        .iter()
        .map(|t| LabelledPoint { timestamp: t.timestamp, label: t.track_id, position: WorldPoint::new(t.x, t.y) })
        .collect();
    let ids = id_consistency(&track_points, &gt_points, eval.id_match_dist);

    Ok(EvalReport {
        ap: ap.ap,
        loc_all: Stats::of(&all),
        loc_in_roi: Stats::of(&inside),
        loc_out_roi: Stats::of(&outside),
        yaw_err_deg,
        size_err_m,
        id_switches: ids.id_switches,
        fusion: comparison,
        trips,
    })
}

/// Written next to the run outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub scenario_sha256: String,
    pub version: String,
    pub seed: u64,
    pub frames: u64,
    pub cameras: usize,
    pub stage_log: Vec<String>,
    pub ms_per_frame: BTreeMap<String, f64>,
    pub post_detector_fps: f64,
    pub counts: BTreeMap<String, usize>,
}

impl RunManifest {
    pub fn new(config_sha256: String, scenario: &Scenario, out: &RunOutput) -> Result<Self> {
        let track_ids: BTreeSet<u64> = out.tracks.iter().map(|t| t.track_id).collect();
        Ok(Self {
            config_sha256,
            scenario_sha256: scenario_key(scenario)?,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: scenario.seed,
            frames: out.frames,
            cameras: out.cameras,
            stage_log: out.stage_log.clone(),
            ms_per_frame: out.timings.per_frame(out.frames),
            post_detector_fps: out.post_detector_fps(),
            counts: BTreeMap::from([
                ("detections".to_string(), out.detections.len()),
                ("localized".to_string(), out.localized.len()),
                ("fused".to_string(), out.fused.len()),
                ("track_rows".to_string(), out.tracks.len()),
                ("track_ids".to_string(), track_ids.len()),
                ("dropped_uncovered".to_string(), out.dropped_uncovered),
            ]),
        })
    }
}

/// Writes CSVs, the scenario copy, the report and the manifest into `paths.dir`.
pub fn write_run(
    paths: &io::RunPaths,
    scenario: &Scenario,
    out: &RunOutput,
    report: &EvalReport,
    manifest: &RunManifest,
) -> Result<()> {
    std::fs::create_dir_all(&paths.dir)?;
    std::fs::write(paths.detections(), &out.recorded.detections)?;
    std::fs::write(paths.localized(), &out.recorded.localized)?;
    std::fs::write(paths.fused(), &out.recorded.fused)?;
    std::fs::write(paths.tracks(), &out.recorded.tracks)?;
    let mut gt = Vec::new();
    crate::sim::write_ground_truth_csv(&mut gt, &out.ground_truth)?;
    std::fs::write(paths.ground_truth(), gt)?;
    io::write_json(&paths.scenario(), scenario)?;
    io::write_json(&paths.report(), report)?;
    io::write_json(&paths.manifest(), manifest)?;
    Ok(())
}

/// Re-scores a stored run directory.
pub fn evaluate_dir(paths: &io::RunPaths, eval: &EvalParams, fusion: &FusionParams) -> Result<EvalReport> {
    paths.require()?;
    let scenario: Scenario = io::read_json(&paths.scenario())?;
    let open = |p: std::path::PathBuf| {
        std::fs::File::open(&p).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))
    };
    let ground_truth = crate::sim::read_ground_truth_csv(open(paths.ground_truth())?)?;
    let localized = io::read_world_detections_csv(open(paths.localized())?)?;
    let fused = io::read_world_detections_csv(open(paths.fused())?)?;
    let tracks = crate::tracker::read_tracks_csv(open(paths.tracks())?)?;
    evaluate(
        &EvalInputs { scenario: &scenario, ground_truth: &ground_truth, localized: &localized, fused: &fused, tracks: &tracks },
        eval,
        fusion,
    )
}
