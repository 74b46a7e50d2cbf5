mod plot;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use roadside_core::calibration::{
    calibrate, calibration_report, read_landmarks_csv, write_landmarks_csv, CalibrationFile, CalibrationOptions,
    CameraSpec,
};
use roadside_core::error::{Error, ErrorKind, Result};
use roadside_core::localization::{write_mask, LocalizationMap};
use roadside_core::metrics::{EvalReport, RoiSpec};
use roadside_core::pipeline::config::{load_setups, PipelineConfig};
use roadside_core::pipeline::io::{read_json, write_json, RunPaths};
use roadside_core::pipeline::{evaluate, evaluate_dir, run, write_run, EvalInputs, RunManifest, RunOptions, STAGES};
use roadside_core::sim::Scenario;

#[derive(Parser)]
#[command(name = "roadside", version, about = "Roadside camera calibration, localization, fusion and tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a default scenario with camera specs and synthetic landmark files.
    Init(InitArgs),
    /// Fit a camera rig to surveyed landmarks.
    Calibrate(CalibrateArgs),
    /// Build lookup masks from calibration files.
    GenMasks(GenMasksArgs),
    /// Simulate, localize, fuse, track and score a scenario.
    Run(RunArgs),
    /// Re-score a stored run directory.
    Eval(EvalArgs),
    /// Draw SVG charts for a run directory.
    Plot(PlotArgs),
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    vehicles: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 10)]
    landmarks_per_segment: usize,
    /// Pixel noise of the synthetic landmark annotations.
    #[arg(long, default_value_t = 0.5)]
    landmark_noise: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV with `id,pixel_u,pixel_v,lon,lat`.
    #[arg(long)]
    landmarks: PathBuf,
    /// Camera spec JSON.
    #[arg(long)]
    camera: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// RANSAC seed.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file with calibration options.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenMasksArgs {
    #[arg(long = "calibration", required = true)]
    calibrations: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory.
    run: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Run directory.
    run: PathBuf,
    /// Directory for the SVG files; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Init(a) => cmd_init(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::GenMasks(a) => cmd_gen_masks(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Plot(a) => cmd_plot(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Io => 4,
            })
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn cmd_init(a: &InitArgs) -> Result<()> {
    let mut scenario = Scenario::default_roundabout(a.vehicles, a.seed)?;
    scenario.duration = a.duration;
    scenario.validate()?;
    for sub in ["cameras", "landmarks", "calibration", "masks"] {
        std::fs::create_dir_all(a.out.join(sub))?;
    }
    write_json(&a.out.join("scenario.json"), &scenario)?;
    let mut config = PipelineConfig {
        scenario: Some("scenario.json".into()),
        mask_dir: Some("masks".into()),
        output_dir: Some("run".into()),
        ..PipelineConfig::default()
    };
    for cam in &scenario.cameras {
        let id = cam.camera_id;
        let rig = cam.rig()?;
        let spec = CameraSpec {
            camera_id: id,
            kind: cam.kind(),
            image_width: cam.image_width,
            image_height: cam.image_height,
            origin: scenario.origin,
            position: Some(cam.ground_position()),
            intrinsics: rig.lens.radial().is_none().then_some(rig.intrinsics),
            segments: Some(cam.segments()),
            theta_max: None,
        };
        write_json(&a.out.join(format!("cameras/cam{id}.json")), &spec)?;
        let pairs = cam.synthetic_landmarks(a.landmarks_per_segment, 40.0, a.landmark_noise, a.seed ^ u64::from(id))?;
        let f = File::create(a.out.join(format!("landmarks/cam{id}.csv")))?;
        write_landmarks_csv(f, &pairs, &scenario.origin)?;
        config.calibrations.push(format!("calibration/cam{id}.json").into());
    }
    write_json(&a.out.join("config.json"), &config)?;
    println!(
        "wrote {} with {} cameras; calibrate each camera into calibration/, build masks into masks/, then run with --config",
        a.out.display(),
        scenario.cameras.len()
    );
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<()> {
    let spec: CameraSpec = read_json(&a.camera)?;
    let mut opts: CalibrationOptions = match &a.config {
        Some(p) => read_json(p)?,
        None => CalibrationOptions::default(),
    };
    if let Some(seed) = a.seed {
        opts.ransac.seed = seed;
    }
    let pairs = read_landmarks_csv(open(&a.landmarks)?, &spec.origin)?;
    let cal = calibrate(&pairs, &spec, &opts)?;
    let roi = RoiSpec::circular(spec.position.unwrap_or_default());
    let report = calibration_report(&cal.rig, &pairs, &roi);
    print!("{}", report.to_table());
    println!(
        "camera {}: rmse {:.6} m over {} of {} landmarks ({} LM iterations)",
        spec.camera_id,
        cal.rmse,
        cal.inliers.iter().filter(|&&m| m).count(),
        pairs.len(),
        cal.lm_iterations
    );
    let file = CalibrationFile {
        camera_id: spec.camera_id,
        origin: spec.origin,
        position: spec.position,
        rig: cal.rig,
        rmse_m: cal.rmse,
    };
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("calibration_cam{}.json", spec.camera_id)));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_json(&out, &file)
}

fn cmd_gen_masks(a: &GenMasksArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    for path in &a.calibrations {
        let file: CalibrationFile = read_json(path)?;
        file.rig.validate()?;
        let map = LocalizationMap::build(&file.rig)?;
        let sidecar = write_mask(&a.out, file.camera_id, &file.origin, &map)?;
        println!(
            "camera {}: {}x{} mask, {} covered pixels, sha256 {}",
            file.camera_id,
            sidecar.width,
            sidecar.height,
            map.covered_count(),
            sidecar.checksum
        );
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let (cfg, hash) = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => (PipelineConfig::default(), PipelineConfig::default_hash()?),
    };
    let scenario_path = a
        .scenario
        .clone()
        .or_else(|| cfg.scenario.clone())
        .ok_or_else(|| Error::InvalidParameter("no scenario given (--scenario or config `scenario`)".into()))?;
    let mut scenario: Scenario = read_json(&scenario_path)?;
    cfg.apply(&mut scenario);
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    scenario.validate()?;
    let out_dir = a.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("run"));

    let setups = load_setups(&scenario, &cfg)?;
    let out = run(&scenario, &setups, &RunOptions { tracker: cfg.tracker, fusion: cfg.fusion })?;
    let report = evaluate(
        &EvalInputs {
            scenario: &scenario,
            ground_truth: &out.ground_truth,
            localized: &out.localized,
            fused: &out.fused,
            tracks: &out.tracks,
        },
        &cfg.eval,
        &cfg.fusion,
    )?;
    let manifest = RunManifest::new(hash, &scenario, &out)?;
    write_run(&RunPaths::new(&out_dir), &scenario, &out, &report, &manifest)?;

    println!("stages: {}", manifest.stage_log.join(" -> "));
    for stage in STAGES {
        if let Some(ms) = manifest.ms_per_frame.get(stage) {
            println!("  {stage:<10} {ms:>8.3} ms/frame");
        }
    }
    println!(
        "{} frames x {} cameras, post-detector {:.0} frames/s",
        out.frames, out.cameras, manifest.post_detector_fps
    );
    print_report(&report);
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn print_report(r: &EvalReport) {
    println!("AP (VOC07, IoU 0.5): {:.4}", r.ap);
    for (name, s) in [("all", &r.loc_all), ("in-ROI", &r.loc_in_roi), ("out-ROI", &r.loc_out_roi)] {
        match s {
            Some(s) => println!("localization {name:<8} {:.3} ± {:.3} m (n={})", s.mean, s.std, s.count),
            None => println!("localization {name:<8} -"),
        }
    }
    println!("yaw error {:.2} deg, size error {:.3} m, id switches {}", r.yaw_err_deg, r.size_err_m, r.id_switches);
    if let Some(f) = &r.fusion {
        for (label, s) in &f.single {
            println!("  {label:<10} {:.3} ± {:.3} m", s.mean, s.std);
        }
        println!("  {:<10} {:.3} ± {:.3} m (ratio {:.3})", "fused", f.fused.mean, f.fused.std, f.ratio);
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?.0,
        None => PipelineConfig::default(),
    };
    let report = evaluate_dir(&RunPaths::new(&a.run), &cfg.eval, &cfg.fusion)?;
    print_report(&report);
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let paths = RunPaths::new(&a.run);
    paths.require()?;
    let out = a.out.clone().unwrap_or_else(|| a.run.clone());
    std::fs::create_dir_all(&out)?;
    for written in plot::write_all(&paths, &out)? {
        println!("wrote {}", written.display());
    }
    Ok(())
}
