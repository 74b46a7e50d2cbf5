//! Run configuration and camera setup loading.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{io, CameraSetup};
use crate::calibration::CalibrationFile;
use crate::error::{Error, Result};
use crate::fusion::FusionParams;
use crate::localization::{read_mask, sha256_hex};
use crate::metrics::DEFAULT_ROI_RADIUS;
use crate::sim::{Scenario, SensorModel};
use crate::tracker::TrackerParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    pub roi_radius: f64,
    /// Gate for pairing tracks with ground truth when counting id switches.
    pub id_match_dist: f64,
    pub iou_threshold: f64,
    /// Vertex spacing of the ground-truth polylines (meters).
    pub polyline_step: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { roi_radius: DEFAULT_ROI_RADIUS, id_match_dist: 2.0, iou_threshold: 0.5, polyline_step: 0.2 }
    }
}

/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scenario: Option<PathBuf>,
    /// Calibration files; cameras without one localize with their exact rig.
    pub calibrations: Vec<PathBuf>,
    /// Directory holding `mask_cam{id}.bin` files; masks are built in
    /// memory when absent.
    pub mask_dir: Option<PathBuf>,
    pub tracker: TrackerParams,
    pub fusion: FusionParams,
    /// Replaces the scenario's sensor model.
    pub sensor: Option<SensorModel>,
    pub output_dir: Option<PathBuf>,
    /// Replaces the scenario seed.
    pub seed: Option<u64>,
    pub eval: EvalParams,
}

impl PipelineConfig {
    /// Parses the file and returns it with the hex SHA-256 of its bytes.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut cfg: PipelineConfig = serde_json::from_slice(&bytes)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.scenario.as_mut().map(fix);
        cfg.mask_dir.as_mut().map(fix);
        cfg.output_dir.as_mut().map(fix);
        cfg.calibrations.iter_mut().for_each(fix);
        Ok((cfg, sha256_hex(&bytes)))
    }

    /// Hash used when no config file was given.
    pub fn default_hash() -> Result<String> {
        Ok(sha256_hex(&serde_json::to_vec(&PipelineConfig::default())?))
    }

    /// Applies the seed and sensor overrides.
    pub fn apply(&self, scenario: &mut Scenario) {
        if let Some(seed) = self.seed {
            scenario.seed = seed;
        }
        if let Some(sensor) = self.sensor {
            scenario.sensor = sensor;
        }
    }
}

/// Localization setups for every scenario camera, from calibration files
/// and stored masks where configured.
pub fn load_setups(scenario: &Scenario, cfg: &PipelineConfig) -> Result<Vec<CameraSetup>> {
    let mut files = Vec::new();
    for p in &cfg.calibrations {
        let f: CalibrationFile = io::read_json(p)?;
        if files.iter().any(|g: &CalibrationFile| g.camera_id == f.camera_id) {
            return Err(Error::InvalidParameter(format!("two calibration files for camera {}", f.camera_id)));
        }
        files.push(f);
    }
    scenario
        .cameras
        .par_iter()
        .map(|c| {
            let rig = match files.iter().find(|f| f.camera_id == c.camera_id) {
                Some(f) => {
                    f.rig.validate()?;
                    f.rig.clone()
                }
                None => c.rig()?,
            };
            let position = c.ground_position();
            match &cfg.mask_dir {
                Some(dir) => {
                    let (sidecar, map) = read_mask(dir, c.camera_id)?;
                    if sidecar.width != rig.image_width || sidecar.height != rig.image_height {
                        return Err(Error::InvalidParameter(format!(
                            "mask for camera {} is {}x{}, rig is {}x{}",
                            c.camera_id, sidecar.width, sidecar.height, rig.image_width, rig.image_height
                        )));
                    }
                    Ok(CameraSetup { camera_id: c.camera_id, position, rig, map })
                }
                None => CameraSetup::from_rig(c.camera_id, position, rig),
            }
        })
        .collect()
}
