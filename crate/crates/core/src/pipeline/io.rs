//! CSV schemas for detection streams and the run directory layout.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::PixelPoint;
use crate::error::{Error, Result};
use crate::geo::WorldPoint;
use crate::localization::{Detection, WorldDetection};

pub const DETECTION_HEADER: &str = "frame,timestamp,camera_id,u,v,heading_px,w,l,class_id,confidence,gt_id";
pub const FUSED_HEADER: &str = "frame,timestamp,camera_id,u,v,x,y,yaw,s,r,class_id,confidence,gt_id";

fn gt_field(id: Option<u64>) -> String {
    id.map(|g| g.to_string()).unwrap_or_default()
}

pub fn write_detection_rows<W: Write>(mut w: W, dets: &[Detection]) -> Result<()> {
    for d in dets {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            d.frame,
            d.timestamp,
            d.camera_id,
            d.bottom_center.u,
            d.bottom_center.v,
            d.heading_px,
            d.size[0],
            d.size[1],
            d.class_id,
            d.confidence,
            gt_field(d.gt_id)
        )?;
    }
    Ok(())
}

pub fn write_world_detection_rows<W: Write>(mut w: W, dets: &[WorldDetection]) -> Result<()> {
    for d in dets {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            d.frame,
            d.timestamp,
            d.camera_id,
            d.pixel.u,
            d.pixel.v,
            d.position.x,
            d.position.y,
            d.yaw,
            d.s,
            d.r,
            d.class_id,
            d.confidence,
            gt_field(d.gt_id)
        )?;
    }
    Ok(())
}

pub fn write_detections_csv<W: Write>(mut w: W, dets: &[Detection]) -> Result<()> {
    writeln!(w, "{DETECTION_HEADER}")?;
    write_detection_rows(w, dets)
}

pub fn write_world_detections_csv<W: Write>(mut w: W, dets: &[WorldDetection]) -> Result<()> {
    writeln!(w, "{FUSED_HEADER}")?;
    write_world_detection_rows(w, dets)
}

#[derive(Deserialize)]
struct DetectionRow {
    frame: u64,
    timestamp: f64,
    camera_id: u32,
    u: f64,
    v: f64,
    heading_px: f64,
    w: f64,
    l: f64,
    class_id: u32,
    confidence: f64,
    gt_id: Option<u64>,
}

#[derive(Deserialize)]
struct FusedRow {
    frame: u64,
    timestamp: f64,
    camera_id: u32,
    u: f64,
    v: f64,
    x: f64,
    y: f64,
    yaw: f64,
    s: f64,
    r: f64,
    class_id: u32,
    confidence: f64,
    gt_id: Option<u64>,
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(reader: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Parse { line: i + 2, message: e.to_string() }))
        .collect()
}

pub fn read_detections_csv<R: Read>(reader: R) -> Result<Vec<Detection>> {
    Ok(read_rows::<_, DetectionRow>(reader)?
        .into_iter()
        .map(|r| Detection {
            frame: r.frame,
            timestamp: r.timestamp,
            camera_id: r.camera_id,
            bottom_center: PixelPoint::new(r.u, r.v),
            heading_px: r.heading_px,
            size: [r.w, r.l],
            class_id: r.class_id,
            confidence: r.confidence,
            gt_id: r.gt_id,
        })
        .collect())
}

pub fn read_world_detections_csv<R: Read>(reader: R) -> Result<Vec<WorldDetection>> {
    Ok(read_rows::<_, FusedRow>(reader)?
        .into_iter()
        .map(|r| WorldDetection {
            frame: r.frame,
            timestamp: r.timestamp,
            camera_id: r.camera_id,
            pixel: PixelPoint::new(r.u, r.v),
            position: WorldPoint::new(r.x, r.y),
            yaw: r.yaw,
            s: r.s,
            r: r.r,
            class_id: r.class_id,
            confidence: r.confidence,
            gt_id: r.gt_id,
        })
        .collect())
}

/// File names inside a run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn detections(&self) -> PathBuf {
        self.dir.join("detections.csv")
    }

    pub fn localized(&self) -> PathBuf {
        self.dir.join("localized.csv")
    }

    pub fn fused(&self) -> PathBuf {
        self.dir.join("fused.csv")
    }

    pub fn tracks(&self) -> PathBuf {
        self.dir.join("tracks.csv")
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.dir.join("gt.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    pub fn scenario(&self) -> PathBuf {
        self.dir.join("scenario.json")
    }

    /// Fails with an I/O error naming the directory when it is missing.
    pub fn require(&self) -> Result<()> {
        if !self.dir.is_dir() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("run directory {} does not exist", self.dir.display()),
            )));
        }
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(gt: Option<u64>) -> Detection {
        Detection {
            frame: 4,
            timestamp: 0.4,
            camera_id: 2,
            bottom_center: PixelPoint::new(100.25, 7.5),
            heading_px: -1.0,
            size: [1.8, 4.5],
            class_id: 1,
            confidence: 0.875,
            gt_id: gt,
        }
    }

    #[test]
    fn detection_round_trip() {
        let dets = vec![det(Some(3)), det(None)];
        let mut buf = Vec::new();
        write_detections_csv(&mut buf, &dets).unwrap();
        assert_eq!(read_detections_csv(buf.as_slice()).unwrap(), dets);
    }

    #[test]
    fn world_detection_round_trip() {
        let d = WorldDetection {
            frame: 1,
            timestamp: 0.1,
            camera_id: 3,
            pixel: PixelPoint::new(1.0, 2.0),
            position: WorldPoint::new(-12.5, 3.0625),
            yaw: 0.3,
            s: 8.1,
            r: 2.5,
            class_id: 0,
            confidence: 0.6,
            gt_id: Some(9),
        };
        let mut buf = Vec::new();
        write_world_detections_csv(&mut buf, std::slice::from_ref(&d)).unwrap();
        assert_eq!(read_world_detections_csv(buf.as_slice()).unwrap(), vec![d]);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let text = format!("{DETECTION_HEADER}\n1,0.1,0,1,2,0,1,1,0,0.5,\n1,0.1,zero,1,2,0,1,1,0,0.5,\n");
        match read_detections_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_run_dir_is_an_io_error() {
        let p = RunPaths::new("/definitely/not/here");
        assert!(matches!(p.require(), Err(Error::Io(_))));
    }
}
