//! Per-pixel lookup masks that lift image detections onto the ground plane.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::CameraRig;
use crate::camera::PixelPoint;
use crate::error::{Error, Result};
use crate::geo::{GeoOrigin, WorldPoint};

/// Image-space detection as produced by a detector head (or the simulator's
/// oracle detector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u64,
    pub timestamp: f64,
    pub camera_id: u32,
    pub bottom_center: PixelPoint,
    /// Direction of travel in the image (radians, atan2 of dv, du).
    pub heading_px: f64,
    /// Footprint width and length in meters.
    pub size: [f64; 2],
    pub class_id: u32,
    pub confidence: f64,
    /// Ground-truth vehicle, carried for evaluation only.
    pub gt_id: Option<u64>,
}

/// A detection lifted to the local ground frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDetection {
    pub frame: u64,
    pub timestamp: f64,
    pub camera_id: u32,
    pub pixel: PixelPoint,
    pub position: WorldPoint,
    pub yaw: f64,
    /// Footprint area (m²).
    pub s: f64,
    /// Length over width.
    pub r: f64,
    pub class_id: u32,
    pub confidence: f64,
    pub gt_id: Option<u64>,
}

impl WorldDetection {
    /// `(width, length)` recovered from area and aspect ratio.
    pub fn footprint(&self) -> [f64; 2] {
        [(self.s / self.r).sqrt(), (self.s * self.r).sqrt()]
    }
}

/// Rasterized pixel-to-world lookup. Pixel `(i, j)` (row, column) sits at
/// `u = j`, `v = i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationMap {
    pub width: usize,
    pub height: usize,
    pub m_x: Vec<f32>,
    pub m_y: Vec<f32>,
    /// 1-based segment of each pixel, 0 where uncovered.
    pub segment: Vec<u8>,
}

impl LocalizationMap {
    /// Projects every pixel center through the rig.
    pub fn build(rig: &CameraRig) -> Result<LocalizationMap> {
        rig.validate()?;
        if rig.segments.len() > u8::MAX as usize {
            return Err(Error::InvalidParameter("at most 255 segments fit the mask format".into()));
        }
        let (w, h) = (rig.image_width, rig.image_height);
        let rows: Vec<(Vec<f32>, Vec<f32>, Vec<u8>)> = (0..h)
            .into_par_iter()
            .map(|i| {
                let mut mx = vec![f32::NAN; w];
                let mut my = vec![f32::NAN; w];
                let mut sg = vec![0u8; w];
                for j in 0..w {
                    if let Ok((p, seg)) = rig.pixel_to_world(PixelPoint::new(j as f64, i as f64)) {
                        let (x, y) = (p.x as f32, p.y as f32);
                        if x.is_finite() && y.is_finite() {
                            mx[j] = x;
                            my[j] = y;
                            sg[j] = (seg + 1) as u8;
                        }
                    }
                }
                (mx, my, sg)
            })
            .collect();
        let mut map = LocalizationMap {
            width: w,
            height: h,
            m_x: Vec::with_capacity(w * h),
            m_y: Vec::with_capacity(w * h),
            segment: Vec::with_capacity(w * h),
        };
        for (mx, my, sg) in rows {
            map.m_x.extend(mx);
            map.m_y.extend(my);
            map.segment.extend(sg);
        }
        Ok(map)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + j
    }

    pub fn covered(&self, i: usize, j: usize) -> bool {
        self.segment[self.idx(i, j)] > 0
    }

    /// Raster value at an integer pixel, `None` when uncovered.
    pub fn at(&self, i: usize, j: usize) -> Option<WorldPoint> {
        let k = self.idx(i, j);
        (self.segment[k] > 0).then(|| WorldPoint::new(self.m_x[k] as f64, self.m_y[k] as f64))
    }

    pub fn covered_count(&self) -> usize {
        self.segment.iter().filter(|&&s| s > 0).count()
    }

    /// Bilinear lookup over the surrounding pixels. When a contributing
    /// neighbor is uncovered the nearest covered one of the four is used.
    pub fn lookup(&self, p: PixelPoint) -> Result<WorldPoint> {
        let (wmax, hmax) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(p.u >= 0.0 && p.v >= 0.0 && p.u <= wmax && p.v <= hmax) {
            return Err(Error::OutOfImage { u: p.u, v: p.v, width: self.width, height: self.height });
        }
        let j0 = (p.u.floor() as usize).min(self.width.saturating_sub(2));
        let i0 = (p.v.floor() as usize).min(self.height.saturating_sub(2));
        let j1 = (j0 + 1).min(self.width - 1);
        let i1 = (i0 + 1).min(self.height - 1);
        let fu = p.u - j0 as f64;
        let fv = p.v - i0 as f64;
        let corners = [
            (i0, j0, (1.0 - fu) * (1.0 - fv)),
            (i0, j1, fu * (1.0 - fv)),
            (i1, j0, (1.0 - fu) * fv),
            (i1, j1, fu * fv),
        ];
        let contributing = corners.iter().filter(|c| c.2 > 0.0);
        if contributing.clone().all(|&(i, j, _)| self.covered(i, j)) {
            let (mut x, mut y) = (0.0, 0.0);
            for &(i, j, w) in contributing {
                let k = self.idx(i, j);
                x += w * self.m_x[k] as f64;
                y += w * self.m_y[k] as f64;
            }
            return Ok(WorldPoint::new(x, y));
        }
        corners
            .iter()
            .filter(|&&(i, j, _)| self.covered(i, j))
            .min_by(|a, b| {
                let da = (a.1 as f64 - p.u).powi(2) + (a.0 as f64 - p.v).powi(2);
                let db = (b.1 as f64 - p.u).powi(2) + (b.0 as f64 - p.v).powi(2);
                da.total_cmp(&db)
            })
            .and_then(|&(i, j, _)| self.at(i, j))
            .ok_or(Error::Uncovered { u: p.u, v: p.v })
    }

    /// Lifts a detection: position by lookup, yaw from the world direction
    /// between the pixels one step behind and ahead along the image heading.
    pub fn localize(&self, d: &Detection) -> Result<WorldDetection> {
        let position = self.lookup(d.bottom_center)?;
        let (s, c) = d.heading_px.sin_cos();
        let p = d.bottom_center;
        let ahead = self.lookup(PixelPoint::new(p.u + c, p.v + s)).ok();
        let behind = self.lookup(PixelPoint::new(p.u - c, p.v - s)).ok();
        let (a, b) = match (ahead, behind) {
            (Some(a), Some(b)) => (a, b),
            (Some(a), None) => (a, position),
            (None, Some(b)) => (position, b),
            (None, None) => return Err(Error::Uncovered { u: p.u, v: p.v }),
        };
        let [w, l] = d.size;
        if !(w > 0.0 && l > 0.0) {
            return Err(Error::InvalidParameter(format!("detection footprint must be positive, got {w} x {l}")));
        }
        Ok(WorldDetection {
            frame: d.frame,
            timestamp: d.timestamp,
            camera_id: d.camera_id,
            pixel: d.bottom_center,
            position,
            yaw: (a.y - b.y).atan2(a.x - b.x),
            s: w * l,
            r: l / w,
            class_id: d.class_id,
            confidence: d.confidence,
            gt_id: d.gt_id,
        })
    }

    /// Little-endian `m_x`, `m_y` (f32, row-major) followed by the u8 segment raster.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(9 * n);
        for v in self.m_x.iter().chain(&self.m_y) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.segment);
        out
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<LocalizationMap> {
        let n = width * height;
        if bytes.len() != 9 * n {
            return Err(Error::Parse {
                line: 0,
                message: format!("mask payload has {} bytes, expected {} for {width}x{height}", bytes.len(), 9 * n),
            });
        }
        let floats = |chunk: &[u8]| -> Vec<f32> {
            chunk.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect()
        };
        Ok(LocalizationMap {
            width,
            height,
            m_x: floats(&bytes[..4 * n]),
            m_y: floats(&bytes[4 * n..8 * n]),
            segment: bytes[8 * n..].to_vec(),
        })
    }
}

/// JSON sidecar describing a mask binary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub width: usize,
    pub height: usize,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub camera_id: u32,
    /// Hex SHA-256 of the binary.
    pub checksum: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Paths of the binary and sidecar for `camera_id` inside `dir`.
pub fn mask_paths(dir: &Path, camera_id: u32) -> (PathBuf, PathBuf) {
    (dir.join(format!("mask_cam{camera_id}.bin")), dir.join(format!("mask_cam{camera_id}.json")))
}

pub fn write_mask(dir: &Path, camera_id: u32, origin: &GeoOrigin, map: &LocalizationMap) -> Result<MaskSidecar> {
    let (bin, json) = mask_paths(dir, camera_id);
    let bytes = map.to_bytes();
    let sidecar = MaskSidecar {
        width: map.width,
        height: map.height,
        origin_lon: origin.lon,
        origin_lat: origin.lat,
        camera_id,
        checksum: sha256_hex(&bytes),
    };
    fs::write(bin, &bytes)?;
    fs::write(json, serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(sidecar)
}

pub fn read_mask(dir: &Path, camera_id: u32) -> Result<(MaskSidecar, LocalizationMap)> {
    let (bin, json) = mask_paths(dir, camera_id);
    let sidecar: MaskSidecar = serde_json::from_slice(&fs::read(json)?)?;
    let bytes = fs::read(bin)?;
    let found = sha256_hex(&bytes);
    if found != sidecar.checksum {
        return Err(Error::Checksum { expected: sidecar.checksum, found });
    }
    let map = LocalizationMap::from_bytes(sidecar.width, sidecar.height, &bytes)?;
    Ok((sidecar, map))
}
