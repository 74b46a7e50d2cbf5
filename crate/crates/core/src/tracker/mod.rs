//! World-frame multi-object tracking: Kalman prediction, gated Hungarian
//! association and a hit/miss track lifecycle.

pub mod assignment;
pub mod kalman;

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::WorldPoint;
use crate::localization::WorldDetection;
use kalman::{KalmanFilter, Measurement, NoiseParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    /// Consecutive missed frames a track survives.
    pub max_age: u32,
    /// Hits needed before a track is reported.
    pub min_hits: u32,
    /// Association gate (meters).
    pub gate_dist: f64,
    pub noise: NoiseParams,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self { max_age: 3, min_hits: 2, gate_dist: 3.0, noise: NoiseParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub kf: KalmanFilter,
    pub time_since_update: u32,
    pub hits: u32,
    pub hit_streak: u32,
    pub confirmed: bool,
    pub class_id: u32,
    pub yaw: f64,
    pub last_timestamp: f64,
    pub camera_ids: BTreeSet<u32>,
    /// First measurement, kept until the second one fixes the rates.
    first: Option<(Measurement, f64)>,
}

impl Track {
    pub fn position(&self) -> WorldPoint {
        WorldPoint::new(self.kf.x[0], self.kf.x[1])
    }

    pub fn snapshot(&self, timestamp: f64) -> TrackSnapshot {
        let x = &self.kf.x;
        TrackSnapshot {
            timestamp,
            track_id: self.id,
            x: x[0],
            y: x[1],
            vx: x[4],
            vy: x[5],
            s: x[2],
            r: x[3],
            yaw: self.yaw,
            class_id: self.class_id,
            camera_ids: self.camera_ids.iter().copied().collect(),
        }
    }
}

/// Immutable copy of a track's state at one timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSnapshot {
    pub timestamp: f64,
    pub track_id: u64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub s: f64,
    pub r: f64,
    pub yaw: f64,
    pub class_id: u32,
    pub camera_ids: Vec<u32>,
}

fn measurement(d: &WorldDetection) -> Measurement {
    Measurement::new(d.position.x, d.position.y, d.s, d.r)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// `(track index, detection index)`.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Optimal assignment on Euclidean distance. Pairs beyond `gate_dist` are
/// priced above any feasible total before solving and split afterwards.
pub fn associate(tracks: &[WorldPoint], detections: &[WorldPoint], gate_dist: f64) -> Association {
    let (n, m) = (tracks.len(), detections.len());
    let dist = DMatrix::from_fn(n, m, |i, j| tracks[i].distance(&detections[j]));
    let feasible: f64 = dist.iter().filter(|&&d| d <= gate_dist).sum();
    let big = 1.0 + feasible;
    let cost = dist.map(|d| if d <= gate_dist { d } else { big });
    let rows = assignment::solve(&cost);

    let mut out = Association::default();
    let mut det_used = vec![false; m];
    for (i, c) in rows.iter().enumerate() {
        match c {
            Some(j) if dist[(i, *j)] <= gate_dist => {
                out.matches.push((i, *j));
                det_used[*j] = true;
            }
            _ => out.unmatched_tracks.push(i),
        }
    }
    out.unmatched_detections = (0..m).filter(|&j| !det_used[j]).collect();
    out
}

/// One tracker instance; `step` must be called with non-decreasing timestamps.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub params: TrackerParams,
    tracks: Vec<Track>,
    next_id: u64,
    last_timestamp: Option<f64>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Result<Self> {
        if params.max_age < 1 {
            return Err(Error::InvalidParameter("max_age must be at least 1".into()));
        }
        if !(params.gate_dist > 0.0) {
            return Err(Error::InvalidParameter("gate distance must be positive".into()));
        }
        Ok(Self { params, tracks: Vec::new(), next_id: 1, last_timestamp: None })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Predict, associate, update, spawn, prune. Returns confirmed tracks
    /// updated in this frame.
    pub fn step(&mut self, detections: &[WorldDetection], timestamp: f64) -> Result<Vec<TrackSnapshot>> {
        if let Some(last) = self.last_timestamp {
            if timestamp < last {
                return Err(Error::TimeRegression { last, got: timestamp });
            }
        }
        let dt = self.last_timestamp.map_or(0.0, |last| timestamp - last);
        self.last_timestamp = Some(timestamp);
        let noise = self.params.noise;

        for t in &mut self.tracks {
            if dt > 0.0 {
                t.kf.predict(dt, &noise)?;
            }
            t.time_since_update += 1;
        }

        let predicted: Vec<WorldPoint> = self.tracks.iter().map(Track::position).collect();
        let positions: Vec<WorldPoint> = detections.iter().map(|d| d.position).collect();
        let assoc = associate(&predicted, &positions, self.params.gate_dist);

        for &(ti, di) in &assoc.matches {
            let d = &detections[di];
            let t = &mut self.tracks[ti];
            let z = measurement(d);
            match t.first.take() {
                Some((z1, t1)) if timestamp > t1 => {
                    t.kf = KalmanFilter::from_two_measurements(&z1, &z, timestamp - t1, &noise)?;
                }
                _ => t.kf.update(&z, &noise)?,
            }
            t.time_since_update = 0;
            t.hits += 1;
            t.hit_streak += 1;
            t.class_id = d.class_id;
            t.yaw = d.yaw;
            t.last_timestamp = timestamp;
            t.camera_ids.insert(d.camera_id);
            if t.hits >= self.params.min_hits {
                t.confirmed = true;
            }
        }
        for &ti in &assoc.unmatched_tracks {
            self.tracks[ti].hit_streak = 0;
        }
        for &di in &assoc.unmatched_detections {
            let d = &detections[di];
            let z = measurement(d);
            self.tracks.push(Track {
                id: self.next_id,
                kf: KalmanFilter::from_measurement(&z, &noise),
                time_since_update: 0,
                hits: 1,
                hit_streak: 1,
                confirmed: self.params.min_hits <= 1,
                class_id: d.class_id,
                yaw: d.yaw,
                last_timestamp: timestamp,
                camera_ids: BTreeSet::from([d.camera_id]),
                first: Some((z, timestamp)),
            });
            self.next_id += 1;
        }
        let max_age = self.params.max_age;
        self.tracks.retain(|t| t.time_since_update <= max_age);

        Ok(self
            .tracks
            .iter()
            .filter(|t| t.confirmed && t.time_since_update == 0)
            .map(|t| t.snapshot(timestamp))
            .collect())
    }
}

pub const TRACK_HEADER: &str = "timestamp,track_id,x,y,vx,vy,s,r,yaw,class_id,camera_ids";

/// Rows without the header; camera ids are joined by `;`.
pub fn write_track_rows<W: Write>(mut w: W, tracks: &[TrackSnapshot]) -> Result<()> {
    for t in tracks {
        let cams: Vec<String> = t.camera_ids.iter().map(u32::to_string).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            t.timestamp, t.track_id, t.x, t.y, t.vx, t.vy, t.s, t.r, t.yaw, t.class_id, cams.join(";")
        )?;
    }
    Ok(())
}

pub fn write_tracks_csv<W: Write>(mut w: W, tracks: &[TrackSnapshot]) -> Result<()> {
    writeln!(w, "{TRACK_HEADER}")?;
    write_track_rows(w, tracks)
}

pub fn read_tracks_csv<R: std::io::Read>(reader: R) -> Result<Vec<TrackSnapshot>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse { line, message: format!("bad field {i}") })
        };
        let cams = rec.get(10).unwrap_or("");
        let camera_ids = cams
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Parse { line, message: format!("bad camera id {s}") }))
            .collect::<Result<Vec<u32>>>()?;
        out.push(TrackSnapshot {
            timestamp: num(0)?,
            track_id: num(1)? as u64,
            x: num(2)?,
            y: num(3)?,
            vx: num(4)?,
            vy: num(5)?,
            s: num(6)?,
            r: num(7)?,
            yaw: num(8)?,
            class_id: num(9)? as u32,
            camera_ids,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::PixelPoint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn det(x: f64, y: f64, t: f64) -> WorldDetection {
        WorldDetection {
            frame: (t * 10.0).round() as u64,
            timestamp: t,
            camera_id: 0,
            pixel: PixelPoint::new(0.0, 0.0),
            position: WorldPoint::new(x, y),
            yaw: 0.0,
            s: 9.0,
            r: 2.25,
            class_id: 0,
            confidence: 1.0,
            gt_id: None,
        }
    }

    #[test]
    fn association_cases() {
        let a = associate(&[WorldPoint::new(0.0, 0.0)], &[WorldPoint::new(10.0, 0.0)], 3.0);
        assert!(a.matches.is_empty());
        assert_eq!((a.unmatched_tracks.clone(), a.unmatched_detections.clone()), (vec![0], vec![0]));
        let e = associate(&[WorldPoint::new(0.0, 0.0), WorldPoint::new(5.0, 0.0)], &[], 3.0);
        assert_eq!(e.unmatched_tracks, vec![0, 1]);
        // gating must not steal a feasible pair to reduce raw distance
        // (raw optimum pairs t0 with d1 at 3.5 m and t1 with d0)
        let g = associate(
            &[WorldPoint::new(0.0, 0.0), WorldPoint::new(2.9, 0.0)],
            &[WorldPoint::new(2.95, 0.08), WorldPoint::new(2.112, 2.791)],
            3.0,
        );
        assert_eq!(g.matches, vec![(0, 0), (1, 1)]);
    }

    fn run(presence: impl Fn(usize) -> bool, frames: usize) -> Vec<Vec<TrackSnapshot>> {
        let mut tr = Tracker::new(TrackerParams::default()).unwrap();
        (1..=frames)
            .map(|k| {
                let t = k as f64 * 0.1;
                let dets = if presence(k) { vec![det(t * 5.0, 0.0, t)] } else { vec![] };
                tr.step(&dets, t).unwrap()
            })
            .collect()
    }

    #[test]
    fn three_missed_frames_keep_the_id() {
        let out = run(|k| !(6..=8).contains(&k), 12);
        let ids: BTreeSet<u64> = out.iter().flatten().map(|s| s.track_id).collect();
        assert_eq!(ids.len(), 1);
        assert_eq!(out[8].len(), 1);
    }

    #[test]
    fn four_missed_frames_start_a_new_id() {
        let out = run(|k| !(6..=9).contains(&k), 14);
        let ids: BTreeSet<u64> = out.iter().flatten().map(|s| s.track_id).collect();
        assert_eq!(ids.len(), 2);
        assert!(out[9].is_empty(), "new track is tentative on its first hit");
    }

    #[test]
    fn ids_are_unique_and_increasing() {
        let mut tr = Tracker::new(TrackerParams::default()).unwrap();
        let mut seen = Vec::new();
        for k in 1..=30 {
            let t = k as f64 * 0.1;
            // a new far-away object every 5 frames, each observed twice
            let dets: Vec<_> = (0..k / 5 + 1)
                .filter(|i| k - 5 * i < 2)
                .map(|i| det(100.0 * i as f64, 0.0, t))
                .collect();
            for s in tr.step(&dets, t).unwrap() {
                if !seen.contains(&s.track_id) {
                    seen.push(s.track_id);
                }
            }
        }
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_time_regression() {
        let mut tr = Tracker::new(TrackerParams::default()).unwrap();
        tr.step(&[], 1.0).unwrap();
        assert!(matches!(tr.step(&[], 0.5), Err(Error::TimeRegression { .. })));
    }

    #[test]
    fn perfect_detections_converge_exactly() {
        let mut tr = Tracker::new(TrackerParams::default()).unwrap();
        let mut sq = Vec::new();
        for k in 0..40 {
            let t = k as f64 * 0.1;
            let (x, y) = (3.0 + 8.0 * t, -1.0 + 2.5 * t);
            let out = tr.step(&[det(x, y, t)], t).unwrap();
            if k >= 10 {
                let s = &out[0];
                sq.push((s.x - x).powi(2) + (s.y - y).powi(2));
            }
        }
        let rmse = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
        assert!(rmse <= 1e-6, "{rmse}");
    }

    #[test]
    fn velocity_estimate_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = Normal::new(0.0, 0.5).unwrap();
        let mut tr = Tracker::new(TrackerParams::default()).unwrap();
        let mut last = None;
        for k in 0..20 {
            let t = k as f64 * 0.1;
            let d = det(10.0 * t + n.sample(&mut rng), n.sample(&mut rng), t);
            last = tr.step(&[d], t).unwrap().pop().or(last);
        }
        let s = last.unwrap();
        assert!(((s.vx.hypot(s.vy)) - 10.0).abs() < 1.0, "{} {}", s.vx, s.vy);
    }

    #[test]
    fn crossing_targets_keep_ids() {
        let mut tr = Tracker::new(TrackerParams::default()).unwrap();
        let mut a_ids = BTreeSet::new();
        let mut b_ids = BTreeSet::new();
        for k in 0..60 {
            let t = k as f64 * 0.1;
            // A eastbound on y = 0, B northbound on x = 0; B is 4 m short of
            // the crossing when A passes it
            let a = det(-15.0 + 5.0 * t, 0.0, t);
            let b = det(0.0, -19.0 + 5.0 * t, t);
            for s in tr.step(&[a.clone(), b.clone()], t).unwrap() {
                let pa = (s.x - a.position.x).hypot(s.y - a.position.y);
                let pb = (s.x - b.position.x).hypot(s.y - b.position.y);
                if pa < pb {
                    a_ids.insert(s.track_id);
                } else {
                    b_ids.insert(s.track_id);
                }
            }
        }
        assert_eq!(a_ids.len(), 1);
        assert_eq!(b_ids.len(), 1);
        assert_ne!(a_ids, b_ids);
    }

    #[test]
    fn covariance_stays_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut tr = Tracker::new(TrackerParams::default()).unwrap();
        for k in 0..100 {
            let t = k as f64 * 0.1;
            let mut dets = Vec::new();
            for i in 0..3 {
                if n.sample(&mut rng) > -1.0 {
                    dets.push(det(10.0 * i as f64 + t + 0.3 * n.sample(&mut rng), 0.3 * n.sample(&mut rng), t));
                }
            }
            tr.step(&dets, t).unwrap();
            for track in tr.tracks() {
                assert!(track.kf.p.cholesky().is_some());
                assert!(track.kf.x[2] > 0.0);
            }
        }
    }

    #[test]
    fn deterministic_replay() {
        let a = run(|k| k % 7 != 0, 50);
        let b = run(|k| k % 7 != 0, 50);
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip() {
        let snaps = vec![TrackSnapshot {
            timestamp: 0.5,
            track_id: 3,
            x: 1.25,
            y: -2.0,
            vx: 0.1,
            vy: 0.2,
            s: 9.0,
            r: 2.25,
            yaw: -0.75,
            class_id: 1,
            camera_ids: vec![0, 2],
        }];
        let mut buf = Vec::new();
        write_tracks_csv(&mut buf, &snaps).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,track_id,x,y,vx,vy,s,r,yaw,class_id,camera_ids\n"));
        assert!(text.contains(",0;2\n"));
        let back = read_tracks_csv(buf.as_slice()).unwrap();
        assert_eq!(back, snaps);
    }
}
