//! Synthetic roundabout world: scripted vehicles, posed cameras and an
//! oracle detector.

pub mod camera;
pub mod roundabout;
pub mod sensor;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use camera::{corner_fisheyes, SimCamera};
pub use roundabout::{Arm, Path, Roundabout};
pub use sensor::{observe, SensorModel};

use crate::error::{Error, Result};
use crate::geo::{GeoOrigin, WorldPoint};

/// One vehicle trip at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleScript {
    pub id: u64,
    pub entry: Arm,
    pub exit: Arm,
    #[serde(default)]
    pub lane: usize,
    #[serde(default)]
    pub extra_laps: u32,
    /// Time the vehicle is at the start of its approach; may be negative.
    pub entry_time: f64,
    /// m/s
    pub speed: f64,
    pub width: f64,
    pub length: f64,
    #[serde(default = "default_height")]
    pub height: f64,
    #[serde(default)]
    pub class_id: u32,
}

fn default_height() -> f64 {
    1.5
}

/// Footprint `(w, l, h)` per class: car, van, truck.
pub const CLASS_SIZES: [(f64, f64, f64); 3] = [(1.8, 4.5, 1.5), (2.0, 5.2, 2.0), (2.5, 8.0, 3.2)];

/// Randomly drawn trips added on top of the scripted ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomTraffic {
    pub count: usize,
    /// Entry times are uniform on this window.
    pub entry_window: [f64; 2],
    pub speed_range: [f64; 2],
    #[serde(default)]
    pub extra_laps: u32,
    /// Reject draws whose footprint (grown by `CLEARANCE`) touches another
    /// vehicle in any frame. Off, vehicles at different speeds drive
    /// through each other.
    #[serde(default = "default_true")]
    pub collision_free: bool,
}

fn default_true() -> bool {
    true
}

/// Margin added on every side of a footprint for the collision check (m).
pub const CLEARANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub duration: f64,
    #[serde(default)]
    pub origin: GeoOrigin,
    #[serde(default)]
    pub roundabout: Roundabout,
    pub cameras: Vec<SimCamera>,
    #[serde(default)]
    pub vehicles: Vec<VehicleScript>,
    #[serde(default)]
    pub random_traffic: Option<RandomTraffic>,
    #[serde(default)]
    pub sensor: SensorModel,
}

fn default_fps() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtVehicle {
    pub vehicle_id: u64,
    pub position: WorldPoint,
    pub yaw: f64,
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub class_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub frame: u64,
    pub timestamp: f64,
    /// Sorted by vehicle id.
    pub vehicles: Vec<GtVehicle>,
}

impl Scenario {
    /// Four corner fisheyes 28 m out on the diagonals, 60 s at 10 fps.
    pub fn default_roundabout(vehicles: usize, seed: u64) -> Result<Self> {
        let roundabout = Roundabout::default();
        Ok(Self {
            name: "roundabout".into(),
            seed,
            fps: 10.0,
            duration: 60.0,
            origin: GeoOrigin::new(-83.7430, 42.2808),
            roundabout,
            cameras: corner_fisheyes(roundabout.center, 28.0)?,
            vehicles: Vec::new(),
            random_traffic: Some(RandomTraffic {
                count: vehicles,
                entry_window: [-5.0, 45.0],
                speed_range: [6.0, 10.0],
                extra_laps: 0,
                collision_free: true,
            }),
            sensor: SensorModel::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidParameter(format!("fps must be positive, got {}", self.fps)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration must be non-negative, got {}", self.duration)));
        }
        self.roundabout.validate()?;
        self.sensor.validate()?;
        let mut ids = BTreeSet::new();
        for (i, c) in self.cameras.iter().enumerate() {
            if !ids.insert(c.camera_id) {
                return Err(Error::InvalidParameter(format!("camera id {} listed twice", c.camera_id)));
            }
            if self.cameras[..i].iter().any(|o| o.position == c.position) {
                return Err(Error::DuplicatePosition(c.camera_id));
            }
        }
        if let Some(r) = &self.random_traffic {
            let [s0, s1] = r.speed_range;
            let [t0, t1] = r.entry_window;
            if !(s0 > 0.0 && s1 >= s0 && t1 >= t0) {
                return Err(Error::InvalidParameter("random traffic needs positive speeds and an ordered window".into()));
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration * self.fps + 1e-9).floor() as u64
    }

    /// Scripted trips followed by the random ones, which take ids after the
    /// largest scripted id.
    pub fn scripts(&self) -> Result<Vec<VehicleScript>> {
        let mut out = self.vehicles.clone();
        let Some(r) = &self.random_traffic else { return Ok(out) };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut next_id = out.iter().map(|v| v.id).max().map_or(1, |m| m + 1);
        // footprints already claimed in each frame
        let mut occupied: Vec<Vec<Footprint>> = vec![Vec::new(); self.frame_count() as usize];
        if r.collision_free {
            for v in &out {
                let path = self.roundabout.path(v.entry, v.exit, v.lane, v.extra_laps)?;
                for (k, f) in self.footprints(v, &path) {
                    occupied[k].push(f);
                }
            }
        }
        for _ in 0..r.count {
            let mut placed = false;
            for _ in 0..1000 {
                let entry = Arm::ALL[rng.random_range(0..4)];
                let exit = Arm::ALL[rng.random_range(0..4)];
                let class = rng.random_range(0..10).min(7) / 3;
                let (width, length, height) = CLASS_SIZES[class as usize];
                let v = VehicleScript {
                    id: next_id,
                    entry,
                    exit,
                    lane: rng.random_range(0..2),
                    extra_laps: r.extra_laps,
                    entry_time: rng.random_range(r.entry_window[0]..=r.entry_window[1]),
                    speed: rng.random_range(r.speed_range[0]..=r.speed_range[1]),
                    width,
                    length,
                    height,
                    class_id: class,
                };
                if !out.iter().all(|o| spawn_conflict(o, &v).is_none()) {
                    continue;
                }
                if r.collision_free {
                    let path = self.roundabout.path(v.entry, v.exit, v.lane, v.extra_laps)?;
                    let claims = self.footprints(&v, &path);
                    if claims.iter().any(|(k, f)| occupied[*k].iter().any(|o| o.overlaps(f))) {
                        continue;
                    }
                    for (k, f) in claims {
                        occupied[k].push(f);
                    }
                }
                out.push(v);
                placed = true;
                break;
            }
            if !placed {
                return Err(Error::InfeasibleScript(format!(
                    "could not place {} random vehicles without conflicts",
                    r.count
                )));
            }
            next_id += 1;
        }
        Ok(out)
    }

    /// Grown footprint of `v` in every frame it is on its path.
    fn footprints(&self, v: &VehicleScript, path: &Path) -> Vec<(usize, Footprint)> {
        (0..self.frame_count() as usize)
            .filter_map(|k| {
                let s = v.speed * (k as f64 / self.fps - v.entry_time);
                (s >= 0.0 && s <= path.length()).then(|| {
                    let (center, yaw) = path.pose_at(s);
                    (k, Footprint { center, yaw, half_l: v.length / 2.0 + CLEARANCE, half_w: v.width / 2.0 + CLEARANCE })
                })
            })
            .collect()
    }

    /// Paths of every trip, keyed by vehicle id.
    pub fn paths(&self) -> Result<BTreeMap<u64, (VehicleScript, Path)>> {
        let mut out = BTreeMap::new();
        for v in self.scripts()? {
            let p = self.roundabout.path(v.entry, v.exit, v.lane, v.extra_laps)?;
            out.insert(v.id, (v, p));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy)]
struct Footprint {
    center: WorldPoint,
    yaw: f64,
    half_l: f64,
    half_w: f64,
}

impl Footprint {
    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.yaw.sin_cos();
        [(c, s), (-s, c)]
    }

    fn half_extent(&self, n: (f64, f64)) -> f64 {
        let [a, b] = self.axes();
        self.half_l * (a.0 * n.0 + a.1 * n.1).abs() + self.half_w * (b.0 * n.0 + b.1 * n.1).abs()
    }

    /// Separating-axis test on the two rectangles.
    fn overlaps(&self, other: &Footprint) -> bool {
        let d = (other.center.x - self.center.x, other.center.y - self.center.y);
        self.axes()
            .into_iter()
            .chain(other.axes())
            .all(|n| (d.0 * n.0 + d.1 * n.1).abs() < self.half_extent(n) + other.half_extent(n))
    }
}

/// Two vehicles overlap at spawn when they start on the same approach lane
/// and the earlier one has not cleared half of both lengths.
fn spawn_conflict(a: &VehicleScript, b: &VehicleScript) -> Option<String> {
    if a.entry != b.entry || a.lane != b.lane {
        return None;
    }
    let (first, second) = if a.entry_time <= b.entry_time { (a, b) } else { (b, a) };
    let gap = first.speed * (second.entry_time - first.entry_time);
    (gap < (first.length + second.length) / 2.0).then(|| {
        format!("vehicles {} and {} overlap at the {:?} entry ({gap:.2} m apart)", first.id, second.id, first.entry)
    })
}

fn validate_script(v: &VehicleScript) -> Result<()> {
    if !(v.speed >= 0.0 && v.speed.is_finite()) {
        return Err(Error::InfeasibleScript(format!("vehicle {} has speed {}", v.id, v.speed)));
    }
    if !(v.width > 0.0 && v.length > 0.0 && v.height > 0.0) {
        return Err(Error::InfeasibleScript(format!("vehicle {} has a non-positive footprint", v.id)));
    }
    if !v.entry_time.is_finite() {
        return Err(Error::InfeasibleScript(format!("vehicle {} has no entry time", v.id)));
    }
    Ok(())
}

/// Per-frame vehicle states. Vehicles appear while on their path; a
/// stopped vehicle stays at its spawn point.
pub fn gen_ground_truth(scenario: &Scenario) -> Result<Vec<GroundTruthFrame>> {
    scenario.validate()?;
    let scripts = scenario.scripts()?;
    let mut ids = BTreeSet::new();
    for (i, v) in scripts.iter().enumerate() {
        validate_script(v)?;
        if !ids.insert(v.id) {
            return Err(Error::InfeasibleScript(format!("vehicle id {} used twice", v.id)));
        }
        for o in &scripts[..i] {
            if let Some(msg) = spawn_conflict(o, v) {
                return Err(Error::InfeasibleScript(msg));
            }
        }
    }
    let paths = scenario.paths()?;
    let mut frames = Vec::new();
    for k in 0..scenario.frame_count() {
        let t = k as f64 / scenario.fps;
        let mut vehicles = Vec::new();
        for (v, path) in paths.values() {
            let dt = t - v.entry_time;
            if dt < 0.0 {
                continue;
            }
            let s = v.speed * dt;
            if s > path.length() && v.speed > 0.0 {
                continue;
            }
            let (position, yaw) = path.pose_at(s);
            vehicles.push(GtVehicle {
                vehicle_id: v.id,
                position,
                yaw,
                width: v.width,
                length: v.length,
                height: v.height,
                class_id: v.class_id,
            });
        }
        frames.push(GroundTruthFrame { frame: k, timestamp: t, vehicles });
    }
    Ok(frames)
}

#[derive(Debug, Serialize, Deserialize)]
struct GtRow {
    frame: u64,
    t: f64,
    vehicle_id: u64,
    x: f64,
    y: f64,
    yaw: f64,
    w: f64,
    l: f64,
    class: u32,
}

/// Writes `frame,t,vehicle_id,x,y,yaw,w,l,class`.
pub fn write_ground_truth_csv<W: Write>(writer: W, frames: &[GroundTruthFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for f in frames {
        for v in &f.vehicles {
            w.serialize(GtRow {
                frame: f.frame,
                t: f.timestamp,
                vehicle_id: v.vehicle_id,
                x: v.position.x,
                y: v.position.y,
                yaw: v.yaw,
                w: v.width,
                l: v.length,
                class: v.class_id,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the ground-truth CSV back; vehicle height is not stored and is
/// restored as the default.
pub fn read_ground_truth_csv<R: Read>(reader: R) -> Result<Vec<GroundTruthFrame>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut frames: Vec<GroundTruthFrame> = Vec::new();
    for (i, row) in r.deserialize::<GtRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse { line: i + 2, message: e.to_string() })?;
        if frames.last().map(|f| f.frame) != Some(row.frame) {
            frames.push(GroundTruthFrame { frame: row.frame, timestamp: row.t, vehicles: Vec::new() });
        }
        frames.last_mut().expect("frame pushed above").vehicles.push(GtVehicle {
            vehicle_id: row.vehicle_id,
            position: WorldPoint::new(row.x, row.y),
            yaw: row.yaw,
            width: row.w,
            length: row.l,
            height: default_height(),
            class_id: row.class,
        });
    }
    Ok(frames)
}
