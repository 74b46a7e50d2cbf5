//! Two-lane roundabout with four arms. Traffic circulates counter-clockwise;
//! each trip is a straight approach, a fillet onto the ring, a ring arc, a
//! fillet off the ring and a straight departure, all tangent-continuous.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::WorldPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    East,
    North,
    West,
    South,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::East, Arm::North, Arm::West, Arm::South];

    /// Direction of the arm axis from the center.
    pub fn angle(self) -> f64 {
        match self {
            Arm::East => 0.0,
            Arm::North => FRAC_PI_2,
            Arm::West => 2.0 * FRAC_PI_2,
            Arm::South => 3.0 * FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roundabout {
    pub center: WorldPoint,
    /// Inner and outer lane centerline radii.
    pub lane_radii: [f64; 2],
    /// Distance from the center to where approaches start.
    pub arm_length: f64,
    /// Lateral offset of approach and departure lanes from the arm axis.
    pub lane_offset: f64,
    pub fillet_radius: f64,
}

impl Default for Roundabout {
    fn default() -> Self {
        Self {
            center: WorldPoint::new(0.0, 0.0),
            lane_radii: [18.0, 22.0],
            arm_length: 50.0,
            lane_offset: 4.0,
            fillet_radius: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Line { a: WorldPoint, b: WorldPoint },
    /// Signed `sweep`: positive is counter-clockwise.
    Arc { center: WorldPoint, radius: f64, start: f64, sweep: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { a, b } => a.distance(&b),
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn pose(&self, s: f64) -> (WorldPoint, f64) {
        match *self {
            Piece::Line { a, b } => {
                let len = a.distance(&b);
                let t = if len > 0.0 { s / len } else { 0.0 };
                (WorldPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)), (b.y - a.y).atan2(b.x - a.x))
            }
            Piece::Arc { center, radius, start, sweep } => {
                let ang = start + sweep.signum() * s / radius;
                let p = WorldPoint::new(center.x + radius * ang.cos(), center.y + radius * ang.sin());
                (p, ang + sweep.signum() * FRAC_PI_2)
            }
        }
    }
}

/// Arc-length parametrized trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pieces: Vec<Piece>,
    /// Arc length at the start of each piece.
    starts: Vec<f64>,
    length: f64,
}

impl Path {
    fn new(pieces: Vec<Piece>) -> Self {
        let mut starts = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            starts.push(acc);
            acc += p.length();
        }
        Self { pieces, starts, length: acc }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Position and heading after `s` meters (clamped to the path).
    pub fn pose_at(&self, s: f64) -> (WorldPoint, f64) {
        let s = s.clamp(0.0, self.length);
        let k = self.starts.partition_point(|&st| st <= s).saturating_sub(1);
        self.pieces[k].pose(s - self.starts[k])
    }

    /// Points every `step` meters, endpoints included.
    pub fn polyline(&self, step: f64) -> Vec<WorldPoint> {
        let n = (self.length / step).ceil().max(1.0) as usize;
        (0..=n).map(|i| self.pose_at(self.length * i as f64 / n as f64).0).collect()
    }
}

fn rotate(p: (f64, f64), angle: f64, c: WorldPoint) -> WorldPoint {
    let (s, co) = angle.sin_cos();
    WorldPoint::new(c.x + co * p.0 - s * p.1, c.y + s * p.0 + co * p.1)
}

impl Roundabout {
    pub fn validate(&self) -> Result<()> {
        let [r0, r1] = self.lane_radii;
        if !(r0 > 0.0 && r1 > r0) {
            return Err(Error::InvalidParameter("lane radii must be positive and increasing".into()));
        }
        if !(self.lane_offset > 0.0 && self.fillet_radius > 0.0) {
            return Err(Error::InvalidParameter("lane offset and fillet radius must be positive".into()));
        }
        if self.lane_offset >= r0 {
            return Err(Error::InvalidParameter("lane offset must be smaller than the inner radius".into()));
        }
        if self.fillet_x(r1) >= self.arm_length {
            return Err(Error::InvalidParameter("arms are too short for the fillets".into()));
        }
        Ok(())
    }

    /// Along-arm position of the fillet center for ring radius `r`.
    fn fillet_x(&self, r: f64) -> f64 {
        let (o, rho) = (self.lane_offset, self.fillet_radius);
        ((r + rho).powi(2) - (o + rho).powi(2)).sqrt()
    }

    /// Ring arc for `lane` starting at `start` (radians), sweeping `sweep`
    /// counter-clockwise.
    pub fn ring_path(&self, lane: usize, start: f64, sweep: f64) -> Result<Path> {
        let r = *self.lane_radii.get(lane).ok_or_else(|| Error::InvalidParameter(format!("no lane {lane}")))?;
        Ok(Path::new(vec![Piece::Arc { center: self.center, radius: r, start, sweep }]))
    }

    /// Trip from `entry` to `exit` on `lane`, with `extra_laps` full turns.
    pub fn path(&self, entry: Arm, exit: Arm, lane: usize, extra_laps: u32) -> Result<Path> {
        self.validate()?;
        let r = *self.lane_radii.get(lane).ok_or_else(|| Error::InvalidParameter(format!("no lane {lane}")))?;
        let (o, rho, len) = (self.lane_offset, self.fillet_radius, self.arm_length);
        let cx = self.fillet_x(r);
        let c = self.center;
        let (a_in, a_out) = (entry.angle(), exit.angle());

        // approach on the +y side of the entry arm, heading toward the center
        let fillet_in = rotate((cx, o + rho), a_in, c);
        let start_in = -FRAC_PI_2 + a_in;
        let toward_center_in = (-(o + rho)).atan2(-cx) + a_in;
        let sweep_in = -(start_in - toward_center_in).rem_euclid(TAU);
        let ring_in = (o + rho).atan2(cx) + a_in;

        // departure on the -y side of the exit arm
        let fillet_out = rotate((cx, -(o + rho)), a_out, c);
        let ring_out = (-(o + rho)).atan2(cx) + a_out;
        let start_out = (o + rho).atan2(-cx) + a_out;
        let sweep_out = -(start_out - (FRAC_PI_2 + a_out)).rem_euclid(TAU);

        let ring_sweep = (ring_out - ring_in).rem_euclid(TAU) + TAU * extra_laps as f64;
        Ok(Path::new(vec![
            Piece::Line { a: rotate((len, o), a_in, c), b: rotate((cx, o), a_in, c) },
            Piece::Arc { center: fillet_in, radius: rho, start: start_in, sweep: sweep_in },
            Piece::Arc { center: c, radius: r, start: ring_in, sweep: ring_sweep },
            Piece::Arc { center: fillet_out, radius: rho, start: start_out, sweep: sweep_out },
            Piece::Line { a: rotate((cx, -o), a_out, c), b: rotate((len, -o), a_out, c) },
        ]))
    }
}
