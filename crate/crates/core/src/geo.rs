//! Local east/north metric frame and its conversion to WGS-84 degrees.

use serde::{Deserialize, Serialize};

/// Equatorial radius used by the equirectangular conversion (meters).
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Ground-plane point in meters east (`x`) and north (`y`) of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Anchor of the local frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoOrigin {
    pub lon: f64,
    pub lat: f64,
}

impl GeoOrigin {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    pub fn to_local(&self, lon: f64, lat: f64) -> WorldPoint {
        let cos_lat0 = self.lat.to_radians().cos();
        WorldPoint::new(
            EARTH_RADIUS_M * cos_lat0 * (lon - self.lon).to_radians(),
            EARTH_RADIUS_M * (lat - self.lat).to_radians(),
        )
    }

    /// Returns `(lon, lat)` in degrees.
    pub fn to_geodetic(&self, p: WorldPoint) -> (f64, f64) {
        let cos_lat0 = self.lat.to_radians().cos();
        let lon = self.lon + (p.x / (EARTH_RADIUS_M * cos_lat0)).to_degrees();
        let lat = self.lat + (p.y / EARTH_RADIUS_M).to_degrees();
        (lon, lat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geodetic_round_trip() {
        let origin = GeoOrigin::new(-83.7430, 42.2544);
        let p = WorldPoint::new(37.25, -12.5);
        let (lon, lat) = origin.to_geodetic(p);
        let q = origin.to_local(lon, lat);
        assert!(p.distance(&q) < 1e-9);
    }

    #[test]
    fn one_degree_of_latitude() {
        let origin = GeoOrigin::new(0.0, 0.0);
        let p = origin.to_local(0.0, 1.0);
        assert!((p.y - EARTH_RADIUS_M * std::f64::consts::PI / 180.0).abs() < 1e-6);
        assert_eq!(p.x, 0.0);
    }
}
