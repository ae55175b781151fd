//! Planar coordinates and the single distance metric used throughout the
//! simulator.
//!
//! Longitude/latitude inputs are mapped to meters with an equirectangular
//! projection around a fixed anchor. Every distance the simulator reports
//! (commute length, walking legs, empty-vehicle legs, claim radius tests)
//! is the Euclidean distance in that plane.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest admissible absolute coordinate, in meters.
pub const MAX_COORD_M: f64 = 1.0e7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("longitude {0} outside [-180, 180)")]
    Longitude(f64),
    #[error("latitude {0} outside (-90, 90)")]
    Latitude(f64),
    #[error("coordinate ({0}, {1}) is not finite or exceeds {MAX_COORD_M} m")]
    Coordinate(f64, f64),
}

/// A point in meters east (`x`) and north (`y`) of the region anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        GeoPoint { x, y }
    }

    /// Builds a point, rejecting non-finite or out-of-range coordinates.
    pub fn checked(x: f64, y: f64) -> Result<Self, GeoError> {
        if x.is_finite() && y.is_finite() && x.abs() < MAX_COORD_M && y.abs() < MAX_COORD_M {
            Ok(GeoPoint { x, y })
        } else {
            Err(GeoError::Coordinate(x, y))
        }
    }

    #[inline]
    pub fn dist(&self, other: &GeoPoint) -> f64 {
        dist(*self, *other)
    }
}

/// Euclidean distance in meters.
#[inline]
pub fn dist(a: GeoPoint, b: GeoPoint) -> f64 {
    dist_sq(a, b).sqrt()
}

/// Squared distance; cheaper when only ordering matters.
#[inline]
pub fn dist_sq(a: GeoPoint, b: GeoPoint) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    dx * dx + dy * dy
}

fn check_lon(lon: f64) -> Result<(), GeoError> {
    if lon.is_finite() && (-180.0..180.0).contains(&lon) {
        Ok(())
    } else {
        Err(GeoError::Longitude(lon))
    }
}

fn check_lat(lat: f64) -> Result<(), GeoError> {
    if lat.is_finite() && lat > -90.0 && lat < 90.0 {
        Ok(())
    } else {
        Err(GeoError::Latitude(lat))
    }
}

/// Equirectangular projection anchored at (`anchor_lon`, `anchor_lat`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    anchor_lon: f64,
    anchor_lat: f64,
    cos_lat: f64,
}

impl Projection {
    pub fn new(anchor_lon: f64, anchor_lat: f64) -> Result<Self, GeoError> {
        check_lon(anchor_lon)?;
        check_lat(anchor_lat)?;
        Ok(Projection {
            anchor_lon,
            anchor_lat,
            cos_lat: anchor_lat.to_radians().cos(),
        })
    }

    pub fn anchor_lon(&self) -> f64 {
        self.anchor_lon
    }

    pub fn anchor_lat(&self) -> f64 {
        self.anchor_lat
    }

    pub fn project(&self, lon: f64, lat: f64) -> Result<GeoPoint, GeoError> {
        check_lon(lon)?;
        check_lat(lat)?;
        let x = EARTH_RADIUS_M * (lon - self.anchor_lon).to_radians() * self.cos_lat;
        let y = EARTH_RADIUS_M * (lat - self.anchor_lat).to_radians();
        GeoPoint::checked(x, y)
    }

    /// Inverse of [`Projection::project`]; returns `(lon, lat)` in degrees.
    pub fn unproject(&self, p: GeoPoint) -> (f64, f64) {
        let lon = self.anchor_lon + (p.x / (EARTH_RADIUS_M * self.cos_lat)).to_degrees();
        let lat = self.anchor_lat + (p.y / EARTH_RADIUS_M).to_degrees();
        (lon, lat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SG_LON: f64 = 103.82;
    const SG_LAT: f64 = 1.35;

    #[test]
    fn anchor_maps_to_origin() {
        let p = Projection::new(SG_LON, SG_LAT).unwrap();
        let o = p.project(SG_LON, SG_LAT).unwrap();
        assert_eq!(o, GeoPoint::new(0.0, 0.0));
    }

    #[test]
    fn thousandth_degree_north() {
        // 6_371_000 * 0.001 * pi / 180 = 111.1949266...
        let p = Projection::new(SG_LON, SG_LAT).unwrap();
        let q = p.project(SG_LON, SG_LAT + 0.001).unwrap();
        assert!(q.x.abs() < 1e-9);
        assert!((q.y - 111.194_926_6).abs() < 1e-6, "{}", q.y);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Projection::new(180.0, 0.0).is_err());
        assert!(Projection::new(0.0, 90.0).is_err());
        let p = Projection::new(SG_LON, SG_LAT).unwrap();
        assert_eq!(p.project(200.0, 1.0), Err(GeoError::Longitude(200.0)));
        assert_eq!(p.project(100.0, -91.0), Err(GeoError::Latitude(-91.0)));
        assert!(p.project(f64::NAN, 1.0).is_err());
        assert!(GeoPoint::checked(2.0e7, 0.0).is_err());
    }

    #[test]
    fn pythagorean_distance() {
        let a = GeoPoint::new(0.0, 0.0);
        assert_eq!(dist(a, a), 0.0);
        assert_eq!(dist(a, GeoPoint::new(3.0, 4.0)), 5.0);
    }

    #[test]
    fn singapore_bbox_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let proj = Projection::new(SG_LON, SG_LAT).unwrap();
        for _ in 0..1000 {
            let lon = rng.random_range(103.6..104.1);
            let lat = rng.random_range(1.15..1.48);
            let p = proj.project(lon, lat).unwrap();
            let (lon2, lat2) = proj.unproject(p);
            let back = proj.project(lon2, lat2).unwrap();
            assert!(dist(p, back) < 1e-6);
            assert!((lon - lon2).abs() < 1e-11 && (lat - lat2).abs() < 1e-11);
        }
    }

    fn point() -> impl Strategy<Value = GeoPoint> {
        (-5.0e4..5.0e4f64, -5.0e4..5.0e4f64).prop_map(|(x, y)| GeoPoint::new(x, y))
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(a in point(), b in point()) {
            prop_assert_eq!(dist(a, b), dist(b, a));
            prop_assert!(dist(a, b) >= 0.0);
            prop_assert_eq!(dist(a, b) == 0.0, a == b);
        }

        #[test]
        fn triangle_inequality(a in point(), b in point(), c in point()) {
            prop_assert!(dist(a, c) <= dist(a, b) + dist(b, c) + 1e-9);
        }

        #[test]
        fn round_trip_within_100km_box(p in point()) {
            let proj = Projection::new(SG_LON, SG_LAT).unwrap();
            let (lon, lat) = proj.unproject(p);
            let q = proj.project(lon, lat).unwrap();
            prop_assert!(dist(p, q) < 1e-6);
        }
    }
}
