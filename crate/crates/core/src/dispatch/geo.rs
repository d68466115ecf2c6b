//! Fixed-point coordinates and great-circle distance.

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

const MAX_LAT_E6: i32 = 90_000_000;
const MAX_LON_E6: i32 = 180_000_000;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("coordinate out of range: lat_e6={lat_e6} lon_e6={lon_e6}")]
pub struct InvalidGeoPoint {
    pub lat_e6: i64,
    pub lon_e6: i64,
}

/// A position in integer micro-degrees. Floating point is only used inside
/// [`haversine_distance`], never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    lat_e6: i32,
    lon_e6: i32,
}

#[derive(Deserialize)]
struct RawPoint {
    lat_e6: i64,
    lon_e6: i64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = InvalidGeoPoint;
    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat_e6, raw.lon_e6)
    }
}

impl GeoPoint {
    pub fn new(lat_e6: i64, lon_e6: i64) -> Result<Self, InvalidGeoPoint> {
        if lat_e6.abs() > MAX_LAT_E6 as i64 || lon_e6.abs() > MAX_LON_E6 as i64 {
            return Err(InvalidGeoPoint { lat_e6, lon_e6 });
        }
        Ok(Self { lat_e6: lat_e6 as i32, lon_e6: lon_e6 as i32 })
    }

    pub fn lat_e6(self) -> i32 {
        self.lat_e6
    }

    pub fn lon_e6(self) -> i32 {
        self.lon_e6
    }

    fn radians(self) -> (f64, f64) {
        ((self.lat_e6 as f64 / 1e6).to_radians(), (self.lon_e6 as f64 / 1e6).to_radians())
    }

    /// Linear interpolation in coordinate space, `num/den` of the way to `to`.
    pub fn lerp(self, to: GeoPoint, num: u64, den: u64) -> GeoPoint {
        if den == 0 || num >= den {
            return to;
        }
        let step = |a: i32, b: i32| -> i64 {
            let delta = b as i64 - a as i64;
            a as i64 + (delta * num as i64).div_euclid(den as i64)
        };
        GeoPoint::new(step(self.lat_e6, to.lat_e6), step(self.lon_e6, to.lon_e6))
            .expect("interpolation stays between two valid points")
    }
}

/// Great-circle distance on a sphere of radius 6,371 km, rounded to the
/// nearest metre.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> u64 {
    let (lat1, lon1) = a.radians();
    let (lat2, lon2) = b.radians();
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    let c = 2.0 * h.sqrt().min(1.0).asin();
    (EARTH_RADIUS_M * c).round() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: i64, lon: i64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn identity_is_zero() {
        let a = p(23_810_300, 90_412_500);
        assert_eq!(haversine_distance(a, a), 0);
    }

    #[test]
    fn meridian_arc() {
        assert_eq!(haversine_distance(p(0, 0), p(10_000, 0)), 1112);
    }

    // Reference value from an independent 50-digit chord-length computation:
    // 3910.99944956874... m.
    #[test]
    fn dhaka_pair_matches_high_precision_reference() {
        let d = haversine_distance(p(23_810_300, 90_412_500), p(23_777_200, 90_399_500));
        assert!(d.abs_diff(3911) <= 1, "got {d}");
    }

    #[test]
    fn bounds_enforced() {
        assert!(GeoPoint::new(90_000_001, 0).is_err());
        assert!(GeoPoint::new(0, -180_000_001).is_err());
        assert!(GeoPoint::new(-90_000_000, 180_000_000).is_ok());
        let bad: Result<GeoPoint, _> = serde_json::from_str(r#"{"lat_e6":100000000,"lon_e6":0}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn lerp_endpoints() {
        let a = p(0, 0);
        let b = p(1000, -2000);
        assert_eq!(a.lerp(b, 0, 10), a);
        assert_eq!(a.lerp(b, 10, 10), b);
        assert_eq!(a.lerp(b, 5, 10), p(500, -1000));
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (-89_000_000i64..=89_000_000, -179_000_000i64..=179_000_000).prop_map(|(a, b)| p(a, b))
    }

    proptest! {
        #[test]
        fn symmetric(a in arb_point(), b in arb_point()) {
            prop_assert_eq!(haversine_distance(a, b), haversine_distance(b, a));
        }

        #[test]
        fn triangle_inequality(a in arb_point(), b in arb_point(), c in arb_point()) {
            let ab = haversine_distance(a, b);
            let bc = haversine_distance(b, c);
            let ac = haversine_distance(a, c);
            prop_assert!(ac <= ab + bc + 1);
        }
    }
}
