//! Geographic primitives: validated WGS84 points, great-circle distance,
//! degree-space centroids and local tangent-plane offsets.
//!
//! Every module measures distance through [`distance`], a haversine on a
//! sphere of mean radius [`EARTH_RADIUS_M`]. At city scale the difference
//! from a planar metric is far below the 100 m granularity used by the
//! attack sweeps.

use std::fmt;

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of latitude used by [`offset`].
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// Latitude beyond which [`offset`] refuses to operate.
pub const MAX_OFFSET_LAT: f64 = 89.0;

/// A WGS84 location in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// Haversine "a" term for points already converted to radians.
#[inline]
fn haversine_term(lat1: f64, lon1: f64, cos1: f64, lat2: f64, lon2: f64, cos2: f64) -> f64 {
    let dlat = (lat2 - lat1) * 0.5;
    let dlon = (lon2 - lon1) * 0.5;
    let s_lat = dlat.sin();
    let s_lon = dlon.sin();
    s_lat * s_lat + cos1 * cos2 * s_lon * s_lon
}

#[inline]
fn term_to_meters(h: f64) -> f64 {
    2.0 * EARTH_RADIUS_M * h.min(1.0).sqrt().asin()
}

/// Great-circle distance in meters.
pub fn distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let h = haversine_term(
        lat1,
        a.lon.to_radians(),
        lat1.cos(),
        lat2,
        b.lon.to_radians(),
        lat2.cos(),
    );
    term_to_meters(h)
}

/// Arithmetic mean of latitudes and longitudes, accumulated in iteration
/// order.
pub fn centroid<I>(points: I) -> Result<GeoPoint>
where
    I: IntoIterator<Item = GeoPoint>,
{
    let mut n = 0usize;
    let (mut lat, mut lon) = (0.0, 0.0);
    for p in points {
        lat += p.lat;
        lon += p.lon;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyPointSet);
    }
    Ok(GeoPoint {
        lat: lat / n as f64,
        lon: lon / n as f64,
    })
}

/// Displaces `p` by `dx` meters east and `dy` meters north on the local
/// tangent plane. Longitude wraps across the antimeridian.
pub fn offset(p: GeoPoint, dx: f64, dy: f64) -> Result<GeoPoint> {
    if p.lat.abs() > MAX_OFFSET_LAT {
        return Err(Error::PolarRegion(p.lat));
    }
    let lat = (p.lat + dy / METERS_PER_DEGREE).clamp(-90.0, 90.0);
    let mut lon = p.lon + dx / (METERS_PER_DEGREE * p.lat.to_radians().cos());
    if !(-180.0..=180.0).contains(&lon) {
        lon = (lon + 180.0).rem_euclid(360.0) - 180.0;
    }
    Ok(GeoPoint { lat, lon })
}

/// Inverse of [`offset`]: the tangent-plane displacement `(dx, dy)` in
/// meters taking `from` to `to`.
pub fn displacement(from: GeoPoint, to: GeoPoint) -> (f64, f64) {
    let mut dlon = to.lon - from.lon;
    if dlon > 180.0 {
        dlon -= 360.0;
    } else if dlon < -180.0 {
        dlon += 360.0;
    }
    let dx = dlon * METERS_PER_DEGREE * from.lat.to_radians().cos();
    let dy = (to.lat - from.lat) * METERS_PER_DEGREE;
    (dx, dy)
}

/// Lower bound, in degrees of latitude, of the separation between two points
/// at distance `meters`. Any pair within `meters` differs in latitude by at
/// most this much.
pub(crate) fn latitude_span_deg(meters: f64) -> f64 {
    (meters / EARTH_RADIUS_M).to_degrees()
}

/// A point with its trigonometric terms precomputed, for repeated distance
/// tests against the same threshold.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CachedPoint {
    point: GeoPoint,
    lat: f64,
    lon: f64,
    cos_lat: f64,
}

impl CachedPoint {
    pub(crate) fn new(point: GeoPoint) -> Self {
        let lat = point.lat.to_radians();
        Self {
            point,
            lat,
            lon: point.lon.to_radians(),
            cos_lat: lat.cos(),
        }
    }
}

/// Decides `distance(a, b) <= max` without the inverse trigonometry except
/// in a narrow band around the threshold, where it defers to [`distance`].
/// The outcome is identical to the direct comparison.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WithinDistance {
    max: f64,
    accept_below: f64,
    reject_above: f64,
}

impl WithinDistance {
    const BAND: f64 = 1e-9;

    pub(crate) fn new(max: f64) -> Self {
        let half_angle = (max / (2.0 * EARTH_RADIUS_M)).min(std::f64::consts::FRAC_PI_2);
        let h = half_angle.sin().powi(2);
        Self {
            max,
            accept_below: h * (1.0 - Self::BAND),
            reject_above: h * (1.0 + Self::BAND),
        }
    }

    #[inline]
    pub(crate) fn test(&self, a: &CachedPoint, b: &CachedPoint) -> bool {
        let h = haversine_term(a.lat, a.lon, a.cos_lat, b.lat, b.lon, b.cos_lat);
        if h <= self.accept_below {
            true
        } else if h >= self.reject_above {
            false
        } else {
            distance(a.point, b.point) <= self.max
        }
    }
}
