//! Random inputs for oracle comparisons.

use geopriv::features::Feature;
use geopriv::geo::{self, GeoPoint};
use geopriv::model::{MobilityTrace, TimestampedLocation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn origin() -> GeoPoint {
    GeoPoint::new(37.7749, -122.4194).unwrap()
}

/// Up to `max_len` points that hop between a few nearby anchors, dwell with
/// small jitter and are sampled at irregular intervals. Produces a healthy
/// mix of stays, partial windows and clusters for default parameters.
pub fn random_trace(rng: &mut ChaCha8Rng, max_len: usize) -> MobilityTrace {
    let n = rng.random_range(0..=max_len);
    let anchors: Vec<GeoPoint> = (0..rng.random_range(1..=4))
        .map(|_| geo::offset(origin(), rng.random_range(-600.0..600.0), rng.random_range(-600.0..600.0)).unwrap())
        .collect();
    let mut t = rng.random_range(0..100_000i64);
    let mut anchor = 0;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.random_bool(0.2) {
            anchor = rng.random_range(0..anchors.len());
        }
        let spread = if rng.random_bool(0.1) { 400.0 } else { 120.0 };
        let p = geo::offset(anchors[anchor], rng.random_range(-spread..spread), rng.random_range(-spread..spread)).unwrap();
        points.push(TimestampedLocation::new(t, p).unwrap());
        t += rng.random_range(0..1500);
    }
    MobilityTrace::new("u".into(), points)
}

/// Features within a few kilometres of the origin, with some exact
/// duplicates to exercise tie-breaking.
pub fn random_features(rng: &mut ChaCha8Rng, n: usize) -> Vec<Feature> {
    let cats = ["restaurant", "shop", "cafe"];
    let mut out: Vec<Feature> = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let point = if !out.is_empty() && rng.random_bool(0.05) {
            out[rng.random_range(0..out.len())].point
        } else {
            geo::offset(origin(), rng.random_range(-5000.0..5000.0), rng.random_range(-5000.0..5000.0)).unwrap()
        };
        let cat = cats[rng.random_range(0..cats.len())];
        out.push(Feature::new(id * 7 + 3, point, cat, format!("f{id}")));
    }
    out
}

pub fn random_near_origin(rng: &mut ChaCha8Rng, span: f64) -> GeoPoint {
    geo::offset(origin(), rng.random_range(-span..span), rng.random_range(-span..span)).unwrap()
}
