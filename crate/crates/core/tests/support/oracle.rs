//! Slow, obviously-correct reference implementations.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use geopriv::features::Feature;
use geopriv::geo::{self, GeoPoint};
use geopriv::model::{Poi, TimestampedLocation};
use geopriv::poi::{ExtractionParams, Stay};

fn stay_of(candidate: &[TimestampedLocation]) -> Stay {
    Stay {
        centroid: geo::centroid(candidate.iter().map(|l| l.point())).unwrap(),
        start_t: candidate[0].t(),
        end_t: candidate[candidate.len() - 1].t(),
        point_count: candidate.len(),
    }
}

fn elapsed(candidate: &[TimestampedLocation]) -> i64 {
    match candidate {
        [] => 0,
        [first, .., last] => last.t() - first.t(),
        [_] => 0,
    }
}

/// Stay detection exactly as the pseudo-code reads: an explicit candidate
/// list, a max over all members, `remove(0)` on failure.
pub fn stays(points: &[TimestampedLocation], params: &ExtractionParams) -> Vec<Stay> {
    let mut stays = Vec::new();
    let mut candidate: Vec<TimestampedLocation> = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let diameter = candidate
            .iter()
            .map(|p| geo::distance(points[i].point(), p.point()))
            .fold(f64::NEG_INFINITY, f64::max);
        if candidate.is_empty() || diameter <= params.max_distance {
            candidate.push(points[i]);
            i += 1;
        } else if elapsed(&candidate) >= params.min_time {
            stays.push(stay_of(&candidate));
            candidate.clear();
        } else {
            candidate.remove(0);
        }
    }
    if elapsed(&candidate) >= params.min_time {
        stays.push(stay_of(&candidate));
    }
    stays
}

/// Clusters as stay-index sets, plus their centroids over ascending members.
pub fn clusters(stays: &[Stay], params: &ExtractionParams) -> (Vec<BTreeSet<usize>>, Vec<Poi>) {
    let merge = params.max_distance * params.merge_factor;
    let mut clusters: Vec<BTreeSet<usize>> = Vec::new();
    for stay in stays {
        let mut neighborhood: BTreeSet<usize> = (0..stays.len())
            .filter(|&s| geo::distance(stays[s].centroid, stay.centroid) <= merge)
            .collect();
        if neighborhood.len() >= params.min_pts {
            let mut kept = Vec::new();
            for cluster in clusters.drain(..) {
                if neighborhood.intersection(&cluster).next().is_some() {
                    neighborhood.extend(cluster);
                } else {
                    kept.push(cluster);
                }
            }
            clusters = kept;
            clusters.push(neighborhood);
        }
    }
    let pois = clusters
        .iter()
        .map(|c| Poi {
            centroid: geo::centroid(c.iter().map(|&s| stays[s].centroid)).unwrap(),
            support: c.len(),
        })
        .collect();
    (clusters, pois)
}

/// Sorts POIs the way `PoiSet` does, for order-insensitive comparison.
pub fn sorted_pois(mut pois: Vec<Poi>) -> Vec<Poi> {
    pois.sort_by(|a, b| {
        a.centroid
            .lat()
            .total_cmp(&b.centroid.lat())
            .then(a.centroid.lon().total_cmp(&b.centroid.lon()))
            .then(a.support.cmp(&b.support))
    });
    pois
}

fn radius_cdf(epsilon: f64, r: f64) -> f64 {
    1.0 - (1.0 + epsilon * r) * (-epsilon * r).exp()
}

/// Inverse of the radial CDF by bisection on a bracket grown until it
/// contains `p`.
pub fn inverse_radius_cdf(epsilon: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0 / epsilon);
    while radius_cdf(epsilon, hi) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if radius_cdf(epsilon, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn range_query(features: &[Feature], c: GeoPoint, radius: f64, category: Option<&str>) -> Vec<u64> {
    let mut ids: Vec<u64> = features
        .iter()
        .filter(|f| category.is_none_or(|cat| f.category == cat))
        .filter(|f| geo::distance(c, f.point) <= radius)
        .map(|f| f.id)
        .collect();
    ids.sort_unstable();
    ids
}

pub fn top_k(features: &[Feature], c: GeoPoint, k: usize) -> Vec<u64> {
    let mut all: Vec<(f64, u64)> = features.iter().map(|f| (geo::distance(c, f.point), f.id)).collect();
    all.sort_by(|a, b| match a.0.total_cmp(&b.0) {
        Ordering::Equal => a.1.cmp(&b.1),
        o => o,
    });
    all.into_iter().take(k).map(|(_, id)| id).collect()
}
