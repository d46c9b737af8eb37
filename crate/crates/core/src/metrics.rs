//! Adversary-side metrics comparing POIs inferred from obfuscated traces
//! with the real ones, and the utility cost of obfuscated range queries.
//!
//! * remapping sends each obfuscated POI to the nearest real POI of the
//!   same user;
//! * recall is the fraction of real POIs hit by at least one remapping;
//! * geographic distance is the length of each remapping;
//! * semantic distance compares the k nearest map features around an
//!   obfuscated POI and around its remap target;
//! * re-identification links anonymous obfuscated POI sets to known users
//!   by the median of directed nearest-POI distances;
//! * precision is the share of results of an enlarged query around an
//!   obfuscated location that are genuine results around the true one.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::geo::{self, GeoPoint};
use crate::mechanism::{NoiseMechanism, RandomSource};
use crate::model::{Poi, PoiSet, UserId};

/// Neighbourhood size used by [`semantic_distance`].
pub const DEFAULT_SEMANTIC_K: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemapPair {
    pub obfuscated: Poi,
    pub target: Poi,
    /// Position of `target` in the real set's order.
    pub target_index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemapResult {
    pub user: UserId,
    pub pairs: Vec<RemapPair>,
    pub n_real: usize,
}

fn nearest(p: GeoPoint, set: &[Poi]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, q) in set.iter().enumerate() {
        let d = geo::distance(p, q.centroid);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

/// Maps every obfuscated POI to its nearest real POI. Returns `None` when the
/// real set is empty; such users are excluded from remap-based metrics.
pub fn remap(obf: &PoiSet, real: &PoiSet) -> Option<RemapResult> {
    if real.is_empty() {
        return None;
    }
    let pairs = obf
        .pois()
        .iter()
        .map(|&o| {
            let (idx, d) = nearest(o.centroid, real.pois()).expect("non-empty real set");
            RemapPair {
                obfuscated: o,
                target: real.pois()[idx],
                target_index: idx,
                distance: d,
            }
        })
        .collect();
    Some(RemapResult {
        user: real.user().clone(),
        pairs,
        n_real: real.len(),
    })
}

impl RemapResult {
    pub fn recall(&self) -> f64 {
        let hit: BTreeSet<usize> = self.pairs.iter().map(|p| p.target_index).collect();
        hit.len() as f64 / self.n_real as f64
    }
}

pub fn recall(obf: &PoiSet, real: &PoiSet) -> Option<f64> {
    remap(obf, real).map(|r| r.recall())
}

pub fn geographic_distance(r: &RemapResult) -> Vec<f64> {
    r.pairs.iter().map(|p| p.distance).collect()
}

/// `1 - |top_k(l) ∩ top_k(remap(l))| / |top_k(remap(l))|` per remapped POI.
/// When the store holds fewer than `k` features the denominator is the
/// number actually returned.
pub fn semantic_distance(r: &RemapResult, store: &FeatureStore, k: usize) -> Result<Vec<f64>> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    Ok(r.pairs
        .iter()
        .map(|p| {
            let around_obf: BTreeSet<u64> = store.top_k(p.obfuscated.centroid, k).iter().map(|f| f.id).collect();
            let around_real: Vec<u64> = store.top_k(p.target.centroid, k).iter().map(|f| f.id).collect();
            let shared = around_real.iter().filter(|id| around_obf.contains(id)).count();
            1.0 - shared as f64 / around_real.len() as f64
        })
        .collect())
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median of the directed nearest-POI distances in both directions; `+∞`
/// when either side is empty.
pub fn udist(obf: &PoiSet, real: &PoiSet) -> f64 {
    if obf.is_empty() || real.is_empty() {
        return f64::INFINITY;
    }
    let directed = |from: &PoiSet, to: &PoiSet| -> Vec<f64> {
        from.pois()
            .iter()
            .map(|p| nearest(p.centroid, to.pois()).expect("non-empty").1)
            .collect::<Vec<_>>()
    };
    let mut values = directed(obf, real);
    values.extend(directed(real, obf));
    median(values)
}

/// The known user whose real POIs are closest to `anon` by [`udist`]; ties go
/// to the smallest identifier. `None` only when `known` is empty.
pub fn uassoc<'a>(anon: &PoiSet, known: &'a BTreeMap<UserId, PoiSet>) -> Option<&'a UserId> {
    let mut best: Option<(&UserId, f64)> = None;
    for (user, real) in known {
        let d = udist(anon, real);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((user, d));
        }
    }
    best.map(|(u, _)| u)
}

/// Known users' real POIs and anonymous obfuscated POI sets. The user field
/// of each anonymous set is ground truth, used only for scoring.
#[derive(Debug, Clone)]
pub struct ReidentInput {
    pub real: BTreeMap<UserId, PoiSet>,
    pub anonymous: Vec<PoiSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReidentOutcome {
    pub rate: f64,
    /// `(true user, assigned user)` per anonymous row.
    pub assignments: Vec<(UserId, UserId)>,
}

/// Fraction of anonymous rows assigned to their true owner; every row is
/// assigned independently.
pub fn reident(input: &ReidentInput) -> Result<ReidentOutcome> {
    if input.real.is_empty() || input.anonymous.is_empty() {
        return Err(Error::EmptyInput("re-identification needs known and anonymous POI sets"));
    }
    if input.anonymous.len() != input.real.len() {
        return Err(Error::param(format!(
            "{} anonymous rows for {} known users",
            input.anonymous.len(),
            input.real.len()
        )));
    }
    let mut truths = BTreeSet::new();
    for row in &input.anonymous {
        if !input.real.contains_key(row.user()) || !truths.insert(row.user()) {
            return Err(Error::param(format!("anonymous row for `{}` has no unique known user", row.user())));
        }
    }
    let assignments: Vec<(UserId, UserId)> = input
        .anonymous
        .par_iter()
        .map(|row| {
            let assigned = uassoc(row, &input.real).expect("known users present");
            (row.user().clone(), assigned.clone())
        })
        .collect();
    let hits = assignments.iter().filter(|(t, a)| t == a).count();
    Ok(ReidentOutcome {
        rate: hits as f64 / assignments.len() as f64,
        assignments,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeQuery {
    pub radius: f64,
    pub category: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionSample {
    pub precision: f64,
    pub retrieved: usize,
    pub real: usize,
    /// Retrieved results outside the true query disc.
    pub useless: usize,
    /// Nothing was retrieved and precision defaulted to 1.
    pub empty: bool,
}

/// Queries around an obfuscated version of `c` with the radius enlarged by
/// the `alpha`-quantile of the noise radius, and scores how many results are
/// genuine results of the query around `c`.
pub fn precision(
    c: GeoPoint,
    mechanism: &NoiseMechanism,
    store: &FeatureStore,
    query: &RangeQuery,
    alpha: f64,
    rng: &mut RandomSource,
) -> Result<PrecisionSample> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(query.radius > 0.0) {
        return Err(Error::param("query radius must be positive"));
    }
    let reported = mechanism.obfuscate_point(c, rng)?;
    let widened = query.radius + mechanism.enlargement(alpha)?;
    let category = query.category.as_deref();
    let retrieved: Vec<u64> = store.range_query(reported, widened, category).iter().map(|f| f.id).collect();
    let real: BTreeSet<u64> = store.range_query(c, query.radius, category).iter().map(|f| f.id).collect();
    Ok(score(&retrieved, &real))
}

fn score(retrieved: &[u64], real: &BTreeSet<u64>) -> PrecisionSample {
    let useless = retrieved.iter().filter(|id| !real.contains(id)).count();
    let empty = retrieved.is_empty();
    let precision = if empty {
        1.0
    } else {
        1.0 - useless as f64 / retrieved.len() as f64
    };
    PrecisionSample {
        precision,
        retrieved: retrieved.len(),
        real: real.len(),
        useless,
        empty,
    }
}
