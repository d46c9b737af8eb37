//! Traces, POIs and datasets shared by every stage of the pipeline.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// Opaque user identifier. Ordering is lexicographic and is the canonical
/// order used for tie-breaking and report output.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// A location reported at UNIX time `t` (seconds, UTC).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimestampedLocation {
    t: i64,
    point: GeoPoint,
}

impl TimestampedLocation {
    pub fn new(t: i64, point: GeoPoint) -> Result<Self> {
        if t < 0 {
            return Err(Error::InvalidTimestamp(t));
        }
        Ok(Self { t, point })
    }

    pub fn t(&self) -> i64 {
        self.t
    }

    pub fn point(&self) -> GeoPoint {
        self.point
    }

    pub(crate) fn with_point(self, point: GeoPoint) -> Self {
        Self { t: self.t, point }
    }
}

/// A user's locations in non-decreasing time order. Equal timestamps keep
/// their original relative order.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    user: UserId,
    locations: Vec<TimestampedLocation>,
}

impl MobilityTrace {
    pub fn new(user: UserId, mut locations: Vec<TimestampedLocation>) -> Self {
        locations.sort_by_key(|l| l.t);
        Self { user, locations }
    }

    /// Builds a trace from locations already in time order, as produced by
    /// mapping over an existing trace.
    pub(crate) fn from_sorted(user: UserId, locations: Vec<TimestampedLocation>) -> Self {
        debug_assert!(locations.windows(2).all(|w| w[0].t <= w[1].t));
        Self { user, locations }
    }

    pub fn user(&self) -> &UserId {
        &self.user
    }

    pub fn locations(&self) -> &[TimestampedLocation] {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

/// A point of interest: the centroid of a cluster of stays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poi {
    pub centroid: GeoPoint,
    /// Number of stays merged into the cluster.
    pub support: usize,
}

fn poi_order(a: &Poi, b: &Poi) -> Ordering {
    a.centroid
        .lat()
        .total_cmp(&b.centroid.lat())
        .then(a.centroid.lon().total_cmp(&b.centroid.lon()))
        .then(a.support.cmp(&b.support))
}

/// A user's POIs, ordered by latitude, then longitude, then support.
#[derive(Debug, Clone, PartialEq)]
pub struct PoiSet {
    user: UserId,
    pois: Vec<Poi>,
}

impl PoiSet {
    pub fn new(user: UserId, mut pois: Vec<Poi>) -> Self {
        pois.sort_by(poi_order);
        Self { user, pois }
    }

    pub fn empty(user: UserId) -> Self {
        Self { user, pois: Vec::new() }
    }

    pub fn user(&self) -> &UserId {
        &self.user
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn centroids(&self) -> impl Iterator<Item = GeoPoint> + '_ {
        self.pois.iter().map(|p| p.centroid)
    }
}

/// Per-user traces keyed by identifier.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    traces: BTreeMap<UserId, MobilityTrace>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a trace, returning the previous trace for that user if any.
    pub fn insert(&mut self, trace: MobilityTrace) -> Option<MobilityTrace> {
        self.traces.insert(trace.user.clone(), trace)
    }

    pub fn get(&self, user: &UserId) -> Option<&MobilityTrace> {
        self.traces.get(user)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.traces.keys()
    }

    pub fn traces(&self) -> impl Iterator<Item = &MobilityTrace> {
        self.traces.values()
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn total_locations(&self) -> usize {
        self.traces.values().map(MobilityTrace::len).sum()
    }
}

impl FromIterator<MobilityTrace> for Dataset {
    fn from_iter<I: IntoIterator<Item = MobilityTrace>>(iter: I) -> Self {
        let mut d = Dataset::new();
        for t in iter {
            d.insert(t);
        }
        d
    }
}
