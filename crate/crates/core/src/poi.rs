//! POI extraction: stay detection followed by DJ-clustering of the stay
//! centroids.
//!
//! Stays are found with a sliding candidate window over the time-ordered
//! trace. A point joins the window when it lies within `max_distance` of
//! every point already in it. When a point does not fit, the window is
//! emitted as a stay if it spans at least `min_time`, otherwise its oldest
//! point is dropped and the same point is tried again.
//!
//! Clustering then visits each stay in order, collects every stay within
//! `max_distance * merge_factor` of it (itself included) and, when that
//! neighbourhood holds at least `min_pts` stays, absorbs every existing
//! cluster sharing a stay with it. POIs are the centroids of the final
//! clusters.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geo::{self, CachedPoint, GeoPoint, WithinDistance};
use crate::ingestion::format_coord;
use crate::model::{MobilityTrace, Poi, PoiSet, TimestampedLocation, UserId};

pub const POI_HEADER: &str = "user_id,lat,lon,support";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionParams {
    /// Minimum stay duration, seconds.
    pub min_time: i64,
    /// Maximum stay diameter, meters.
    pub max_distance: f64,
    /// Minimum number of stays forming a cluster.
    pub min_pts: usize,
    /// Cluster merge distance as a fraction of `max_distance`.
    pub merge_factor: f64,
}

impl ExtractionParams {
    pub const DEFAULT_MERGE_FACTOR: f64 = 0.75;

    pub fn new(min_time: i64, max_distance: f64, min_pts: usize) -> Result<Self> {
        let params = Self {
            min_time,
            max_distance,
            min_pts,
            merge_factor: Self::DEFAULT_MERGE_FACTOR,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_time <= 0 {
            return Err(Error::param("min_time must be positive"));
        }
        if !(self.max_distance > 0.0 && self.max_distance.is_finite()) {
            return Err(Error::param("max_distance must be positive"));
        }
        if self.min_pts == 0 {
            return Err(Error::param("min_pts must be at least 1"));
        }
        if !(self.merge_factor > 0.0) {
            return Err(Error::param("merge_factor must be positive"));
        }
        Ok(())
    }

    /// Same parameters with a different distance threshold, as an attacker
    /// would tune them against obfuscated traces.
    pub fn with_max_distance(&self, max_distance: f64) -> Result<Self> {
        let params = Self {
            max_distance,
            ..*self
        };
        params.validate()?;
        Ok(params)
    }

    pub fn merge_distance(&self) -> f64 {
        self.max_distance * self.merge_factor
    }
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            min_time: 3600,
            max_distance: 250.0,
            min_pts: 2,
            merge_factor: Self::DEFAULT_MERGE_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stay {
    pub centroid: GeoPoint,
    pub start_t: i64,
    pub end_t: i64,
    pub point_count: usize,
}

fn elapsed(window: &[TimestampedLocation]) -> i64 {
    match (window.first(), window.last()) {
        (Some(first), Some(last)) => last.t() - first.t(),
        _ => 0,
    }
}

fn make_stay(window: &[TimestampedLocation]) -> Stay {
    Stay {
        centroid: geo::centroid(window.iter().map(|l| l.point())).expect("non-empty window"),
        start_t: window[0].t(),
        end_t: window[window.len() - 1].t(),
        point_count: window.len(),
    }
}

pub fn extract_stays(trace: &MobilityTrace, params: &ExtractionParams) -> Vec<Stay> {
    let points = trace.locations();
    let cached: Vec<CachedPoint> = points.iter().map(|l| CachedPoint::new(l.point())).collect();
    let within = WithinDistance::new(params.max_distance);
    let mut stays = Vec::new();
    // the candidate window is always the contiguous run points[start..i]
    let mut start = 0;
    let mut i = 0;
    while i < points.len() {
        let fits = cached[start..i].iter().all(|c| within.test(&cached[i], c));
        if fits {
            i += 1;
        } else if elapsed(&points[start..i]) >= params.min_time {
            stays.push(make_stay(&points[start..i]));
            start = i;
        } else {
            start += 1;
        }
    }
    if elapsed(&points[start..i]) >= params.min_time {
        stays.push(make_stay(&points[start..i]));
    }
    stays
}

/// Stay centroids sorted by latitude for band-limited neighbourhood scans.
struct NeighborIndex {
    by_lat: Vec<(f64, usize)>,
    cached: Vec<CachedPoint>,
    points: Vec<GeoPoint>,
}

impl NeighborIndex {
    fn new(points: Vec<GeoPoint>) -> Self {
        let mut by_lat: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (p.lat(), i)).collect();
        by_lat.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let cached = points.iter().copied().map(CachedPoint::new).collect();
        Self { by_lat, cached, points }
    }

    /// Indices of all points within `radius` of point `center`, ascending.
    fn within(&self, center: usize, radius: f64, test: &WithinDistance) -> Vec<usize> {
        let lat = self.points[center].lat();
        let band = geo::latitude_span_deg(radius) + 1e-9;
        let lo = self.by_lat.partition_point(|&(l, _)| l < lat - band);
        let hi = self.by_lat.partition_point(|&(l, _)| l <= lat + band);
        let mut out: Vec<usize> = self.by_lat[lo..hi]
            .iter()
            .map(|&(_, j)| j)
            .filter(|&j| test.test(&self.cached[center], &self.cached[j]))
            .collect();
        out.sort_unstable();
        out
    }
}

pub fn dj_cluster(stays: &[Stay], params: &ExtractionParams) -> Vec<Poi> {
    let merge = params.merge_distance();
    let test = WithinDistance::new(merge);
    let index = NeighborIndex::new(stays.iter().map(|s| s.centroid).collect());

    // Live clusters are pairwise disjoint, so absorbing every cluster that
    // meets the neighbourhood is independent of visiting order.
    let mut clusters: Vec<Option<BTreeSet<usize>>> = Vec::new();
    let mut owner: Vec<Option<usize>> = vec![None; stays.len()];
    for s in 0..stays.len() {
        let neighborhood = index.within(s, merge, &test);
        if neighborhood.len() < params.min_pts {
            continue;
        }
        let mut absorbed: Vec<usize> = neighborhood.iter().filter_map(|&m| owner[m]).collect();
        absorbed.sort_unstable();
        absorbed.dedup();
        let mut members: BTreeSet<usize> = neighborhood.into_iter().collect();
        for id in absorbed {
            members.extend(clusters[id].take().expect("live cluster"));
        }
        let id = clusters.len();
        for &m in &members {
            owner[m] = Some(id);
        }
        clusters.push(Some(members));
    }

    clusters
        .into_iter()
        .flatten()
        .map(|members| Poi {
            centroid: geo::centroid(members.iter().map(|&m| stays[m].centroid)).expect("non-empty cluster"),
            support: members.len(),
        })
        .collect()
}

pub fn extract_pois(trace: &MobilityTrace, params: &ExtractionParams) -> PoiSet {
    let stays = extract_stays(trace, params);
    PoiSet::new(trace.user().clone(), dj_cluster(&stays, params))
}

/// Writes POI sets as `user_id,lat,lon,support`, users in the given order.
pub fn write_poi_csv<'a, W, I>(sets: I, output: W) -> Result<usize>
where
    W: Write,
    I: IntoIterator<Item = &'a PoiSet>,
{
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(output);
    writer.write_record(POI_HEADER.split(','))?;
    let mut n = 0;
    for set in sets {
        for poi in set.pois() {
            writer.write_record([
                set.user().as_str(),
                &format_coord(poi.centroid.lat()),
                &format_coord(poi.centroid.lon()),
                &poi.support.to_string(),
            ])?;
            n += 1;
        }
    }
    writer.flush()?;
    Ok(n)
}

/// Reads a POI CSV. Users without POIs do not appear in the file and so
/// are absent from the result.
pub fn parse_poi_csv<R: Read>(input: R) -> Result<BTreeMap<UserId, PoiSet>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    if header.join(",") != POI_HEADER {
        return Err(Error::MissingHeader { expected: POI_HEADER });
    }
    let mut per_user: BTreeMap<UserId, Vec<Poi>> = BTreeMap::new();
    for record in reader.records() {
        let r = record?;
        let bad = || Error::param(format!("invalid POI row `{}`", r.iter().collect::<Vec<_>>().join(",")));
        let lat: f64 = r[1].trim().parse().map_err(|_| bad())?;
        let lon: f64 = r[2].trim().parse().map_err(|_| bad())?;
        let support: usize = r[3].trim().parse().map_err(|_| bad())?;
        per_user.entry(UserId::new(&r[0])).or_default().push(Poi {
            centroid: GeoPoint::new(lat, lon)?,
            support,
        });
    }
    Ok(per_user
        .into_iter()
        .map(|(user, pois)| (user.clone(), PoiSet::new(user, pois)))
        .collect())
}
