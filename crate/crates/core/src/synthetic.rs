//! Synthetic mobility traces with planted POIs.
//!
//! Each user commutes daily between a home and a work place and visits one
//! of their extra places in the evening. Positions are sampled on a fixed
//! time grid with Gaussian GPS jitter; travel is a straight line at constant
//! speed. Users' places are kept apart so that their POI sets are pairwise
//! disjoint.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geo::{self, GeoPoint};
use crate::mechanism::{stream_seed, RandomSource};
use crate::model::{Dataset, MobilityTrace, TimestampedLocation, UserId};

const HOUR: i64 = 3600;
const DAY: i64 = 24 * HOUR;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub users: usize,
    /// Home, work and `pois_per_user - 2` evening places; at least 2.
    pub pois_per_user: usize,
    pub days: usize,
    /// Seconds between consecutive samples.
    pub sample_interval: i64,
    /// Standard deviation of per-axis GPS jitter, meters.
    pub jitter_m: f64,
    pub center: GeoPoint,
    /// Side of the square area places are drawn from, meters.
    pub area_m: f64,
    /// Minimum distance between places of the same user.
    pub min_place_separation_m: f64,
    /// Minimum distance between places of different users.
    pub min_user_separation_m: f64,
    pub travel_speed_mps: f64,
    /// UNIX time of the first midnight.
    pub start_t: i64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            users: 10,
            pois_per_user: 3,
            days: 7,
            sample_interval: 300,
            jitter_m: 10.0,
            center: GeoPoint::new(37.7749, -122.4194).expect("valid"),
            area_m: 40_000.0,
            min_place_separation_m: 8_000.0,
            min_user_separation_m: 1_000.0,
            travel_speed_mps: 10.0,
            start_t: 1_211_000_000 - 1_211_000_000 % DAY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub dataset: Dataset,
    /// Planted places per user, home first.
    pub places: BTreeMap<UserId, Vec<GeoPoint>>,
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Dwell(GeoPoint),
    Travel(GeoPoint, GeoPoint),
}

fn place_users(cfg: &PlantedConfig, rng: &mut RandomSource) -> Result<Vec<Vec<GeoPoint>>> {
    let mut placed: Vec<Vec<GeoPoint>> = Vec::with_capacity(cfg.users);
    let half = cfg.area_m / 2.0;
    for _ in 0..cfg.users {
        let mut mine: Vec<GeoPoint> = Vec::with_capacity(cfg.pois_per_user);
        let mut attempts = 0;
        while mine.len() < cfg.pois_per_user {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::param("could not place POIs; enlarge the area or relax separations"));
            }
            let dx = rng.random_range(-half..=half);
            let dy = rng.random_range(-half..=half);
            let p = geo::offset(cfg.center, dx, dy)?;
            let own_ok = mine.iter().all(|&q| geo::distance(p, q) >= cfg.min_place_separation_m);
            let others_ok = placed
                .iter()
                .flatten()
                .all(|&q| geo::distance(p, q) >= cfg.min_user_separation_m);
            if own_ok && others_ok {
                mine.push(p);
            }
        }
        placed.push(mine);
    }
    Ok(placed)
}

/// Daily itinerary as `(start, end, segment)` in absolute seconds.
fn itinerary(cfg: &PlantedConfig, places: &[GeoPoint]) -> Vec<(i64, i64, Segment)> {
    let travel_time = |a: GeoPoint, b: GeoPoint| (geo::distance(a, b) / cfg.travel_speed_mps).ceil() as i64;
    let mut plan = Vec::new();
    let (home, work) = (places[0], places[1]);
    let extras = &places[2..];
    let mut t = cfg.start_t;
    for day in 0..cfg.days as i64 {
        let midnight = cfg.start_t + day * DAY;
        let leave = midnight + 8 * HOUR;
        plan.push((t, leave, Segment::Dwell(home)));
        let arrive = leave + travel_time(home, work);
        plan.push((leave, arrive, Segment::Travel(home, work)));
        let off = midnight + 17 * HOUR;
        plan.push((arrive, off, Segment::Dwell(work)));
        t = off;
        let mut here = work;
        if !extras.is_empty() {
            let extra = extras[day as usize % extras.len()];
            let there = t + travel_time(here, extra);
            plan.push((t, there, Segment::Travel(here, extra)));
            plan.push((there, there + 2 * HOUR, Segment::Dwell(extra)));
            t = there + 2 * HOUR;
            here = extra;
        }
        let back = t + travel_time(here, home);
        plan.push((t, back, Segment::Travel(here, home)));
        t = back;
    }
    plan.push((t, cfg.start_t + cfg.days as i64 * DAY, Segment::Dwell(home)));
    plan
}

fn position(seg: Segment, start: i64, end: i64, t: i64) -> Result<GeoPoint> {
    match seg {
        Segment::Dwell(p) => Ok(p),
        Segment::Travel(a, b) => {
            let f = if end > start { (t - start) as f64 / (end - start) as f64 } else { 1.0 };
            let (dx, dy) = geo::displacement(a, b);
            geo::offset(a, dx * f, dy * f)
        }
    }
}

/// Generates `cfg.users` users named `user_00`, `user_01`, … .
pub fn planted_dataset(cfg: &PlantedConfig, seed: u64) -> Result<PlantedDataset> {
    if cfg.pois_per_user < 2 || cfg.days == 0 || cfg.sample_interval <= 0 || !(cfg.jitter_m >= 0.0) {
        return Err(Error::param("invalid planted dataset configuration"));
    }
    if cfg.pois_per_user > 2 && cfg.days < 2 * (cfg.pois_per_user - 2) {
        return Err(Error::param("too few days for every evening place to be visited twice"));
    }
    let mut rng = RandomSource::from_seed(stream_seed(seed, "planted-places"));
    let placed = place_users(cfg, &mut rng)?;
    let jitter = Normal::new(0.0, cfg.jitter_m).map_err(|e| Error::param(e.to_string()))?;

    let mut dataset = Dataset::new();
    let mut places = BTreeMap::new();
    let end = cfg.start_t + cfg.days as i64 * DAY;
    for (u, user_places) in placed.into_iter().enumerate() {
        let user = UserId::new(format!("user_{u:02}"));
        let mut rng = RandomSource::from_seed(stream_seed(seed, user.as_str()));
        let plan = itinerary(cfg, &user_places);
        let mut seg = 0;
        let mut locations = Vec::new();
        let mut t = cfg.start_t;
        while t < end {
            while seg + 1 < plan.len() && t >= plan[seg].1 {
                seg += 1;
            }
            let (s, e, segment) = plan[seg];
            let base = position(segment, s, e, t)?;
            let p = geo::offset(base, jitter.sample(&mut rng), jitter.sample(&mut rng))?;
            locations.push(TimestampedLocation::new(t, p)?);
            t += cfg.sample_interval;
        }
        dataset.insert(MobilityTrace::new(user.clone(), locations));
        places.insert(user, user_places);
    }
    Ok(PlantedDataset { dataset, places })
}
