//! Loading mobility traces into the canonical model.
//!
//! Three sources are supported: the canonical CSV written by this crate,
//! the San Francisco cab traces (one space-separated file per taxi) and the
//! Geolife PLT trajectories (one directory per user). All loaders sort each
//! trace by timestamp and count unparsable records; more than 1 % malformed
//! records fails the load as corrupt.
//!
//! The feature CSV consumed by [`crate::features`] is also read and written
//! here.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use log::warn;
use rayon::prelude::*;
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::features::Feature;
use crate::geo::GeoPoint;
use crate::model::{Dataset, MobilityTrace, TimestampedLocation, UserId};

pub const CANONICAL_HEADER: &str = "user_id,timestamp,lat,lon";
pub const FEATURE_HEADER: &str = "feature_id,lat,lon,category,name";

const SECONDS_PER_DAY: i64 = 86_400;
const PLT_HEADER_LINES: usize = 6;

/// Counters collected while loading a dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Records successfully parsed.
    pub records: usize,
    pub malformed: usize,
    /// Files skipped because they could not be read or had a bad header.
    pub skipped_files: usize,
}

impl LoadReport {
    fn check_corruption(&self) -> Result<()> {
        let total = self.records + self.malformed;
        if self.malformed * 100 > total {
            return Err(Error::CorruptInput {
                malformed: self.malformed,
                total,
            });
        }
        Ok(())
    }

    fn absorb(&mut self, other: LoadReport) {
        self.records += other.records;
        self.malformed += other.malformed;
        self.skipped_files += other.skipped_files;
    }
}

/// Day-based user filter applied to Geolife.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterPolicy {
    /// A day qualifies when it holds strictly more locations than this.
    pub min_locations_per_day: usize,
    /// A user is kept with at least this many qualifying days.
    pub min_qualifying_days: usize,
}

impl FilterPolicy {
    pub fn new(min_locations_per_day: usize, min_qualifying_days: usize) -> Result<Self> {
        if min_locations_per_day == 0 || min_qualifying_days == 0 {
            return Err(Error::param("filter thresholds must be at least 1"));
        }
        Ok(Self {
            min_locations_per_day,
            min_qualifying_days,
        })
    }
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            min_locations_per_day: 480,
            min_qualifying_days: 30,
        }
    }
}

fn parse_location(t: &str, lat: &str, lon: &str) -> Option<TimestampedLocation> {
    let t: i64 = t.trim().parse().ok()?;
    let lat: f64 = lat.trim().parse().ok()?;
    let lon: f64 = lon.trim().parse().ok()?;
    let point = GeoPoint::new(lat, lon).ok()?;
    TimestampedLocation::new(t, point).ok()
}

fn assemble(per_user: BTreeMap<UserId, Vec<TimestampedLocation>>) -> Dataset {
    per_user
        .into_iter()
        .map(|(user, locs)| MobilityTrace::new(user, locs))
        .collect()
}

/// Parses the canonical `user_id,timestamp,lat,lon` CSV.
pub fn parse_canonical<R: Read>(input: R) -> Result<(Dataset, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    match records.next() {
        Some(Ok(h)) if header_matches(&h, CANONICAL_HEADER) => {}
        _ => {
            return Err(Error::MissingHeader {
                expected: CANONICAL_HEADER,
            })
        }
    }

    let mut report = LoadReport::default();
    let mut per_user: BTreeMap<UserId, Vec<TimestampedLocation>> = BTreeMap::new();
    for record in records {
        let parsed = record.ok().and_then(|r| {
            if r.len() != 4 || r[0].is_empty() {
                return None;
            }
            parse_location(&r[1], &r[2], &r[3]).map(|l| (UserId::new(&r[0]), l))
        });
        match parsed {
            Some((user, loc)) => {
                per_user.entry(user).or_default().push(loc);
                report.records += 1;
            }
            None => report.malformed += 1,
        }
    }
    report.check_corruption()?;
    Ok((assemble(per_user), report))
}

fn header_matches(record: &csv::StringRecord, expected: &str) -> bool {
    let fields: Vec<&str> = record.iter().map(str::trim).collect();
    fields.join(",").trim_start_matches('\u{feff}') == expected
}

/// Formats a coordinate with at least six fractional digits while keeping
/// the shortest representation that parses back to the same value.
pub(crate) fn format_coord(x: f64) -> String {
    let s = x.to_string();
    let fractional = s.split_once('.').map_or(0, |(_, f)| f.len());
    if fractional >= 6 {
        s
    } else {
        format!("{x:.6}")
    }
}

/// Writes `dataset` as canonical CSV in user order, returning the number of
/// records written.
pub fn write_canonical<W: Write>(dataset: &Dataset, output: W) -> Result<usize> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(output);
    writer.write_record(CANONICAL_HEADER.split(','))?;
    let mut count = 0;
    for trace in dataset.traces() {
        for loc in trace.locations() {
            writer.write_record([
                trace.user().as_str(),
                &loc.t().to_string(),
                &format_coord(loc.point().lat()),
                &format_coord(loc.point().lon()),
            ])?;
            count += 1;
        }
    }
    writer.flush()?;
    Ok(count)
}

struct FileBatch {
    user: UserId,
    locations: Vec<TimestampedLocation>,
    report: LoadReport,
}

fn merge_batches(root: &Path, batches: Vec<FileBatch>) -> Result<(Dataset, LoadReport)> {
    let mut report = LoadReport::default();
    let mut per_user: BTreeMap<UserId, Vec<TimestampedLocation>> = BTreeMap::new();
    for batch in batches {
        report.absorb(batch.report);
        if batch.report.skipped_files == 0 {
            per_user.entry(batch.user).or_default().extend(batch.locations);
        }
    }
    if per_user.is_empty() {
        return Err(Error::EmptyDirectory(root.to_path_buf()));
    }
    report.check_corruption()?;
    Ok((assemble(per_user), report))
}

fn skipped(user: UserId) -> FileBatch {
    FileBatch {
        user,
        locations: Vec::new(),
        report: LoadReport {
            skipped_files: 1,
            ..LoadReport::default()
        },
    }
}

fn read_text(path: &Path) -> Option<String> {
    match fs::read(path) {
        Ok(bytes) => Some(String::from_utf8_lossy(&bytes).into_owned()),
        Err(e) => {
            warn!("skipping unreadable file {}: {e}", path.display());
            None
        }
    }
}

/// Taxi identifier carried by an SF-cabs file name (`new_<id>.txt`), or
/// `None` for files that are not per-taxi traces.
fn cab_id(path: &Path) -> Option<UserId> {
    if path.extension()? != "txt" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    if stem.starts_with('_') {
        return None;
    }
    Some(UserId::new(stem.strip_prefix("new_").unwrap_or(stem)))
}

fn parse_cab_file(path: &Path, user: UserId) -> FileBatch {
    let Some(text) = read_text(path) else {
        return skipped(user);
    };
    let mut report = LoadReport::default();
    let mut locations = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = match fields.as_slice() {
            // latitude longitude occupancy timestamp
            [lat, lon, occupancy, t] if occupancy.parse::<u8>().is_ok() => {
                parse_location(t, lat, lon)
            }
            _ => None,
        };
        match parsed {
            Some(l) => {
                locations.push(l);
                report.records += 1;
            }
            None => report.malformed += 1,
        }
    }
    FileBatch {
        user,
        locations,
        report,
    }
}

/// Loads the San Francisco cab traces from a directory of per-taxi files.
pub fn parse_sfcabs(directory: &Path) -> Result<(Dataset, LoadReport)> {
    let mut files: Vec<(PathBuf, UserId)> = fs::read_dir(directory)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter_map(|p| cab_id(&p).map(|id| (p, id)))
        .collect();
    files.sort();
    let batches = files
        .into_par_iter()
        .map(|(path, user)| parse_cab_file(&path, user))
        .collect();
    merge_batches(directory, batches)
}

fn plt_header_ok(lines: &[&str]) -> bool {
    lines.len() == PLT_HEADER_LINES
        && lines[0].trim().to_ascii_lowercase().starts_with("geolife trajectory")
        && lines[1].contains("WGS")
}

fn parse_plt_record(line: &str) -> Option<TimestampedLocation> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return None;
    }
    let stamp = format!("{} {}", fields[5], fields[6]);
    let t = NaiveDateTime::parse_from_str(&stamp, "%Y-%m-%d %H:%M:%S")
        .ok()?
        .and_utc()
        .timestamp();
    parse_location(&t.to_string(), fields[0], fields[1])
}

fn parse_plt_file(path: &Path, user: UserId) -> FileBatch {
    let Some(text) = read_text(path) else {
        return skipped(user);
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.by_ref().take(PLT_HEADER_LINES).collect();
    if !plt_header_ok(&header) {
        warn!("skipping {}: malformed PLT header", path.display());
        return skipped(user);
    }
    let mut report = LoadReport::default();
    let mut locations = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        match parse_plt_record(line) {
            Some(l) => {
                locations.push(l);
                report.records += 1;
            }
            None => report.malformed += 1,
        }
    }
    FileBatch {
        user,
        locations,
        report,
    }
}

/// Owner of a PLT file: the first directory under `root` (skipping a
/// top-level `Data` directory), or the root's own name for flat layouts.
fn geolife_user(root: &Path, path: &Path) -> Option<UserId> {
    let relative = path.strip_prefix(root).ok()?;
    let mut dirs: Vec<&str> = relative
        .parent()?
        .components()
        .filter_map(|c| c.as_os_str().to_str())
        .collect();
    if dirs.first() == Some(&"Data") {
        dirs.remove(0);
    }
    match dirs.first() {
        Some(user) => Some(UserId::new(*user)),
        None => root.file_name()?.to_str().map(UserId::new),
    }
}

/// Loads Geolife trajectories: `<root>/[Data/]<user>/**/*.plt`.
pub fn parse_geolife(directory: &Path) -> Result<(Dataset, LoadReport)> {
    if !directory.is_dir() {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{} is not a directory", directory.display()),
        )));
    }
    let mut files: Vec<(PathBuf, UserId)> = WalkDir::new(directory)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("plt")))
        .filter_map(|p| geolife_user(directory, &p).map(|u| (p, u)))
        .collect();
    files.sort();
    let batches = files
        .into_par_iter()
        .map(|(path, user)| parse_plt_file(&path, user))
        .collect();
    merge_batches(directory, batches)
}

/// Keeps, per user, only UTC days with more than
/// `min_locations_per_day` locations, and only users with at least
/// `min_qualifying_days` such days.
pub fn filter_dataset(dataset: &Dataset, policy: FilterPolicy) -> Dataset {
    dataset
        .traces()
        .filter_map(|trace| {
            let mut per_day: BTreeMap<i64, usize> = BTreeMap::new();
            for l in trace.locations() {
                *per_day.entry(l.t().div_euclid(SECONDS_PER_DAY)).or_default() += 1;
            }
            per_day.retain(|_, n| *n > policy.min_locations_per_day);
            if per_day.len() < policy.min_qualifying_days {
                return None;
            }
            let kept = trace
                .locations()
                .iter()
                .filter(|l| per_day.contains_key(&l.t().div_euclid(SECONDS_PER_DAY)))
                .copied()
                .collect();
            Some(MobilityTrace::from_sorted(trace.user().clone(), kept))
        })
        .collect()
}

/// Parses the feature CSV `feature_id,lat,lon,category,name`. Malformed
/// rows follow the same 1 % tolerance as trace files.
pub fn parse_features<R: Read>(input: R) -> Result<Vec<Feature>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    match records.next() {
        Some(Ok(h)) if header_matches(&h, FEATURE_HEADER) => {}
        _ => {
            return Err(Error::MissingHeader {
                expected: FEATURE_HEADER,
            })
        }
    }
    let mut report = LoadReport::default();
    let mut features = Vec::new();
    for record in records {
        let parsed = record.ok().and_then(|r| {
            if r.len() != 5 {
                return None;
            }
            let id: u64 = r[0].trim().parse().ok()?;
            let lat: f64 = r[1].trim().parse().ok()?;
            let lon: f64 = r[2].trim().parse().ok()?;
            let point = GeoPoint::new(lat, lon).ok()?;
            Some(Feature::new(id, point, &r[3], &r[4]))
        });
        match parsed {
            Some(f) => {
                features.push(f);
                report.records += 1;
            }
            None => report.malformed += 1,
        }
    }
    report.check_corruption()?;
    Ok(features)
}

pub fn write_features<W: Write>(features: &[Feature], output: W) -> Result<usize> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(output);
    writer.write_record(FEATURE_HEADER.split(','))?;
    for f in features {
        writer.write_record([
            f.id.to_string(),
            format_coord(f.point.lat()),
            format_coord(f.point.lon()),
            f.category.clone(),
            f.name.clone(),
        ])?;
    }
    writer.flush()?;
    Ok(features.len())
}
