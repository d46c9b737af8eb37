//! A spatially indexed set of map features answering k-nearest-neighbour and
//! categorical range queries.
//!
//! Features are bucketed into a uniform grid of square degree cells. Range
//! queries visit every cell that can hold a point within the radius and then
//! verify each candidate with the exact haversine distance, so results equal
//! a linear scan. k-NN queries issue range queries with a doubling radius
//! until at least k features are inside, which keeps them exact as well.

use std::collections::{HashMap, HashSet};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::geo::{self, GeoPoint, EARTH_RADIUS_M};
use crate::mechanism::RandomSource;

/// Default grid cell edge, meters of latitude.
pub const DEFAULT_CELL_M: f64 = 500.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub id: u64,
    pub point: GeoPoint,
    pub category: String,
    pub name: String,
}

impl Feature {
    pub fn new(id: u64, point: GeoPoint, category: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id,
            point,
            category: category.into(),
            name: name.into(),
        }
    }
}

type Cell = (i32, i32);

#[derive(Debug, Clone)]
pub struct FeatureStore {
    features: Vec<Feature>,
    cells: HashMap<Cell, Vec<usize>>,
    cell_deg: f64,
    cell_m: f64,
}

impl FeatureStore {
    pub fn build(features: Vec<Feature>) -> Result<Self> {
        Self::with_cell_size(features, DEFAULT_CELL_M)
    }

    pub fn with_cell_size(features: Vec<Feature>, cell_m: f64) -> Result<Self> {
        if !(cell_m > 0.0) {
            return Err(Error::param("cell size must be positive"));
        }
        let mut seen = HashSet::with_capacity(features.len());
        for f in &features {
            if !seen.insert(f.id) {
                return Err(Error::DuplicateFeatureId(f.id));
            }
        }
        let cell_deg = geo::latitude_span_deg(cell_m);
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, f) in features.iter().enumerate() {
            cells.entry(cell_of(f.point, cell_deg)).or_default().push(i);
        }
        Ok(Self {
            features,
            cells,
            cell_deg,
            cell_m,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    fn cell_index(&self, deg: f64) -> i32 {
        (deg / self.cell_deg).floor() as i32
    }

    /// Longitude intervals (degrees) that can contain points within `radius`
    /// of `c`, split at the antimeridian.
    fn lon_ranges(&self, c: GeoPoint, angular: f64) -> Vec<(f64, f64)> {
        let lat = c.lat().to_radians();
        if lat.abs() + angular >= std::f64::consts::FRAC_PI_2 {
            return vec![(-180.0, 180.0)];
        }
        let half = ((angular.sin() / lat.cos()).min(1.0).asin() + 1e-9).to_degrees();
        if half >= 180.0 {
            return vec![(-180.0, 180.0)];
        }
        let (lo, hi) = (c.lon() - half, c.lon() + half);
        if lo < -180.0 {
            vec![(lo + 360.0, 180.0), (-180.0, hi)]
        } else if hi > 180.0 {
            vec![(lo, 180.0), (-180.0, hi - 360.0)]
        } else {
            vec![(lo, hi)]
        }
    }

    fn candidates(&self, c: GeoPoint, radius: f64) -> Vec<usize> {
        let angular = radius / EARTH_RADIUS_M + 1e-12;
        let band = angular.to_degrees() + 1e-9;
        let lat_range = (
            self.cell_index((c.lat() - band).max(-90.0)),
            self.cell_index((c.lat() + band).min(90.0)),
        );
        let lon_ranges: Vec<(i32, i32)> = self
            .lon_ranges(c, angular)
            .into_iter()
            .map(|(lo, hi)| (self.cell_index(lo), self.cell_index(hi)))
            .collect();
        let in_range = |&(la, lo): &Cell| {
            la >= lat_range.0 && la <= lat_range.1 && lon_ranges.iter().any(|r| lo >= r.0 && lo <= r.1)
        };

        let visited: u64 = (lat_range.1 - lat_range.0 + 1) as u64
            * lon_ranges.iter().map(|r| (r.1 - r.0 + 1) as u64).sum::<u64>();
        let mut out = Vec::new();
        if visited > self.cells.len() as u64 {
            for (cell, members) in &self.cells {
                if in_range(cell) {
                    out.extend_from_slice(members);
                }
            }
        } else {
            for la in lat_range.0..=lat_range.1 {
                for r in &lon_ranges {
                    for lo in r.0..=r.1 {
                        if let Some(members) = self.cells.get(&(la, lo)) {
                            out.extend_from_slice(members);
                        }
                    }
                }
            }
        }
        out
    }

    /// All features within `radius` meters of `c` (boundary included),
    /// optionally restricted to `category`, sorted by id.
    pub fn range_query(&self, c: GeoPoint, radius: f64, category: Option<&str>) -> Vec<&Feature> {
        if !(radius >= 0.0) {
            return Vec::new();
        }
        let mut out: Vec<&Feature> = self
            .candidates(c, radius)
            .into_iter()
            .map(|i| &self.features[i])
            .filter(|f| category.is_none_or(|cat| f.category == cat))
            .filter(|f| geo::distance(c, f.point) <= radius)
            .collect();
        out.sort_by_key(|f| f.id);
        out
    }

    /// The `k` features nearest to `c`, by ascending distance then id. Fewer
    /// than `k` are returned only when the store holds fewer.
    pub fn top_k(&self, c: GeoPoint, k: usize) -> Vec<&Feature> {
        if k == 0 || self.features.is_empty() {
            return Vec::new();
        }
        let max_radius = std::f64::consts::PI * EARTH_RADIUS_M;
        let mut radius = self.cell_m;
        loop {
            let hits = self.range_query(c, radius, None);
            if hits.len() >= k || radius >= max_radius {
                let mut ranked: Vec<(f64, &Feature)> = hits.into_iter().map(|f| (geo::distance(c, f.point), f)).collect();
                ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
                ranked.truncate(k);
                return ranked.into_iter().map(|(_, f)| f).collect();
            }
            radius = (radius * 2.0).min(max_radius);
        }
    }
}

fn cell_of(p: GeoPoint, cell_deg: f64) -> Cell {
    ((p.lat() / cell_deg).floor() as i32, (p.lon() / cell_deg).floor() as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl BoundingBox {
    pub fn new(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> Result<Self> {
        GeoPoint::new(lat1, lon1)?;
        GeoPoint::new(lat2, lon2)?;
        let b = Self {
            south: lat1.min(lat2),
            north: lat1.max(lat2),
            west: lon1.min(lon2),
            east: lon1.max(lon2),
        };
        if b.south == b.north || b.west == b.east {
            return Err(Error::param("bounding box has zero area"));
        }
        Ok(b)
    }

    /// Spherical area in km².
    pub fn area_km2(&self) -> f64 {
        let r_km = EARTH_RADIUS_M / 1000.0;
        r_km * r_km
            * (self.east - self.west).to_radians()
            * (self.north.to_radians().sin() - self.south.to_radians().sin())
    }
}

/// Parameters for a synthetic uniform feature field.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFeatures {
    pub seed: u64,
    pub bbox: BoundingBox,
    /// Expected features per km².
    pub density: f64,
    pub categories: Vec<String>,
}

impl SyntheticFeatures {
    pub const DEFAULT_CATEGORIES: [&'static str; 4] = ["restaurant", "shop", "cafe", "bank"];

    pub fn generate(&self) -> Result<Vec<Feature>> {
        generate_synthetic(self.seed, self.bbox, self.density, &self.categories)
    }
}

/// Parses `density=<f>,seed=<u64>,bbox=<lat1,lon1,lat2,lon2>` with an
/// optional `categories=a|b|c`.
impl FromStr for SyntheticFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut fields: Vec<(String, Vec<String>)> = Vec::new();
        for token in s.split(',').map(str::trim) {
            match token.split_once('=') {
                Some((k, v)) => fields.push((k.trim().to_owned(), vec![v.trim().to_owned()])),
                None => match fields.last_mut() {
                    Some((_, values)) => values.push(token.to_owned()),
                    None => return Err(Error::param(format!("invalid synthetic spec `{s}`"))),
                },
            }
        }
        let num = |v: &str| -> Result<f64> { v.parse().map_err(|_| Error::param(format!("invalid number `{v}`"))) };
        let (mut density, mut seed, mut bbox) = (None, None, None);
        let mut categories: Vec<String> = Self::DEFAULT_CATEGORIES.iter().map(|c| c.to_string()).collect();
        for (key, values) in fields {
            match (key.as_str(), values.as_slice()) {
                ("density", [v]) => density = Some(num(v)?),
                ("seed", [v]) => seed = Some(v.parse::<u64>().map_err(|_| Error::param(format!("invalid seed `{v}`")))?),
                ("bbox", [a, b, c, d]) => bbox = Some(BoundingBox::new(num(a)?, num(b)?, num(c)?, num(d)?)?),
                ("categories", [v]) => categories = v.split('|').map(|c| c.trim().to_owned()).collect(),
                _ => return Err(Error::param(format!("invalid synthetic spec component `{key}`"))),
            }
        }
        match (density, seed, bbox) {
            (Some(density), Some(seed), Some(bbox)) => Ok(Self {
                seed,
                bbox,
                density,
                categories,
            }),
            _ => Err(Error::param("synthetic spec needs density=, seed= and bbox=")),
        }
    }
}

/// Uniform-by-area features in `bbox`; the count is Poisson with mean
/// `density * area`. Ids run from 0.
pub fn generate_synthetic(seed: u64, bbox: BoundingBox, density: f64, categories: &[String]) -> Result<Vec<Feature>> {
    if !(density >= 0.0 && density.is_finite()) {
        return Err(Error::param("density must be non-negative"));
    }
    if categories.is_empty() {
        return Err(Error::param("at least one category is required"));
    }
    let mean = density * bbox.area_km2();
    if mean == 0.0 {
        return Ok(Vec::new());
    }
    let mut rng = RandomSource::from_seed(seed);
    let poisson = Poisson::new(mean).map_err(|e| Error::param(format!("poisson mean {mean}: {e}")))?;
    let count = poisson.sample(&mut rng) as u64;
    let (s0, s1) = (bbox.south.to_radians().sin(), bbox.north.to_radians().sin());
    (0..count)
        .map(|id| {
            let lat = (s0 + (s1 - s0) * rng.uniform()).asin().to_degrees();
            let lon = bbox.west + (bbox.east - bbox.west) * rng.uniform();
            let category = &categories[rng.random_range(0..categories.len())];
            let point = GeoPoint::new(lat.clamp(bbox.south, bbox.north), lon)?;
            Ok(Feature::new(id, point, category.clone(), format!("{category} {id}")))
        })
        .collect()
}
