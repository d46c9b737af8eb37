//! End-to-end study: ground truth, obfuscation campaigns, attacker threshold
//! sweeps, metric aggregation and report emission.
//!
//! Every stage is a pure function of its inputs and the master seed. Work is
//! spread over runs (and thresholds) with rayon; results are collected in
//! index order, so scheduling never changes the numbers.

mod campaign;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use rand::seq::index;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::geo::GeoPoint;
use crate::ingestion::write_canonical;
use crate::mechanism::{run_seed, stream_seed, user_seed, NoiseMechanism, PrivacyLevel, RandomSource};
use crate::metrics::{self, RangeQuery, ReidentInput};
use crate::model::{Dataset, MobilityTrace, PoiSet, UserId};
use crate::poi::{extract_pois, ExtractionParams};

pub use campaign::{read_campaign, write_campaign, Campaign, CAMPAIGN_MANIFEST};
pub use report::{empirical_cdf, emit_report, Manifest};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub min: f64,
    pub max: f64,
    pub step: f64,
    pub recall_target: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { min: 100.0, max: 5000.0, step: 100.0, recall_target: 0.70 }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.min > 0.0) || !(self.max >= self.min) || !self.max.is_finite() {
            return Err(Error::param("sweep needs 0 < min <= max and step > 0"));
        }
        if !(self.recall_target > 0.0 && self.recall_target < 1.0) {
            return Err(Error::param("recall target must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `min, min + step, …` up to `max`; computed from integer step counts.
    pub fn thresholds(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.min + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionConfig {
    pub radius: f64,
    pub alpha: f64,
    pub samples: usize,
    pub category: Option<String>,
    /// Seed for picking the sampled locations; derived from the master seed
    /// when absent.
    pub seed: Option<u64>,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self {
            radius: 500.0,
            alpha: 0.85,
            samples: 100,
            category: Some("restaurant".to_owned()),
            seed: None,
        }
    }
}

impl PrecisionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::param("precision radius must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha must lie in (0, 1)"));
        }
        if self.samples == 0 {
            return Err(Error::param("precision needs at least one sample"));
        }
        Ok(())
    }

    pub fn sample_seed(&self, master_seed: u64) -> u64 {
        self.seed.unwrap_or_else(|| stream_seed(master_seed, "precision-sample"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub levels: Vec<NoiseMechanism>,
    pub runs: usize,
    pub master_seed: u64,
    /// Ground-truth extraction; the attacker reuses `min_time` and `min_pts`.
    pub extraction: ExtractionParams,
    pub sweep: SweepConfig,
    pub precision: PrecisionConfig,
    pub semantic_k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            levels: PrivacyLevel::reference_levels().into_iter().map(NoiseMechanism::PlanarLaplace).collect(),
            runs: 10,
            master_seed: 0,
            extraction: ExtractionParams::default(),
            sweep: SweepConfig::default(),
            precision: PrecisionConfig::default(),
            semantic_k: metrics::DEFAULT_SEMANTIC_K,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::param("runs must be at least 1"));
        }
        if self.semantic_k == 0 {
            return Err(Error::param("semantic k must be at least 1"));
        }
        self.extraction.validate()?;
        self.sweep.validate()?;
        self.precision.validate()
    }
}

/// Real POIs per user. Users whose extraction is empty are listed separately
/// and left out of every downstream metric.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub pois: BTreeMap<UserId, PoiSet>,
    pub empty_users: Vec<UserId>,
}

impl GroundTruth {
    /// Splits off empty sets.
    pub fn from_sets(sets: impl IntoIterator<Item = PoiSet>) -> Self {
        let mut gt = GroundTruth::default();
        for set in sets {
            if set.is_empty() {
                gt.empty_users.push(set.user().clone());
            } else {
                gt.pois.insert(set.user().clone(), set);
            }
        }
        gt.empty_users.sort();
        gt
    }

    pub fn total_pois(&self) -> usize {
        self.pois.values().map(PoiSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }
}

pub fn run_ground_truth(dataset: &Dataset, params: &ExtractionParams) -> GroundTruth {
    let traces: Vec<&MobilityTrace> = dataset.traces().collect();
    let sets: Vec<PoiSet> = traces.par_iter().map(|t| extract_pois(t, params)).collect();
    GroundTruth::from_sets(sets)
}

/// One obfuscated copy of `dataset`; each user draws from its own stream.
pub fn obfuscate_run(dataset: &Dataset, mechanism: &NoiseMechanism, master_seed: u64, run: usize) -> Result<Dataset> {
    let seed = run_seed(master_seed, run);
    let traces: Vec<&MobilityTrace> = dataset.traces().collect();
    let out = traces
        .par_iter()
        .map(|t| {
            let mut rng = RandomSource::from_seed(user_seed(seed, t.user()));
            mechanism.obfuscate_trace(t, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out.into_iter().collect())
}

pub fn run_obfuscation_campaign(
    dataset: &Dataset,
    mechanism: &NoiseMechanism,
    runs: usize,
    master_seed: u64,
) -> Result<Vec<Dataset>> {
    (0..runs).map(|run| obfuscate_run(dataset, mechanism, master_seed, run)).collect()
}

fn obfuscated_set(obf: &Dataset, user: &UserId, params: &ExtractionParams) -> PoiSet {
    match obf.get(user) {
        Some(trace) => extract_pois(trace, params),
        None => PoiSet::empty(user.clone()),
    }
}

/// Mean over ground-truth users of the recall of one obfuscated run.
fn run_recall(obf: &Dataset, gt: &GroundTruth, params: &ExtractionParams) -> f64 {
    let sum: f64 = gt
        .pois
        .iter()
        .map(|(user, real)| {
            let set = obfuscated_set(obf, user, params);
            metrics::recall(&set, real).unwrap_or(0.0)
        })
        .sum();
    sum / gt.pois.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub mean_recall: f64,
    pub per_run: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub label: String,
    pub recall_target: f64,
    pub points: Vec<SweepPoint>,
    /// Smallest threshold whose mean recall exceeds the target.
    pub optimal: Option<f64>,
}

impl SweepResult {
    pub fn reached(&self) -> bool {
        self.optimal.is_some()
    }

    /// Highest mean recall; the smallest threshold wins ties.
    pub fn best(&self) -> Option<&SweepPoint> {
        self.points
            .iter()
            .fold(None, |best: Option<&SweepPoint>, p| match best {
                Some(b) if b.mean_recall >= p.mean_recall => Some(b),
                _ => Some(p),
            })
    }

    /// The optimal threshold, or the best-effort one when unreached.
    pub fn chosen_threshold(&self) -> Option<f64> {
        self.optimal.or_else(|| self.best().map(|p| p.threshold))
    }
}

/// Re-extracts POIs from every run at each swept `max_distance`, keeping the
/// rest of `base` unchanged.
pub fn threshold_sweep(
    campaign: &[Dataset],
    gt: &GroundTruth,
    base: &ExtractionParams,
    sweep: &SweepConfig,
    label: &str,
) -> Result<SweepResult> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    if campaign.is_empty() {
        return Err(Error::EmptyInput("campaign"));
    }
    sweep.validate()?;
    let thresholds = sweep.thresholds();
    let params = thresholds
        .iter()
        .map(|&t| base.with_max_distance(t))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..thresholds.len())
        .flat_map(|i| (0..campaign.len()).map(move |r| (i, r)))
        .collect();
    let recalls: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, r)| run_recall(&campaign[r], gt, &params[i]))
        .collect();
    let points: Vec<SweepPoint> = thresholds
        .iter()
        .zip(recalls.chunks(campaign.len()))
        .map(|(&threshold, per_run)| SweepPoint {
            threshold,
            mean_recall: per_run.iter().sum::<f64>() / per_run.len() as f64,
            per_run: per_run.to_vec(),
        })
        .collect();
    let optimal = points
        .iter()
        .find(|p| p.mean_recall > sweep.recall_target)
        .map(|p| p.threshold);
    Ok(SweepResult { label: label.to_owned(), recall_target: sweep.recall_target, points, optimal })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRunRow {
    pub user: UserId,
    pub run: usize,
    pub recall: f64,
    pub n_real: usize,
    pub n_obf: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub user: UserId,
    pub run: usize,
    pub geo_m: f64,
    pub semantic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSummary {
    pub alpha: f64,
    pub radius: f64,
    pub enlargement: f64,
    pub mean_precision: f64,
    /// Query evaluations over all runs.
    pub n_samples: usize,
    pub n_empty: usize,
    pub per_run: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub mechanism: NoiseMechanism,
    pub threshold: f64,
    pub sweep: Option<SweepResult>,
    pub per_run_recall: Vec<f64>,
    pub mean_recall: f64,
    pub user_rows: Vec<UserRunRow>,
    pub pair_rows: Vec<PairRow>,
    pub reident_per_run: Vec<f64>,
    pub reident_rate: f64,
    pub reident_users: usize,
    pub precision: Option<PrecisionSummary>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 })
}

impl LevelReport {
    pub fn label(&self) -> String {
        self.mechanism.label()
    }

    /// Pooled geographic distances over all users and runs.
    pub fn geo_values(&self) -> Vec<f64> {
        self.pair_rows.iter().map(|p| p.geo_m).collect()
    }

    pub fn semantic_values(&self) -> Vec<f64> {
        self.pair_rows.iter().filter_map(|p| p.semantic).collect()
    }

    /// Per-run medians of the geographic distance, averaged over the runs
    /// that produced at least one pair.
    pub fn mean_median_geo(&self) -> Option<f64> {
        let mut by_run: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for p in &self.pair_rows {
            by_run.entry(p.run).or_default().push(p.geo_m);
        }
        let medians: Vec<f64> = by_run.values_mut().filter_map(|v| median(v)).collect();
        (!medians.is_empty()).then(|| medians.iter().sum::<f64>() / medians.len() as f64)
    }
}

/// Everything one privacy level is evaluated on.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation<'a> {
    pub ground_truth: &'a GroundTruth,
    pub campaign: &'a [Dataset],
    pub mechanism: NoiseMechanism,
    pub threshold: f64,
    pub store: Option<&'a FeatureStore>,
    /// Real traces; the precision experiment samples its locations here.
    pub real_traces: Option<&'a Dataset>,
}

struct RunOutcome {
    recall: f64,
    users: Vec<UserRunRow>,
    pairs: Vec<PairRow>,
    reident: f64,
}

fn evaluate_run(e: &Evaluation, run: usize, params: &ExtractionParams, k: usize) -> Result<RunOutcome> {
    let gt = e.ground_truth;
    let obf = &e.campaign[run];
    let mut users = Vec::with_capacity(gt.pois.len());
    let mut pairs = Vec::new();
    let mut anonymous = Vec::with_capacity(gt.pois.len());
    for (user, real) in &gt.pois {
        let set = obfuscated_set(obf, user, params);
        let remapped = metrics::remap(&set, real);
        let recall = remapped.as_ref().map_or(0.0, |r| r.recall());
        users.push(UserRunRow { user: user.clone(), run, recall, n_real: real.len(), n_obf: set.len() });
        if let Some(r) = &remapped {
            let semantic = match e.store {
                Some(store) => metrics::semantic_distance(r, store, k)?.into_iter().map(Some).collect(),
                None => vec![None; r.pairs.len()],
            };
            for (geo, semantic) in metrics::geographic_distance(r).into_iter().zip(semantic) {
                pairs.push(PairRow { user: user.clone(), run, geo_m: geo, semantic });
            }
        }
        anonymous.push(set);
    }
    let outcome = metrics::reident(&ReidentInput { real: gt.pois.clone(), anonymous })?;
    let recall = users.iter().map(|u| u.recall).sum::<f64>() / users.len() as f64;
    Ok(RunOutcome { recall, users, pairs, reident: outcome.rate })
}

/// Metrics of one level at a fixed attacker threshold.
pub fn evaluate(e: &Evaluation, config: &ExperimentConfig) -> Result<LevelReport> {
    if e.ground_truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    if e.campaign.is_empty() {
        return Err(Error::EmptyInput("campaign"));
    }
    let params = config.extraction.with_max_distance(e.threshold)?;
    let outcomes = (0..e.campaign.len())
        .into_par_iter()
        .map(|run| evaluate_run(e, run, &params, config.semantic_k))
        .collect::<Result<Vec<_>>>()?;

    let precision = match (e.store, e.real_traces) {
        (Some(store), Some(real)) => Some(precision_experiment(
            real,
            &e.mechanism,
            store,
            &config.precision,
            config.master_seed,
            e.campaign.len(),
        )?),
        _ => None,
    };
    let runs = outcomes.len() as f64;
    let mut report = LevelReport {
        mechanism: e.mechanism,
        threshold: e.threshold,
        sweep: None,
        per_run_recall: outcomes.iter().map(|o| o.recall).collect(),
        mean_recall: outcomes.iter().map(|o| o.recall).sum::<f64>() / runs,
        user_rows: Vec::new(),
        pair_rows: Vec::new(),
        reident_per_run: outcomes.iter().map(|o| o.reident).collect(),
        reident_rate: outcomes.iter().map(|o| o.reident).sum::<f64>() / runs,
        reident_users: e.ground_truth.pois.len(),
        precision,
    };
    for o in outcomes {
        report.user_rows.extend(o.users);
        report.pair_rows.extend(o.pairs);
    }
    Ok(report)
}

/// Samples locations from the real traces once, then queries around a fresh
/// obfuscation of each of them in every run.
pub fn precision_experiment(
    dataset: &Dataset,
    mechanism: &NoiseMechanism,
    store: &FeatureStore,
    cfg: &PrecisionConfig,
    master_seed: u64,
    runs: usize,
) -> Result<PrecisionSummary> {
    cfg.validate()?;
    let points: Vec<GeoPoint> = dataset.traces().flat_map(|t| t.locations().iter().map(|l| l.point())).collect();
    if points.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let mut rng = RandomSource::from_seed(cfg.sample_seed(master_seed));
    let mut picked = index::sample(&mut rng, points.len(), cfg.samples.min(points.len())).into_vec();
    picked.sort_unstable();
    let query = RangeQuery { radius: cfg.radius, category: cfg.category.clone() };

    let per_run = (0..runs.max(1))
        .into_par_iter()
        .map(|run| {
            let seed = stream_seed(run_seed(master_seed, run), "precision");
            picked
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let mut rng = RandomSource::from_seed(stream_seed(seed, &i.to_string()));
                    metrics::precision(points[p], mechanism, store, &query, cfg.alpha, &mut rng)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let run_means: Vec<f64> = per_run
        .iter()
        .map(|s| s.iter().map(|x| x.precision).sum::<f64>() / s.len() as f64)
        .collect();
    let n_samples = per_run.iter().map(Vec::len).sum();
    let n_empty = per_run.iter().flatten().filter(|s| s.empty).count();
    Ok(PrecisionSummary {
        alpha: cfg.alpha,
        radius: cfg.radius,
        enlargement: mechanism.enlargement(cfg.alpha)?,
        mean_precision: run_means.iter().sum::<f64>() / run_means.len() as f64,
        n_samples,
        n_empty,
        per_run: run_means,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub config: ExperimentConfig,
    /// SHA-256 of the dataset in canonical CSV form.
    pub dataset_digest: Option<String>,
    pub users: usize,
    pub locations: usize,
    pub ground_truth_pois: usize,
    pub excluded_users: Vec<UserId>,
    pub features: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub levels: Vec<LevelReport>,
    pub metadata: RunMetadata,
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub fn dataset_digest(dataset: &Dataset) -> Result<String> {
    let mut w = HashWriter(Sha256::new());
    write_canonical(dataset, &mut w)?;
    Ok(hex::encode(w.0.finalize()))
}

/// Ground truth, then for every level: campaign, sweep, evaluation at the
/// chosen threshold.
pub fn run_experiment(
    dataset: &Dataset,
    config: &ExperimentConfig,
    store: Option<&FeatureStore>,
) -> Result<EvaluationReport> {
    config.validate()?;
    let gt = run_ground_truth(dataset, &config.extraction);
    log::info!(
        "ground truth: {} POIs for {} users, {} users without POIs",
        gt.total_pois(),
        gt.pois.len(),
        gt.empty_users.len()
    );
    let mut levels = Vec::with_capacity(config.levels.len());
    for mechanism in &config.levels {
        let campaign = run_obfuscation_campaign(dataset, mechanism, config.runs, config.master_seed)?;
        let sweep = threshold_sweep(&campaign, &gt, &config.extraction, &config.sweep, &mechanism.label())?;
        let threshold = sweep.chosen_threshold().expect("sweep has at least one point");
        if !sweep.reached() {
            log::warn!("level {mechanism}: recall target unreached, using best threshold {threshold} m");
        }
        let e = Evaluation {
            ground_truth: &gt,
            campaign: &campaign,
            mechanism: *mechanism,
            threshold,
            store,
            real_traces: Some(dataset),
        };
        let mut level = evaluate(&e, config)?;
        log::info!(
            "level {mechanism}: threshold {threshold} m, recall {:.4}, reident {:.4}",
            level.mean_recall,
            level.reident_rate
        );
        level.sweep = Some(sweep);
        levels.push(level);
    }
    let excluded: BTreeSet<UserId> = gt.empty_users.iter().cloned().collect();
    Ok(EvaluationReport {
        levels,
        metadata: RunMetadata {
            config: config.clone(),
            dataset_digest: Some(dataset_digest(dataset)?),
            users: dataset.len(),
            locations: dataset.total_locations(),
            ground_truth_pois: gt.total_pois(),
            excluded_users: excluded.into_iter().collect(),
            features: store.map(FeatureStore::len),
        },
    })
}
