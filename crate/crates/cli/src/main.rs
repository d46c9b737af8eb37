mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use geopriv::experiment::{
    self, emit_report, precision_experiment, read_campaign, run_experiment, threshold_sweep, write_campaign, Campaign,
    Evaluation, EvaluationReport, ExperimentConfig, GroundTruth, PrecisionConfig, RunMetadata, SweepConfig,
};
use geopriv::features::{FeatureStore, SyntheticFeatures};
use geopriv::ingestion::{self, FilterPolicy, LoadReport};
use geopriv::metrics::{self, ReidentInput};
use geopriv::poi::{self, ExtractionParams};
use geopriv::synthetic::{planted_dataset, PlantedConfig};
use geopriv::{Dataset, NoiseMechanism, PoiSet, PrivacyLevel, UserId};

#[derive(Debug, Parser)]
#[command(name = "geopriv", version, about = "Evaluate planar Laplace location obfuscation against POI inference")]
#[command(args_override_self = true)]
struct Cli {
    /// `key = value` file supplying defaults for any long flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a raw dataset to canonical CSV.
    Ingest(IngestArgs),
    /// Extract POIs from canonical traces.
    Pois(PoisArgs),
    /// Write independently obfuscated copies of a dataset.
    Obfuscate(ObfuscateArgs),
    /// Attacker threshold sweep over a campaign.
    Sweep(SweepArgs),
    /// Metrics of a campaign at a fixed attacker threshold.
    Evaluate(EvaluateArgs),
    /// Link anonymous POI sets to known users.
    Reident(ReidentArgs),
    /// Range-query precision under obfuscation.
    Precision(PrecisionArgs),
    /// Full pipeline: ground truth, campaigns, sweeps, evaluation, report.
    Run(RunArgs),
    /// Generate synthetic traces with planted POIs.
    Synth(SynthArgs),
    /// Generate a synthetic feature CSV.
    Features(FeaturesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Sfcabs,
    Geolife,
    Csv,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, value_enum)]
    format: Format,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Keep users with at least this many qualifying days.
    #[arg(long)]
    filter_days: Option<usize>,
    /// A day qualifies with more than this many locations.
    #[arg(long)]
    filter_locs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
struct ExtractionArgs {
    #[arg(long, default_value_t = 3600)]
    min_time: i64,
    #[arg(long, default_value_t = 250.0)]
    max_distance: f64,
    #[arg(long, default_value_t = 2)]
    min_pts: usize,
}

impl ExtractionArgs {
    fn params(&self) -> Result<ExtractionParams> {
        Ok(ExtractionParams::new(self.min_time, self.max_distance, self.min_pts)?)
    }
}

#[derive(Debug, Args)]
struct PoisArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    extraction: ExtractionArgs,
}

/// `off`, a bare ε, or `l=<f>,r=<meters>`.
fn parse_mechanism(s: &str) -> Result<NoiseMechanism, String> {
    if s.trim().eq_ignore_ascii_case("off") {
        return Ok(NoiseMechanism::Disabled);
    }
    PrivacyLevel::from_str(s).map(NoiseMechanism::PlanarLaplace).map_err(|e| e.to_string())
}

/// Levels separated by `;`, or by `,` when none uses the `l=,r=` form.
#[derive(Debug, Clone)]
struct Levels(Vec<NoiseMechanism>);

impl FromStr for Levels {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let sep = if s.contains('=') { ';' } else { ',' };
        let levels = s
            .split(sep)
            .filter(|p| !p.trim().is_empty())
            .map(parse_mechanism)
            .collect::<Result<Vec<_>, _>>()?;
        if levels.is_empty() {
            return Err("no privacy level given".into());
        }
        Ok(Levels(levels))
    }
}

#[derive(Debug, Args)]
struct ObfuscateArgs {
    #[arg(long)]
    input: PathBuf,
    /// ε in 1/m, `l=<f>,r=<meters>`, or `off`.
    #[arg(long, alias = "level", value_parser = parse_mechanism)]
    epsilon: NoiseMechanism,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct SweepRangeArgs {
    #[arg(long = "min", default_value_t = 100.0)]
    sweep_min: f64,
    #[arg(long = "max", default_value_t = 5000.0)]
    sweep_max: f64,
    #[arg(long, default_value_t = 100.0)]
    step: f64,
    /// Mean recall the optimal threshold must exceed.
    #[arg(long, default_value_t = 0.7)]
    target: f64,
}

impl SweepRangeArgs {
    fn config(&self) -> SweepConfig {
        SweepConfig { min: self.sweep_min, max: self.sweep_max, step: self.step, recall_target: self.target }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Ground-truth POI CSV.
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    campaign: PathBuf,
    #[command(flatten)]
    range: SweepRangeArgs,
    #[arg(long, default_value_t = 3600)]
    min_time: i64,
    #[arg(long, default_value_t = 2)]
    min_pts: usize,
    /// Sweep table CSV; printed to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct FeatureSource {
    /// Feature CSV (`feature_id,lat,lon,category,name`).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Synthetic field `density=<per km²>,seed=<u64>,bbox=<lat1,lon1,lat2,lon2>[,categories=a|b]`.
    #[arg(long)]
    synthetic: Option<SyntheticFeatures>,
}

impl FeatureSource {
    fn load(&self) -> Result<Option<FeatureStore>> {
        let features = match (&self.features, &self.synthetic) {
            (Some(_), Some(_)) => bail!("use either --features or --synthetic, not both"),
            (Some(path), None) => {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                ingestion::parse_features(BufReader::new(file))?
            }
            (None, Some(spec)) => spec.generate()?,
            (None, None) => return Ok(None),
        };
        log::info!("{} features loaded", features.len());
        Ok(Some(FeatureStore::build(features)?))
    }
}

#[derive(Debug, Clone, Args)]
struct PrecisionFlags {
    #[arg(long, default_value_t = 500.0)]
    radius: f64,
    #[arg(long, default_value_t = 0.85)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Feature category to query; `*` for all.
    #[arg(long, default_value = "restaurant")]
    category: String,
    /// Seed for choosing the sampled locations.
    #[arg(long)]
    sample_seed: Option<u64>,
}

impl PrecisionFlags {
    fn config(&self) -> PrecisionConfig {
        PrecisionConfig {
            radius: self.radius,
            alpha: self.alpha,
            samples: self.samples,
            category: (self.category != "*").then(|| self.category.clone()),
            seed: self.sample_seed,
        }
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    campaign: PathBuf,
    /// Attacker max_distance, meters.
    #[arg(long)]
    threshold: f64,
    #[command(flatten)]
    features: FeatureSource,
    /// Real traces; enables the precision experiment.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3600)]
    min_time: i64,
    #[arg(long, default_value_t = 2)]
    min_pts: usize,
    /// Nearest features compared by the semantic distance.
    #[arg(long, default_value_t = metrics::DEFAULT_SEMANTIC_K)]
    k: usize,
    #[command(flatten)]
    precision: PrecisionFlags,
}

#[derive(Debug, Args)]
struct ReidentArgs {
    #[arg(long)]
    real: PathBuf,
    /// Obfuscated POI CSV; user ids are only used to score the guesses.
    #[arg(long)]
    obf: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PrecisionArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    features: FeatureSource,
    #[arg(long, alias = "level", value_parser = parse_mechanism)]
    epsilon: NoiseMechanism,
    #[command(flatten)]
    precision: PrecisionFlags,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fresh obfuscations of each sampled location.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Summary CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    features: FeatureSource,
    /// Privacy levels, e.g. `0.00139,0.00358,0.00693`; defaults to ln2/500,
    /// ln6/500 and ln4/200.
    #[arg(long)]
    epsilons: Option<Levels>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    extraction: ExtractionArgs,
    #[command(flatten)]
    range: SweepRangeArgs,
    #[arg(long, default_value_t = metrics::DEFAULT_SEMANTIC_K)]
    k: usize,
    #[command(flatten)]
    precision: PrecisionFlags,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    users: usize,
    #[arg(long, default_value_t = 7)]
    days: usize,
    #[arg(long, default_value_t = 3)]
    pois_per_user: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(long)]
    synthetic: SyntheticFeatures,
    #[arg(long)]
    output: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn log_load(what: &Path, report: &LoadReport) {
    log::info!(
        "{}: {} records, {} malformed, {} files skipped",
        what.display(),
        report.records,
        report.malformed,
        report.skipped_files
    );
}

fn read_traces(path: &Path) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (dataset, report) = ingestion::parse_canonical(BufReader::new(file))?;
    log_load(path, &report);
    Ok(dataset)
}

fn read_pois(path: &Path) -> Result<BTreeMap<UserId, PoiSet>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(poi::parse_poi_csv(BufReader::new(file))?)
}

fn ingest(args: IngestArgs) -> Result<()> {
    let (mut dataset, report) = match args.format {
        Format::Sfcabs => ingestion::parse_sfcabs(&args.input)?,
        Format::Geolife => ingestion::parse_geolife(&args.input)?,
        Format::Csv => {
            let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
            ingestion::parse_canonical(BufReader::new(file))?
        }
    };
    log_load(&args.input, &report);
    if args.filter_days.is_some() || args.filter_locs.is_some() {
        let defaults = FilterPolicy::default();
        let policy = FilterPolicy::new(
            args.filter_locs.unwrap_or(defaults.min_locations_per_day),
            args.filter_days.unwrap_or(defaults.min_qualifying_days),
        )?;
        let before = dataset.len();
        dataset = ingestion::filter_dataset(&dataset, policy);
        log::info!("filter kept {} of {before} users", dataset.len());
    }
    let mut w = create(&args.output)?;
    let n = ingestion::write_canonical(&dataset, &mut w)?;
    w.flush()?;
    println!("{} users, {n} locations written to {}", dataset.len(), args.output.display());
    Ok(())
}

fn pois(args: PoisArgs) -> Result<()> {
    let dataset = read_traces(&args.input)?;
    let gt = experiment::run_ground_truth(&dataset, &args.extraction.params()?);
    let mut w = create(&args.output)?;
    poi::write_poi_csv(gt.pois.values(), &mut w)?;
    w.flush()?;
    println!(
        "{} POIs for {} users ({} users without POIs)",
        gt.total_pois(),
        gt.pois.len(),
        gt.empty_users.len()
    );
    Ok(())
}

fn obfuscate(args: ObfuscateArgs) -> Result<()> {
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let dataset = read_traces(&args.input)?;
    let runs = experiment::run_obfuscation_campaign(&dataset, &args.epsilon, args.runs, args.seed)?;
    let campaign = Campaign { mechanism: args.epsilon, master_seed: args.seed, runs };
    let files = write_campaign(&args.output_dir, &campaign)?;
    println!("{} files written to {}", files.len(), args.output_dir.display());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let gt = GroundTruth::from_sets(read_pois(&args.real)?.into_values());
    let campaign = read_campaign(&args.campaign)?;
    let base = ExtractionParams::new(args.min_time, args.range.sweep_min, args.min_pts)?;
    let label = campaign.mechanism.label();
    let result = threshold_sweep(&campaign.runs, &gt, &base, &args.range.config(), &label)?;

    let mut out: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let chosen = result.chosen_threshold();
    writeln!(out, "epsilon,threshold_m,mean_recall,selected")?;
    for p in &result.points {
        writeln!(out, "{label},{},{},{}", p.threshold, p.mean_recall, u8::from(Some(p.threshold) == chosen))?;
    }
    out.flush()?;
    drop(out);
    match (result.optimal, result.best()) {
        (Some(t), _) => eprintln!("optimal threshold: {t} m"),
        (None, Some(b)) => eprintln!(
            "recall target {} unreached; best threshold {} m (mean recall {:.4})",
            result.recall_target, b.threshold, b.mean_recall
        ),
        (None, None) => {}
    }
    Ok(())
}

fn summarize(report: &EvaluationReport) {
    for l in &report.levels {
        let precision = l
            .precision
            .as_ref()
            .map_or("n/a".to_owned(), |p| format!("{:.4}", p.mean_precision));
        println!(
            "epsilon {}: threshold {} m, recall {:.4}, reident {:.4}, precision {precision}",
            l.label(),
            l.threshold,
            l.mean_recall,
            l.reident_rate
        );
    }
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let gt = GroundTruth::from_sets(read_pois(&args.real)?.into_values());
    let campaign = read_campaign(&args.campaign)?;
    let store = args.features.load()?;
    let real = args.input.as_deref().map(read_traces).transpose()?;
    if store.is_some() && real.is_none() {
        log::warn!("no --input traces; skipping the precision experiment");
    }
    let config = ExperimentConfig {
        levels: vec![campaign.mechanism],
        runs: campaign.runs.len(),
        master_seed: campaign.master_seed,
        extraction: ExtractionParams::new(args.min_time, args.threshold, args.min_pts)?,
        precision: args.precision.config(),
        semantic_k: args.k,
        ..ExperimentConfig::default()
    };
    let e = Evaluation {
        ground_truth: &gt,
        campaign: &campaign.runs,
        mechanism: campaign.mechanism,
        threshold: args.threshold,
        store: store.as_ref(),
        real_traces: real.as_ref(),
    };
    let level = experiment::evaluate(&e, &config)?;
    let report = EvaluationReport {
        levels: vec![level],
        metadata: RunMetadata {
            dataset_digest: real.as_ref().map(experiment::dataset_digest).transpose()?,
            users: real.as_ref().map_or(0, Dataset::len),
            locations: real.as_ref().map_or(0, Dataset::total_locations),
            ground_truth_pois: gt.total_pois(),
            excluded_users: gt.empty_users.clone(),
            features: store.as_ref().map(FeatureStore::len),
            config,
        },
    };
    let manifest = emit_report(&report, &args.out)?;
    summarize(&report);
    println!("{} files written to {}", manifest.files.len(), args.out.display());
    Ok(())
}

fn reident(args: ReidentArgs) -> Result<()> {
    let real = read_pois(&args.real)?;
    if real.is_empty() {
        bail!("no ground-truth POIs in {}", args.real.display());
    }
    let mut obf = read_pois(&args.obf)?;
    if let Some(extra) = obf.keys().find(|u| !real.contains_key(*u)) {
        bail!("obfuscated set for unknown user {extra}");
    }
    let anonymous = real
        .keys()
        .map(|u| obf.remove(u).unwrap_or_else(|| PoiSet::empty(u.clone())))
        .collect();
    let outcome = metrics::reident(&ReidentInput { real, anonymous })?;
    let mut w = create(&args.out)?;
    writeln!(w, "user,assigned,correct")?;
    for (truth, guess) in &outcome.assignments {
        writeln!(w, "{truth},{guess},{}", u8::from(truth == guess))?;
    }
    w.flush()?;
    println!("re-identification rate {:.4} over {} users", outcome.rate, outcome.assignments.len());
    Ok(())
}

fn precision(args: PrecisionArgs) -> Result<()> {
    let Some(store) = args.features.load()? else {
        bail!("precision needs --features or --synthetic");
    };
    let dataset = read_traces(&args.input)?;
    let cfg = args.precision.config();
    let summary = precision_experiment(&dataset, &args.epsilon, &store, &cfg, args.seed, args.runs)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(out, "epsilon,alpha,radius_m,mean_precision,n_samples,n_empty")?;
    writeln!(
        out,
        "{},{},{},{},{},{}",
        args.epsilon.label(),
        summary.alpha,
        summary.radius,
        summary.mean_precision,
        summary.n_samples,
        summary.n_empty
    )?;
    out.flush()?;
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let dataset = read_traces(&args.input)?;
    let store = args.features.load()?;
    let config = ExperimentConfig {
        levels: match args.epsilons {
            Some(levels) => levels.0,
            None => ExperimentConfig::default().levels,
        },
        runs: args.runs,
        master_seed: args.seed,
        extraction: args.extraction.params()?,
        sweep: args.range.config(),
        precision: args.precision.config(),
        semantic_k: args.k,
    };
    let report = run_experiment(&dataset, &config, store.as_ref())?;
    let manifest = emit_report(&report, &args.out)?;
    summarize(&report);
    println!("{} files written to {}", manifest.files.len(), args.out.display());
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let cfg = PlantedConfig {
        users: args.users,
        days: args.days,
        pois_per_user: args.pois_per_user,
        ..PlantedConfig::default()
    };
    let planted = planted_dataset(&cfg, args.seed)?;
    let mut w = create(&args.output)?;
    let n = ingestion::write_canonical(&planted.dataset, &mut w)?;
    w.flush()?;
    println!("{} users, {n} locations written to {}", planted.dataset.len(), args.output.display());
    Ok(())
}

fn features(args: FeaturesArgs) -> Result<()> {
    let features = args.synthetic.generate()?;
    let mut w = create(&args.output)?;
    let n = ingestion::write_features(&features, &mut w)?;
    w.flush()?;
    println!("{n} features written to {}", args.output.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args_os().collect(), &Cli::command()) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Pois(a) => pois(a),
        Command::Obfuscate(a) => obfuscate(a),
        Command::Sweep(a) => sweep(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Reident(a) => reident(a),
        Command::Precision(a) => precision(a),
        Command::Run(a) => run(a),
        Command::Synth(a) => synth(a),
        Command::Features(a) => features(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
