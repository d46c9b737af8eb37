//! CSV rendering of an [`EvaluationReport`]. Output depends only on the
//! report contents, so a fixed seed yields byte-identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::mechanism::run_seed;

use super::{EvaluationReport, LevelReport};

pub const RECALL_FILE: &str = "recall.csv";
pub const PAIRS_FILE: &str = "pairs.csv";
pub const REIDENT_FILE: &str = "reident.csv";
pub const PRECISION_FILE: &str = "precision.csv";
pub const CDF_GEO_FILE: &str = "cdf_geo.csv";
pub const CDF_SEMANTIC_FILE: &str = "cdf_semantic.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Files written by [`emit_report`], manifest last.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub files: Vec<PathBuf>,
}

/// Sorted values paired with cumulative fractions `(i + 1) / n`.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}

fn table(dir: &Path, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(&path)?));
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(path)
}

fn cdf_rows(levels: &[LevelReport], values: impl Fn(&LevelReport) -> Vec<f64>) -> Vec<Vec<String>> {
    levels
        .iter()
        .flat_map(|l| {
            let label = l.label();
            empirical_cdf(&values(l))
                .into_iter()
                .map(move |(v, f)| vec![label.clone(), v.to_string(), f.to_string()])
        })
        .collect()
}

pub fn emit_report(report: &EvaluationReport, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let levels = &report.levels;
    let mut files = Vec::new();

    let rows = levels
        .iter()
        .flat_map(|l| {
            l.user_rows.iter().map(move |u| {
                vec![
                    u.user.to_string(),
                    l.label(),
                    u.run.to_string(),
                    u.recall.to_string(),
                    u.n_real.to_string(),
                    u.n_obf.to_string(),
                ]
            })
        })
        .collect();
    files.push(table(dir, RECALL_FILE, &["user", "epsilon", "run", "recall", "n_real", "n_obf"], rows)?);

    let rows = levels
        .iter()
        .flat_map(|l| {
            l.pair_rows.iter().map(move |p| {
                vec![
                    p.user.to_string(),
                    l.label(),
                    p.run.to_string(),
                    p.geo_m.to_string(),
                    p.semantic.map(|s| s.to_string()).unwrap_or_default(),
                ]
            })
        })
        .collect();
    files.push(table(dir, PAIRS_FILE, &["user", "epsilon", "run", "geo_m", "semantic"], rows)?);

    let rows = levels
        .iter()
        .map(|l| vec![l.label(), l.reident_rate.to_string(), l.reident_users.to_string()])
        .collect();
    files.push(table(dir, REIDENT_FILE, &["epsilon", "rate", "n_users"], rows)?);

    let rows = levels
        .iter()
        .filter_map(|l| {
            l.precision.as_ref().map(|p| {
                vec![
                    l.label(),
                    p.alpha.to_string(),
                    p.radius.to_string(),
                    p.mean_precision.to_string(),
                    p.n_samples.to_string(),
                    p.n_empty.to_string(),
                ]
            })
        })
        .collect();
    files.push(table(
        dir,
        PRECISION_FILE,
        &["epsilon", "alpha", "radius_m", "mean_precision", "n_samples", "n_empty"],
        rows,
    )?);

    files.push(table(dir, CDF_GEO_FILE, &["epsilon", "value", "fraction"], cdf_rows(levels, LevelReport::geo_values))?);
    files.push(table(
        dir,
        CDF_SEMANTIC_FILE,
        &["epsilon", "value", "fraction"],
        cdf_rows(levels, LevelReport::semantic_values),
    )?);

    let rows = levels
        .iter()
        .filter_map(|l| l.sweep.as_ref().map(|s| (l, s)))
        .flat_map(|(l, s)| {
            let chosen = s.chosen_threshold();
            s.points.iter().map(move |p| {
                vec![
                    l.label(),
                    p.threshold.to_string(),
                    p.mean_recall.to_string(),
                    u8::from(Some(p.threshold) == chosen).to_string(),
                ]
            })
        })
        .collect();
    files.push(table(dir, SWEEP_FILE, &["epsilon", "threshold_m", "mean_recall", "selected"], rows)?);

    let path = dir.join(MANIFEST_FILE);
    let mut w = BufWriter::new(File::create(&path)?);
    write_manifest(&mut w, report, &files)?;
    w.flush()?;
    files.push(path);
    Ok(Manifest { files })
}

fn write_manifest<W: Write>(w: &mut W, report: &EvaluationReport, files: &[PathBuf]) -> Result<()> {
    let m = &report.metadata;
    let c = &m.config;
    writeln!(w, "master_seed = {}", c.master_seed)?;
    writeln!(w, "runs = {}", c.runs)?;
    for run in 0..c.runs {
        writeln!(w, "run_seed.{run:03} = {}", run_seed(c.master_seed, run))?;
    }
    writeln!(w, "min_time_s = {}", c.extraction.min_time)?;
    writeln!(w, "max_distance_m = {}", c.extraction.max_distance)?;
    writeln!(w, "min_pts = {}", c.extraction.min_pts)?;
    writeln!(w, "merge_factor = {}", c.extraction.merge_factor)?;
    writeln!(w, "sweep_min_m = {}", c.sweep.min)?;
    writeln!(w, "sweep_max_m = {}", c.sweep.max)?;
    writeln!(w, "sweep_step_m = {}", c.sweep.step)?;
    writeln!(w, "recall_target = {}", c.sweep.recall_target)?;
    writeln!(w, "precision_radius_m = {}", c.precision.radius)?;
    writeln!(w, "precision_alpha = {}", c.precision.alpha)?;
    writeln!(w, "precision_samples = {}", c.precision.samples)?;
    writeln!(w, "precision_category = {}", c.precision.category.as_deref().unwrap_or("*"))?;
    writeln!(w, "precision_seed = {}", c.precision.sample_seed(c.master_seed))?;
    writeln!(w, "semantic_k = {}", c.semantic_k)?;
    writeln!(w, "dataset_digest = {}", m.dataset_digest.as_deref().map_or("none".to_owned(), |d| format!("sha256:{d}")))?;
    writeln!(w, "dataset_users = {}", m.users)?;
    writeln!(w, "dataset_locations = {}", m.locations)?;
    writeln!(w, "ground_truth_pois = {}", m.ground_truth_pois)?;
    writeln!(w, "excluded_users = {}", m.excluded_users.len())?;
    writeln!(w, "features = {}", m.features.map_or("none".to_owned(), |n| n.to_string()))?;
    for l in &report.levels {
        let label = l.label();
        writeln!(w, "level.{label}.threshold_m = {}", l.threshold)?;
        if let Some(s) = &l.sweep {
            writeln!(w, "level.{label}.sweep = {}", if s.reached() { "reached" } else { "unreached" })?;
        }
        writeln!(w, "level.{label}.mean_recall = {}", l.mean_recall)?;
        writeln!(w, "level.{label}.reident = {}", l.reident_rate)?;
        if let Some(p) = &l.precision {
            writeln!(w, "level.{label}.enlargement_m = {}", p.enlargement)?;
        }
    }
    for f in files {
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        writeln!(w, "file = {name}")?;
    }
    Ok(())
}
