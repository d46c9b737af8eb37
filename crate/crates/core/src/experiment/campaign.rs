//! On-disk obfuscation campaigns: one canonical CSV per run plus a small
//! `key = value` manifest.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingestion::{parse_canonical, write_canonical};
use crate::mechanism::{NoiseMechanism, PrivacyLevel};
use crate::model::Dataset;

pub const CAMPAIGN_MANIFEST: &str = "campaign.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub mechanism: NoiseMechanism,
    pub master_seed: u64,
    pub runs: Vec<Dataset>,
}

fn run_file(run: usize) -> String {
    format!("run_{run:03}.csv")
}

pub fn write_campaign(dir: &Path, campaign: &Campaign) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(campaign.runs.len() + 1);
    for (run, dataset) in campaign.runs.iter().enumerate() {
        let path = dir.join(run_file(run));
        let mut w = BufWriter::new(File::create(&path)?);
        write_canonical(dataset, &mut w)?;
        w.flush()?;
        written.push(path);
    }
    let path = dir.join(CAMPAIGN_MANIFEST);
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "mechanism = {}", campaign.mechanism.label())?;
    writeln!(w, "master_seed = {}", campaign.master_seed)?;
    writeln!(w, "runs = {}", campaign.runs.len())?;
    w.flush()?;
    written.push(path);
    Ok(written)
}

pub fn read_campaign(dir: &Path) -> Result<Campaign> {
    let manifest = fs::read_to_string(dir.join(CAMPAIGN_MANIFEST))?;
    let (mut mechanism, mut seed, mut runs) = (None, None, None);
    for line in manifest.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::param(format!("bad campaign manifest line `{line}`")))?;
        let value = value.trim();
        let bad = |what: &str| Error::param(format!("bad {what} `{value}` in campaign manifest"));
        match key.trim() {
            "mechanism" if value == "off" => mechanism = Some(NoiseMechanism::Disabled),
            "mechanism" => mechanism = Some(NoiseMechanism::PlanarLaplace(value.parse::<PrivacyLevel>()?)),
            "master_seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("seed"))?),
            "runs" => runs = Some(value.parse::<usize>().map_err(|_| bad("run count"))?),
            _ => {}
        }
    }
    let (Some(mechanism), Some(master_seed), Some(runs)) = (mechanism, seed, runs) else {
        return Err(Error::param("campaign manifest needs mechanism, master_seed and runs"));
    };
    let runs = (0..runs)
        .map(|run| {
            let file = File::open(dir.join(run_file(run)))?;
            let (dataset, report) = parse_canonical(BufReader::new(file))?;
            if report.malformed > 0 {
                log::warn!("{}: {} malformed rows skipped", run_file(run), report.malformed);
            }
            Ok(dataset)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Campaign { mechanism, master_seed, runs })
}
