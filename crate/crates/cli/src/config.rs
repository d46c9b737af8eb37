//! `key = value` configuration files.
//!
//! Keys are long flag names (`max_distance` and `max-distance` are the same
//! key). Values are spliced in right after the subcommand name, ahead of the
//! user's own flags; since every flag keeps its last occurrence, the command
//! line overrides the file. Keys that the chosen subcommand does not take are
//! ignored, so one file can serve several subcommands.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Command;

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`", n + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        entries.push((key, value.trim().to_owned()));
    }
    Ok(entries)
}

/// Path given with `--config <path>` or `--config=<path>`, if any.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Rewrites `args` with the settings of the referenced config file.
pub fn expand_args(args: Vec<OsString>, command: &Command) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config file {}", Path::new(&path).display()))?;
    let entries = parse(&text)?;

    let all_keys: Vec<String> = command
        .get_subcommands()
        .flat_map(|s| s.get_arguments())
        .chain(command.get_arguments())
        .filter_map(|a| a.get_long().map(str::to_owned))
        .collect();
    if let Some((key, _)) = entries.iter().find(|(k, _)| !all_keys.contains(k)) {
        bail!("unknown config key `{key}`");
    }

    let Some(position) = args
        .iter()
        .position(|a| command.find_subcommand(a.to_string_lossy().as_ref()).is_some())
    else {
        return Ok(args);
    };
    let sub = command
        .find_subcommand(args[position].to_string_lossy().as_ref())
        .expect("found above");
    let mut injected = Vec::new();
    for (key, value) in entries {
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            continue;
        };
        if arg.get_action().takes_values() {
            injected.push(OsString::from(format!("--{key}")));
            injected.push(OsString::from(value));
        } else if value.parse::<bool>().with_context(|| format!("config key `{key}` expects true or false"))? {
            injected.push(OsString::from(format!("--{key}")));
        }
    }
    let mut out = args;
    out.splice(position + 1..position + 1, injected);
    Ok(out)
}
