//! Cross-seed aggregation of an experiment directory.
//!
//! Writes `report.json` and `report.csv` (`key,mean,std,n`) next to the seed
//! directories. `std` is the sample standard deviation over seeds (0 for a
//! single seed). Seeds listed in `experiment.json` without a readable
//! `summary.json` are reported as missing; failed seeds are excluded from
//! the statistics.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};
use crate::experiment::{SeedSummary, Status};
use crate::io::{parse_profile_csv, read_json, write_json, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Stat> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileStat {
    pub dist: usize,
    #[serde(flatten)]
    pub stat: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub seeds: Vec<u64>,
    pub missing_seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub scalars: BTreeMap<String, Stat>,
    /// Profile file name → per-distance statistics of the per-seed means.
    pub profiles: BTreeMap<String, Vec<ProfileStat>>,
}

#[derive(Deserialize)]
struct SeedList {
    seeds: Vec<u64>,
}

fn seed_of(name: &str) -> Option<u64> {
    name.strip_prefix("seed-")?.parse().ok()
}

pub fn build_report(dir: &Path) -> Result<Report> {
    if !dir.is_dir() {
        return Err(CliError::config(format!("{} is not a directory", dir.display())));
    }
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if let Some(seed) = entry.file_name().to_str().and_then(seed_of) {
            if entry.path().is_dir() {
                found.push(seed);
            }
        }
    }
    found.sort_unstable();
    let expected_path = dir.join("experiment.json");
    let mut seeds = if expected_path.exists() { read_json::<SeedList>(&expected_path)?.seeds } else { found.clone() };
    for s in &found {
        if !seeds.contains(s) {
            seeds.push(*s);
        }
    }
    seeds.sort_unstable();

    let mut summaries = Vec::new();
    let mut missing = Vec::new();
    let mut failed = Vec::new();
    for &seed in &seeds {
        let path = dir.join(format!("seed-{seed}")).join("summary.json");
        match path.exists().then(|| read_json::<SeedSummary>(&path)) {
            Some(Ok(s)) if s.status == Status::Ok => summaries.push(s),
            Some(Ok(_)) => failed.push(seed),
            _ => missing.push(seed),
        }
    }
    if summaries.is_empty() && failed.is_empty() {
        return Err(CliError::config(format!("no seed results in {}", dir.display())));
    }
    let experiment = summaries.first().map(|s| s.experiment.clone()).unwrap_or_default();

    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &summaries {
        for (k, v) in &s.scalars {
            values.entry(k.clone()).or_default().push(*v);
        }
    }
    let scalars = values.into_iter().filter_map(|(k, xs)| Stat::of(&xs).map(|s| (k, s))).collect();

    let mut points: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for s in &summaries {
        let sd = dir.join(format!("seed-{}", s.seed));
        let mut names: Vec<String> = fs::read_dir(&sd)
            .map_err(io_err(&sd))?
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter(|n| n.starts_with("profile-") && n.ends_with(".csv"))
            .collect();
        names.sort();
        for name in names {
            let path = sd.join(&name);
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let (_, profile) = parse_profile_csv(&text)?;
            let per = points.entry(name).or_default();
            for e in profile.entries {
                per.entry(e.dist).or_default().push(e.mean);
            }
        }
    }
    let profiles = points
        .into_iter()
        .map(|(name, per)| {
            let stats = per.into_iter().filter_map(|(dist, xs)| Stat::of(&xs).map(|stat| ProfileStat { dist, stat })).collect();
            (name, stats)
        })
        .collect();
    Ok(Report { experiment, seeds, missing_seeds: missing, failed_seeds: failed, scalars, profiles })
}

pub fn report_csv(r: &Report) -> String {
    let mut out = String::from("key,mean,std,n\n");
    for (k, s) in &r.scalars {
        out.push_str(&format!("{k},{},{},{}\n", s.mean, s.std, s.n));
    }
    out
}

pub fn write_report(dir: &Path) -> Result<Report> {
    let r = build_report(dir)?;
    write_json(&dir.join("report.json"), &r)?;
    write_text(&dir.join("report.csv"), &report_csv(&r))?;
    Ok(r)
}
