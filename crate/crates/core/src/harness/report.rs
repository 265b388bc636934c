//! CSV artifacts of an experiment. File names carry the run seed and the
//! short config hash so every file can be traced back to its replay inputs.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::runner::{ExperimentOutcome, RunResult};
use super::stats::RateSummary;
use crate::error::{Error, Result};
use crate::repair::save_episode_csv;

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SELECTION_FILE: &str = "selection.csv";

pub const RUNS_HEADER: [&str; 10] = [
    "run_index",
    "seed",
    "mode",
    "classifier",
    "fault_type",
    "rate",
    "flagged",
    "failed",
    "config_hash",
    "digest",
];

pub const SUMMARY_HEADER: [&str; 14] = [
    "mode",
    "classifier",
    "fault_type",
    "n",
    "failed",
    "mean",
    "std",
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "config_hash",
    "base_seed",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

pub fn timeline_file(r: &RunResult, short_hash: &str) -> String {
    format!("timeline_run{:04}_seed{}_{}.csv", r.run_index, r.seed, short_hash)
}

pub fn episode_file(r: &RunResult, short_hash: &str) -> String {
    format!("episodes_run{:04}_seed{}_{}.csv", r.run_index, r.seed, short_hash)
}

/// One record of `runs.csv`.
pub fn run_record(r: &RunResult, fault_label: &str, config_hash: &str) -> Vec<String> {
    vec![
        r.run_index.to_string(),
        r.seed.to_string(),
        r.mode.to_string(),
        r.classifier.to_string(),
        fault_label.to_string(),
        r.rate.to_string(),
        u8::from(r.is_flagged()).to_string(),
        u8::from(r.is_failed()).to_string(),
        config_hash.to_string(),
        r.digest(),
    ]
}

/// `runs.csv`, `summary.csv`, `selection.csv`, selection timelines of the
/// flagged and requested runs, and repair episode logs. Returns the paths
/// written.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = config.hash();
    let short = config.short_hash();
    let fault_label = config.fault_label();
    let mut written = Vec::new();

    let path = dir.join(RUNS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(RUNS_HEADER).map_err(|e| csv_err(&path, e))?;
    for r in &outcome.results {
        w.write_record(run_record(r, &fault_label, &hash))
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(SUMMARY_HEADER).map_err(|e| csv_err(&path, e))?;
    w.write_record(summary_record(
        &config.mode.to_string(),
        &config.classifier.kind.to_string(),
        &fault_label,
        &outcome.summary.rates,
        outcome.summary.n_failed,
        &hash,
        config.runs.seed,
    ))
    .map_err(|e| csv_err(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join(SELECTION_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["sensor", "mean_selection_rate", "config_hash"])
        .map_err(|e| csv_err(&path, e))?;
    for (s, rate) in outcome.summary.sensor_selection.iter().enumerate() {
        w.write_record([s.to_string(), rate.to_string(), hash.clone()])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    for r in outcome.results.iter().filter(|r| !r.is_failed()) {
        if r.is_flagged() || config.report.timeline_runs.contains(&r.run_index) {
            let path = dir.join(timeline_file(r, &short));
            r.timeline(config.report.window).save_csv(&path, &r.truths)?;
            written.push(path);
        }
        if !r.episodes.is_empty() {
            let path = dir.join(episode_file(r, &short));
            save_episode_csv(&path, &r.episodes)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn summary_record(
    mode: &str,
    classifier: &str,
    fault_type: &str,
    s: &RateSummary,
    failed: usize,
    config_hash: &str,
    base_seed: u64,
) -> Vec<String> {
    let mut rec = vec![
        mode.to_string(),
        classifier.to_string(),
        fault_type.to_string(),
        s.n.to_string(),
        failed.to_string(),
    ];
    rec.extend([s.mean, s.std, s.min, s.q1, s.median, s.q3, s.max].map(|v| v.to_string()));
    rec.push(config_hash.to_string());
    rec.push(base_seed.to_string());
    rec
}
