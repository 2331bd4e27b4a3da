//! Experiment runner behind the `wassflow` binary.
//!
//! A run reads an [`ExperimentConfig`], executes the selected experiments in
//! order and writes `report.json`, `manifest.json` and one CSV per table
//! under the output directory. Output is a pure function of the config and
//! seed, so reruns are byte-identical.

pub mod config;
pub mod experiments;
pub mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use config::ExperimentConfig;
use experiments::{Context, RunError, SPECS};
use report::{to_json, ExperimentReport, RunReport};

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    seed: u64,
    experiments: Vec<ManifestEntry>,
    files: Vec<String>,
}

#[derive(Serialize)]
struct ManifestEntry {
    experiment: String,
    tolerances: BTreeMap<String, f64>,
    params: BTreeMap<String, f64>,
}

fn io_error(path: &Path, e: std::io::Error) -> RunError {
    RunError::Config(format!("cannot write {}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Rejects tolerance and parameter keys that no selected experiment reads.
pub fn validate(config: &ExperimentConfig) -> Result<(), RunError> {
    for (kind, given, params) in [("tolerance", &config.tolerances, false), ("params", &config.params, true)] {
        let bad = experiments::unknown_keys(&config.experiments, given, params);
        if !bad.is_empty() {
            return Err(RunError::Config(format!(
                "unknown {kind} keys for the selected experiments: {}",
                bad.join(", ")
            )));
        }
    }
    Ok(())
}

/// Runs every configured experiment and writes the outputs under `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunReport, RunError> {
    validate(config)?;
    let mut reports = Vec::new();
    let mut entries = Vec::new();
    let mut all_files = Vec::new();
    for name in &config.experiments {
        let spec = experiments::spec(name).ok_or_else(|| RunError::Config(format!("unknown experiment {name}")))?;
        let ctx = Context::new(spec, config);
        let outcome = experiments::run(&ctx)?;
        let mut files = Vec::new();
        for t in &outcome.tables {
            let rel = format!("{name}/{}.csv", t.name);
            write(&out.join(&rel), t.text())?;
            files.push(rel);
        }
        all_files.extend(files.iter().cloned());
        entries.push(ManifestEntry {
            experiment: name.clone(),
            tolerances: ctx.tolerances().clone(),
            params: ctx.params().clone(),
        });
        reports.push(ExperimentReport {
            experiment: name.clone(),
            passed: outcome.passed(),
            criteria: spec.criteria.to_vec(),
            checks: outcome.checks,
            metrics: outcome.metrics,
            files,
        });
    }
    let report = RunReport { passed: reports.iter().all(|r| r.passed), seed: config.seed, experiments: reports };
    write(&out.join("report.json"), &to_json(&report))?;
    all_files.push("report.json".into());
    let manifest =
        Manifest { version: env!("CARGO_PKG_VERSION"), seed: config.seed, experiments: entries, files: all_files };
    write(&out.join("manifest.json"), &to_json(&manifest))?;
    Ok(report)
}

/// One line per experiment: name, criteria and summary.
pub fn list() -> String {
    let mut s = String::new();
    for spec in &SPECS {
        let crit: Vec<String> = spec.criteria.iter().map(|c| c.to_string()).collect();
        s.push_str(&format!("{:<22} [{}] {}\n", spec.name, crit.join(","), spec.summary));
    }
    s
}

/// Human-readable summary of a finished run.
pub fn summary(report: &RunReport) -> String {
    let mut s = String::new();
    for e in &report.experiments {
        s.push_str(&format!("{} {}\n", if e.passed { "PASS" } else { "FAIL" }, e.experiment));
        for c in &e.checks {
            s.push_str(&format!("  {} {}: {:.6e}\n", if c.passed { "ok  " } else { "fail" }, c.name, c.value));
        }
    }
    s
}

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/configuration.md")]
    pub struct Configuration;
    #[doc = include_str!("../../../book/src/getting-started.md")]
    pub struct GettingStarted;
}
