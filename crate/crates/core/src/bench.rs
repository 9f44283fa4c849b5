//! Batch runner for suites of teach-and-repeat runs.
//!
//! A suite lists runs as `{name, scenario, params, seed, bin}`; scenario
//! paths are relative to the suite file. Runs are independent and may be
//! executed in parallel; each one is deterministic on its own, so the
//! results do not depend on the execution mode.

use crate::engine::{run_teach_and_repeat, RunOptions};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::scenario::Scenario;
use crate::telemetry::to_csv;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteRun {
    pub name: String,
    pub scenario: PathBuf,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Speed bin reported for this run, e.g. `20-25` (km/h).
    pub bin: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub runs: Vec<SuiteRun>,
}

impl Suite {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Parse a bin label `lo-hi` into km/h bounds.
pub fn parse_bin(label: &str) -> Result<(f64, f64)> {
    let bad = || Error::Validation(format!("bad speed bin `{label}`, expected e.g. 20-25"));
    let (lo, hi) = label.split_once('-').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi > lo) {
        return Err(bad());
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    pub bin: String,
    pub status: String,
    pub completed: bool,
    pub bin_ticks: usize,
    pub median_lateral_error: Option<f64>,
    pub max_lateral_error: Option<f64>,
    pub apex_mean_lateral_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub row: BenchRow,
    pub telemetry_csv: String,
    pub summary: crate::metrics::Summary,
}

/// Resolve a suite entry into a ready-to-run scenario.
pub fn prepare(run: &SuiteRun, base_dir: &Path) -> Result<Scenario> {
    parse_bin(&run.bin)?;
    let mut sc = Scenario::load(&base_dir.join(&run.scenario))?;
    if let Some(seed) = run.seed {
        sc.seed = seed;
    }
    for (k, v) in &run.params {
        sc.apply_value(k, v.clone())?;
    }
    sc.validate()?;
    Ok(sc)
}

fn execute(run: &SuiteRun, sc: &Scenario) -> Result<BenchRun> {
    let (lo, _) = parse_bin(&run.bin)?;
    let opts = RunOptions { exec: Exec::Sequential, scan_dump_dir: None };
    let (_, outcome) = run_teach_and_repeat(sc, opts)?;
    let s = &outcome.summary;
    let bin = s.bin(lo);
    let row = BenchRow {
        name: run.name.clone(),
        bin: run.bin.clone(),
        status: s.status.clone(),
        completed: s.status == "MISSION_COMPLETE",
        bin_ticks: bin.map_or(0, |b| b.ticks),
        median_lateral_error: bin.filter(|b| b.ticks > 0).map(|b| b.median_lateral_error),
        max_lateral_error: bin.filter(|b| b.ticks > 0).map(|b| b.max_lateral_error),
        apex_mean_lateral_error: bin.and_then(|b| b.apex_mean_lateral_error),
    };
    Ok(BenchRun { row, telemetry_csv: to_csv(&outcome.records), summary: outcome.summary })
}

/// Run every entry of the suite. All scenarios are loaded first so a bad
/// entry fails before any simulation starts.
pub fn run_suite(suite: &Suite, base_dir: &Path, exec: Exec) -> Result<Vec<BenchRun>> {
    let prepared = suite.runs.iter().map(|r| prepare(r, base_dir)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(&SuiteRun, Scenario)> = suite.runs.iter().zip(prepared).collect();
    exec.map(&jobs, |(run, sc)| execute(run, sc)).into_iter().collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Fixed-width text table, one line per run.
pub fn results_table(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:<20} {:>7} {:<18} {:>8} {:>10} {:>10} {:>10}\n",
        "name", "bin", "status", "ticks", "median_m", "max_m", "apex_m"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<20} {:>7} {:<18} {:>8} {:>10} {:>10} {:>10}",
            r.name,
            r.bin,
            r.status,
            r.bin_ticks,
            cell(r.median_lateral_error),
            cell(r.max_lateral_error),
            cell(r.apex_mean_lateral_error)
        );
    }
    out
}

/// File name used for a run's telemetry inside a bench output directory.
pub fn telemetry_file_name(run_name: &str) -> String {
    let safe: String = run_name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{safe}.csv")
}
