//! Experiment orchestration for `clgroups`: TOML configs, deterministic runs,
//! and result persistence.
//!
//! A run writes three files into `$CLG_OUTPUT_ROOT/<name>/`:
//! `results.jsonl` (one raw record per line), `summary.csv`, and
//! `record.json` (config, config hash, summary, wall-clock, version). The
//! first two depend only on the config and are byte-identical across reruns.

pub mod config;
pub mod experiments;

use config::ExperimentConfig;
use experiments::{Outcome, SummaryRow};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const OUTPUT_ROOT_VAR: &str = "CLG_OUTPUT_ROOT";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] clgroups::error::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub summary: Vec<SummaryRow>,
    pub passed: bool,
    pub wall_clock_secs: f64,
    pub version: String,
    pub output_dir: PathBuf,
}

/// `$CLG_OUTPUT_ROOT`, or `clg-output` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("clg-output"))
}

/// Run `cfg` and persist its outputs under `root`.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<ResultRecord, HarnessError> {
    let id = cfg.id()?;
    let hash = cfg.hash();
    let start = Instant::now();
    let outcome = experiments::run(cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let name = cfg.output.clone().unwrap_or_else(|| format!("{id}-{}", &hash[..12]));
    let dir = root.join(name);
    std::fs::create_dir_all(&dir)?;
    write_jsonl(&dir.join("results.jsonl"), &outcome)?;
    write_summary(&dir.join("summary.csv"), id.name(), &outcome.summary)?;
    let record = ResultRecord {
        experiment: id.to_string(),
        config: cfg.clone(),
        config_hash: hash,
        seeds: cfg.seeds_or_default(),
        passed: outcome.passed(),
        summary: outcome.summary,
        wall_clock_secs: wall,
        version: VERSION.to_string(),
        output_dir: dir.clone(),
    };
    std::fs::write(dir.join("record.json"), serde_json::to_string_pretty(&record).expect("records serialize"))?;
    Ok(record)
}

fn write_jsonl(path: &Path, outcome: &Outcome) -> Result<(), HarnessError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in &outcome.rows {
        serde_json::to_writer(&mut w, row).expect("rows serialize");
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, experiment: &str, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment", "label", "seed", "metric", "value", "pass"])?;
    for r in rows {
        let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
        let pass = r.pass.map(|p| p.to_string()).unwrap_or_default();
        w.write_record([experiment, &r.label, &seed, &r.metric, &r.value.to_string(), &pass])?;
    }
    w.flush()?;
    Ok(())
}
