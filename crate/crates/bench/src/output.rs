//! Writes the files of one run into its output directory.

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::results::{emit_plotdata, sort_rows, write_results};
use crate::runner::RunOutput;
use serde::Serialize;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Serialize)]
pub struct RunMeta<'a> {
    pub config: &'a ExperimentConfig,
    pub bench_version: &'static str,
    pub core_version: &'static str,
    pub hostname: String,
    pub os: &'static str,
    pub arch: &'static str,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub result_rows: usize,
    pub failures: usize,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn hostname() -> String {
    ["/proc/sys/kernel/hostname", "/etc/hostname"]
        .iter()
        .find_map(|p| std::fs::read_to_string(p).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .or_else(|| std::env::var("HOSTNAME").ok())
        .unwrap_or_else(|| "unknown".into())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path)?;
    if rows.is_empty() {
        wr.write_record(header)?;
    }
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes `results.csv`, `aggregate.csv`, `aggregate.columns.txt`, `basis.csv`,
/// `checks.csv`, `failures.csv` and `run-meta.json`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, mut out: RunOutput, started_unix: f64) -> Result<RunOutput> {
    std::fs::create_dir_all(dir)?;
    sort_rows(&mut out.rows);
    out.basis.sort_by_key(|b| b.size);
    out.checks.sort_by(|a, b| (a.size, &a.method, a.rep, &a.check).cmp(&(b.size, &b.method, b.rep, &b.check)));
    out.failures.sort_by(|a, b| (a.size, &a.method, a.rep).cmp(&(b.size, &b.method, b.rep)));
    let results = dir.join("results.csv");
    write_results(&out.rows, std::fs::File::create(&results)?)?;
    emit_plotdata(&results, dir)?;
    write_csv(
        &dir.join("basis.csv"),
        &out.basis,
        &["experiment", "size", "basis_seconds", "congruence_seconds", "constraints", "blocks", "largest_block_rows", "largest_block_cols"],
    )?;
    write_csv(&dir.join("checks.csv"), &out.checks, &["experiment", "method", "size", "rep", "check", "value"])?;
    write_csv(&dir.join("failures.csv"), &out.failures, &["experiment", "method", "size", "rep", "error"])?;
    let meta = RunMeta {
        config: cfg,
        bench_version: env!("CARGO_PKG_VERSION"),
        core_version: cgmrf_core::VERSION,
        hostname: hostname(),
        os: std::env::consts::OS,
        arch: std::env::consts::ARCH,
        started_unix,
        finished_unix: unix_now(),
        result_rows: out.rows.len(),
        failures: out.failures.len(),
    };
    std::fs::write(dir.join("run-meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(out)
}
