//! Cell scheduling, timing and the collected output of one run.

use crate::error::Result;
use crate::results::{median, ResultRow};
use serde::Serialize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// Runs `f` on every cell with `threads` workers; results keep the cell order.
pub fn run_cells<C: Sync, T: Send>(cells: &[C], threads: usize, f: impl Fn(usize, &C) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<T>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, cells.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let v = f(i, &cells[i]);
                out.lock().expect("worker panicked")[i] = Some(v);
            });
        }
    });
    out.into_inner().expect("worker panicked").into_iter().map(|v| v.expect("cell not run")).collect()
}

/// Median wall time of `repeats` runs of `f`, with the value of the last run.
pub fn timed<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut secs = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let v = f()?;
        secs.push(t.elapsed().as_secs_f64());
        last = Some(v);
    }
    Ok((median(&secs), last.expect("at least one repeat")))
}

/// One-off setup cost for a size, kept out of the per-evaluation timings.
#[derive(Debug, Clone, Serialize)]
pub struct BasisRow {
    pub experiment: String,
    pub size: usize,
    pub basis_seconds: f64,
    pub congruence_seconds: f64,
    pub constraints: usize,
    pub blocks: usize,
    pub largest_block_rows: usize,
    pub largest_block_cols: usize,
}

/// A correctness quantity recorded next to the timings.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub experiment: String,
    pub method: String,
    pub size: usize,
    pub rep: usize,
    pub check: String,
    pub value: f64,
}

/// A cell that produced no result row, or an optimizer that hit its iteration cap.
#[derive(Debug, Clone, Serialize)]
pub struct FailureRow {
    pub experiment: String,
    pub method: String,
    pub size: usize,
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub basis: Vec<BasisRow>,
    pub checks: Vec<CheckRow>,
    pub failures: Vec<FailureRow>,
}

impl RunOutput {
    pub fn merge(&mut self, other: RunOutput) {
        self.rows.extend(other.rows);
        self.basis.extend(other.basis);
        self.checks.extend(other.checks);
        self.failures.extend(other.failures);
    }

    pub fn check(&mut self, experiment: &str, method: &str, size: usize, rep: usize, check: &str, value: f64) {
        self.checks.push(CheckRow {
            experiment: experiment.into(),
            method: method.into(),
            size,
            rep,
            check: check.into(),
            value,
        });
    }

    pub fn fail(&mut self, experiment: &str, method: &str, size: usize, rep: usize, error: impl ToString) {
        let error = error.to_string();
        log::warn!("{experiment} {method} size {size} rep {rep}: {error}");
        self.failures.push(FailureRow {
            experiment: experiment.into(),
            method: method.into(),
            size,
            rep,
            error,
        });
    }

    /// Values of `check` across all cells.
    pub fn check_values(&self, method: &str, check: &str) -> Vec<f64> {
        self.checks.iter().filter(|c| c.method == method && c.check == check).map(|c| c.value).collect()
    }
}
