//! Result rows, their CSV form, and per-cell aggregation for plotting.

use crate::error::{BenchError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

pub const RESULTS_HEADER: [&str; 7] = ["experiment", "method", "size", "rep", "seconds", "value", "seed"];

pub const AGGREGATE_HEADER: [&str; 14] = [
    "experiment",
    "method",
    "size",
    "count",
    "seconds_mean",
    "seconds_median",
    "seconds_min",
    "seconds_max",
    "value_mean",
    "value_min",
    "value_max",
    "value_sd",
    "value_ci_lo",
    "value_ci_hi",
];

const COLUMN_NOTES: &str = "\
# aggregate.csv, one row per (experiment, method, size) cell
# 1 experiment       experiment id
# 2 method           method id
# 3 size             k (hard-timing), nodes per component (divfree-rmse) or observations (divfree-timing)
# 4 count            number of repetitions in the cell
# 5 seconds_mean     mean wall time over repetitions
# 6 seconds_median   median wall time over repetitions
# 7 seconds_min      smallest wall time (lower envelope)
# 8 seconds_max      largest wall time (upper envelope)
# 9 value_mean       mean of the value column (log-likelihood, residual or RMSE)
# 10 value_min       smallest value
# 11 value_max       largest value
# 12 value_sd        sample standard deviation of the value (0 for a single repetition)
# 13 value_ci_lo     value_mean - 1.96 value_sd / sqrt(count)
# 14 value_ci_hi     value_mean + 1.96 value_sd / sqrt(count)
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    /// Dense `k × k` Gram matrix of the constraints.
    Standard,
    /// Likelihood in the constraint basis.
    Transformed,
    /// Dense covariance model without sparsity.
    DenseCov,
    /// Conditioning by kriging.
    Krige,
    /// Sampling in the constraint basis.
    Alg3,
    /// Divergence-constrained SPDE posterior.
    Spde,
    /// SPDE posterior without the divergence constraint.
    SpdeUnconstrained,
    /// Mean of the observations.
    Constant,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Transformed => "transformed",
            Self::DenseCov => "dense-cov",
            Self::Krige => "krige",
            Self::Alg3 => "alg3",
            Self::Spde => "spde",
            Self::SpdeUnconstrained => "spde-unconstrained",
            Self::Constant => "constant",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub size: usize,
    pub rep: usize,
    pub seconds: f64,
    pub value: f64,
    pub seed: u64,
}

impl ResultRow {
    pub fn new(experiment: &str, method: Method, size: usize, rep: usize, seconds: f64, value: f64, seed: u64) -> Self {
        Self {
            experiment: experiment.to_string(),
            method: method.as_str().to_string(),
            size,
            rep,
            seconds,
            value,
            seed,
        }
    }
}

/// Sorts rows into the canonical order (experiment, size, method, rep).
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (&a.experiment, a.size, &a.method, a.rep).cmp(&(&b.experiment, b.size, &b.method, b.rep))
    });
}

pub fn write_results<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(RESULTS_HEADER)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut records = rd.records();
    let Some(header) = records.next() else {
        return Ok(Vec::new());
    };
    let header = header?;
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(BenchError::SchemaMismatch(format!(
            "expected header {}, found {}",
            RESULTS_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let hdr = csv::StringRecord::from(RESULTS_HEADER.to_vec());
    records
        .map(|rec| {
            let rec = rec?;
            rec.deserialize::<ResultRow>(Some(&hdr))
                .map_err(|e| BenchError::SchemaMismatch(format!("bad row {:?}: {e}", rec.iter().collect::<Vec<_>>())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub experiment: String,
    pub method: String,
    pub size: usize,
    pub count: usize,
    pub seconds_mean: f64,
    pub seconds_median: f64,
    pub seconds_min: f64,
    pub seconds_max: f64,
    pub value_mean: f64,
    pub value_min: f64,
    pub value_max: f64,
    pub value_sd: f64,
    pub value_ci_lo: f64,
    pub value_ci_hi: f64,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<(String, usize, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        cells.entry((r.experiment.clone(), r.size, r.method.clone())).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((experiment, size, method), rs)| {
            let secs: Vec<f64> = rs.iter().map(|r| r.seconds).collect();
            let vals: Vec<f64> = rs.iter().map(|r| r.value).collect();
            let n = rs.len() as f64;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
            let vm = mean(&vals);
            let sd = if rs.len() > 1 {
                (vals.iter().map(|v| (v - vm).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let half = 1.96 * sd / n.sqrt();
            AggregateRow {
                experiment,
                method,
                size,
                count: rs.len(),
                seconds_mean: mean(&secs),
                seconds_median: median(&secs),
                seconds_min: secs.iter().copied().fold(f64::INFINITY, f64::min),
                seconds_max: secs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                value_mean: vm,
                value_min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                value_max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                value_sd: sd,
                value_ci_lo: vm - half,
                value_ci_hi: vm + half,
            }
        })
        .collect()
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a results CSV and writes `aggregate.csv` and `aggregate.columns.txt` into `out`.
pub fn emit_plotdata(results: &Path, out: &Path) -> Result<Vec<AggregateRow>> {
    let rows = read_results(std::fs::File::open(results)?)?;
    let agg = aggregate(&rows);
    std::fs::create_dir_all(out)?;
    write_aggregate(&agg, std::fs::File::create(out.join("aggregate.csv"))?)?;
    std::fs::write(out.join("aggregate.columns.txt"), COLUMN_NOTES)?;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, size: usize, rep: usize, seconds: f64, value: f64) -> ResultRow {
        ResultRow::new("hard-timing", method, size, rep, seconds, value, 7)
    }

    #[test]
    fn header_is_exact() {
        let mut buf = Vec::new();
        write_results(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "experiment,method,size,rep,seconds,value,seed\n");
    }

    #[test]
    fn round_trip() {
        let rows = vec![row(Method::Standard, 5, 0, 0.25, -1.5e-3), row(Method::Alg3, 5, 1, 1e-6, 3.0)];
        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        assert_eq!(read_results(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let bad = "experiment,method,size,rep,seconds,value\nx,y,1,0,0.1,2\n";
        assert!(matches!(read_results(bad.as_bytes()), Err(BenchError::SchemaMismatch(_))));
        let bad = "experiment,method,size,rep,seconds,value,seed\nx,y,one,0,0.1,2,3\n";
        assert!(matches!(read_results(bad.as_bytes()), Err(BenchError::SchemaMismatch(_))));
    }

    #[test]
    fn empty_input_gives_header_only_output() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("results.csv");
        std::fs::write(&input, "").unwrap();
        let agg = emit_plotdata(&input, dir.path()).unwrap();
        assert!(agg.is_empty());
        let text = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert_eq!(text, format!("{}\n", AGGREGATE_HEADER.join(",")));
    }

    #[test]
    fn ten_repetitions_give_one_row() {
        let rows: Vec<ResultRow> = (0..10).map(|r| row(Method::Krige, 50, r, r as f64, 2.0 * r as f64)).collect();
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].count, 10);
        assert_eq!(agg[0].seconds_mean, 4.5);
        assert_eq!(agg[0].value_mean, 9.0);
        assert!(agg[0].seconds_min <= agg[0].seconds_mean && agg[0].seconds_mean <= agg[0].seconds_max);
    }

    #[test]
    fn three_row_fixture() {
        // hand computed: seconds 1, 2, 6 -> mean 3, median 2; values 4, 6, 8 -> mean 6, sd 2
        let rows = vec![
            row(Method::Standard, 10, 0, 1.0, 4.0),
            row(Method::Standard, 10, 1, 6.0, 8.0),
            row(Method::Standard, 10, 2, 2.0, 6.0),
        ];
        let a = &aggregate(&rows)[0];
        assert_eq!((a.seconds_mean, a.seconds_median, a.seconds_min, a.seconds_max), (3.0, 2.0, 1.0, 6.0));
        assert_eq!((a.value_mean, a.value_min, a.value_max, a.value_sd), (6.0, 4.0, 8.0, 2.0));
        let half = 1.96 * 2.0 / 3f64.sqrt();
        assert!((a.value_ci_lo - (6.0 - half)).abs() < 1e-15);
        assert!((a.value_ci_hi - (6.0 + half)).abs() < 1e-15);
    }
}
