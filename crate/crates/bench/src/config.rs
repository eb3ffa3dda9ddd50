//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored; lists are comma separated.
//! Unknown keys are rejected so that typos do not silently fall back to defaults.

use crate::error::{BenchError, Result};
use cgmrf_core::spde::TestFieldVariant;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    HardTiming,
    DivfreeRmse,
    DivfreeTiming,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::HardTiming => "hard-timing",
            Self::DivfreeRmse => "divfree-rmse",
            Self::DivfreeTiming => "divfree-timing",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard-timing" => Ok(Self::HardTiming),
            "divfree-rmse" => Ok(Self::DivfreeRmse),
            "divfree-timing" => Ok(Self::DivfreeTiming),
            other => Err(BenchError::Config(format!("unknown experiment {other:?}"))),
        }
    }
}

/// How the noise level in the configuration is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScale {
    /// `noise` is the standard deviation `σ_e`.
    Sd,
    /// `noise` is the variance `σ_e²`.
    Variance,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub reps: usize,
    pub threads: usize,
    /// Timed repeats per cell; the cell reports their median.
    pub inner_repeats: usize,

    // hard-timing
    /// Nodes per side of the mesh on the unit square.
    pub mesh: usize,
    pub k_grid: Vec<usize>,
    pub sim_kappa2: f64,
    pub sim_phi: f64,
    pub kappa2_range: (f64, f64),
    pub phi_range: (f64, f64),
    /// Largest `k` for which the dense Matérn covariance baseline runs.
    pub dense_max_k: usize,

    // divfree
    /// Mesh nodes per side on the extended domain; `n = side²` basis functions per component.
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub timing_side: usize,
    pub observations: usize,
    pub a: f64,
    pub noise: f64,
    pub noise_scale: NoiseScale,
    pub pred_grid: usize,
    pub stride: usize,
    pub domain: (f64, f64),
    pub extension: f64,
    pub variant: TestFieldVariant,
    pub baseline: bool,
    pub max_iters: u64,
    /// Fixed hyperparameters for the prediction-timing runs.
    pub timing_kappa2: f64,
    pub timing_phi: f64,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: 1,
            reps: 10,
            threads: 1,
            inner_repeats: 3,
            mesh: 60,
            k_grid: vec![50, 200, 800, 2000],
            sim_kappa2: 0.5,
            sim_phi: 1.0,
            kappa2_range: (1.0, 2.0),
            phi_range: (1.0, 2.0),
            dense_max_k: 2000,
            n_grid: vec![10, 20, 30],
            m_grid: vec![50, 200, 800],
            timing_side: 60,
            observations: 50,
            a: 0.01,
            noise: 1e-4,
            noise_scale: NoiseScale::Sd,
            pred_grid: 20,
            stride: 3,
            domain: (0.0, 4.0),
            extension: 2.0,
            variant: TestFieldVariant::Curl,
            baseline: true,
            max_iters: 150,
            timing_kappa2: 1.0,
            timing_phi: 1.0,
        }
    }

    /// Switches to the full-size grids.
    pub fn paper_scale(&mut self) {
        self.mesh = 100;
        self.k_grid = vec![100, 500, 1000, 2000, 4000, 6000, 8000, 10000];
        self.dense_max_k = 10000;
        self.n_grid = vec![10, 20, 30, 40, 50, 60];
        self.m_grid = vec![50, 100, 200, 400, 600, 800, 1000, 1500, 2000];
        self.reps = match self.experiment {
            Experiment::DivfreeRmse => 50,
            _ => 10,
        };
    }

    /// Noise variance `σ_e²`.
    pub fn noise_variance(&self) -> f64 {
        match self.noise_scale {
            NoiseScale::Sd => self.noise * self.noise,
            NoiseScale::Variance => self.noise,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| BenchError::Config(format!("line {}: expected key = value", no + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(BenchError::Config(format!("line {}: duplicate key {}", no + 1, k.trim())));
            }
        }
        let experiment: Experiment = kv
            .remove("experiment")
            .ok_or_else(|| BenchError::Config("missing key experiment".into()))?
            .parse()?;
        let mut cfg = Self::defaults(experiment);
        if let Some(v) = kv.remove("paper_scale") {
            if parse_one::<bool>("paper_scale", &v)? {
                cfg.paper_scale();
            }
        }
        for (k, v) in &kv {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_one(key, v)?,
            "reps" => self.reps = parse_one(key, v)?,
            "threads" => self.threads = parse_one(key, v)?,
            "inner_repeats" => self.inner_repeats = parse_one(key, v)?,
            "mesh" => self.mesh = parse_one(key, v)?,
            "k_grid" => self.k_grid = parse_list(key, v)?,
            "sim_kappa2" => self.sim_kappa2 = parse_one(key, v)?,
            "sim_phi" => self.sim_phi = parse_one(key, v)?,
            "kappa2_range" => self.kappa2_range = parse_pair(key, v)?,
            "phi_range" => self.phi_range = parse_pair(key, v)?,
            "dense_max_k" => self.dense_max_k = parse_one(key, v)?,
            "n_grid" => self.n_grid = parse_list(key, v)?,
            "m_grid" => self.m_grid = parse_list(key, v)?,
            "timing_side" => self.timing_side = parse_one(key, v)?,
            "observations" => self.observations = parse_one(key, v)?,
            "a" => self.a = parse_one(key, v)?,
            "noise" => self.noise = parse_one(key, v)?,
            "noise_scale" => {
                self.noise_scale = match v {
                    "sd" => NoiseScale::Sd,
                    "variance" => NoiseScale::Variance,
                    _ => return Err(BenchError::Config(format!("noise_scale must be sd or variance, got {v:?}"))),
                }
            }
            "pred_grid" => self.pred_grid = parse_one(key, v)?,
            "stride" => self.stride = parse_one(key, v)?,
            "domain" => self.domain = parse_pair(key, v)?,
            "extension" => self.extension = parse_one(key, v)?,
            "variant" => {
                self.variant = match v {
                    "curl" => TestFieldVariant::Curl,
                    "literal" => TestFieldVariant::Literal,
                    _ => return Err(BenchError::Config(format!("variant must be curl or literal, got {v:?}"))),
                }
            }
            "baseline" => self.baseline = parse_one(key, v)?,
            "max_iters" => self.max_iters = parse_one(key, v)?,
            "timing_kappa2" => self.timing_kappa2 = parse_one(key, v)?,
            "timing_phi" => self.timing_phi = parse_one(key, v)?,
            "experiment" | "paper_scale" => return Err(BenchError::Config(format!("{key} cannot be overridden"))),
            other => return Err(BenchError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.reps == 0 || self.inner_repeats == 0 || self.threads == 0 {
            return fail("reps, inner_repeats and threads must be at least 1");
        }
        let grid = match self.experiment {
            Experiment::HardTiming => &self.k_grid,
            Experiment::DivfreeRmse => &self.n_grid,
            Experiment::DivfreeTiming => &self.m_grid,
        };
        if grid.is_empty() || grid.contains(&0) {
            return fail("the size grid must be nonempty and positive");
        }
        if self.mesh < 2 || self.timing_side < 2 || self.n_grid.iter().any(|&s| s < 2) {
            return fail("meshes need at least 2 nodes per side");
        }
        for (lo, hi) in [self.kappa2_range, self.phi_range] {
            if !(lo > 0.0 && hi >= lo) {
                return fail("parameter ranges need 0 < lo <= hi");
            }
        }
        if !(self.noise > 0.0) || !(self.domain.1 > self.domain.0) || !(self.extension >= 0.0) {
            return fail("need noise > 0, a nonempty domain and extension >= 0");
        }
        if self.stride == 0 || self.pred_grid == 0 || self.observations == 0 {
            return fail("stride, pred_grid and observations must be at least 1");
        }
        Ok(())
    }
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| BenchError::Config(format!("cannot parse {v:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_one(key, s.trim())).collect()
}

fn parse_pair(key: &str, v: &str) -> Result<(f64, f64)> {
    match parse_list::<f64>(key, v)?.as_slice() {
        &[a, b] => Ok((a, b)),
        _ => Err(BenchError::Config(format!("{key} needs two comma-separated numbers"))),
    }
}
