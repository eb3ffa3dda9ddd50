//! Regression of a divergence-free vector field from noisy point observations:
//! the divergence-constrained SPDE model against its unconstrained version, a
//! dense divergence-free kernel and a constant predictor.

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::optim::nelder_mead;
use crate::results::{Method, ResultRow};
use crate::runner::{run_cells, timed, BasisRow, RunOutput};
use cgmrf_core::hard::TransformedModel;
use cgmrf_core::rng::{standard_normals, stream};
use cgmrf_core::soft::{LoglikMode, PosteriorGmrf, SoftObservations};
use cgmrf_core::sparse::{cholesky, dot, max_abs_vec, FillOrdering};
use cgmrf_core::spde::{
    build_mesh, divergence_constraints, divfree_cov, obs_matrix, test_field, Mesh, Rect, SpdeOperators, TransformedOperators,
};
use cgmrf_core::{build_basis_blocked, ConstraintBasis, ConstraintSet, Gmrf, NumericPolicy, SparseMat};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::f64::consts::PI;
use std::time::Instant;

/// Smoothness of the SPDE components and of the baseline potential.
const NU: f64 = 3.0;
const ALPHA: u32 = 4;
const OPT_STEP: f64 = 0.5;
const OPT_TOL: f64 = 1e-4;

/// Observations and held-out truth, both stacked as `[component 1; component 2]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub locations: Vec<[f64; 2]>,
    pub y: Vec<f64>,
    pub grid: Vec<[f64; 2]>,
    pub truth: Vec<f64>,
}

fn stacked_field(points: &[[f64; 2]], cfg: &ExperimentConfig) -> Vec<f64> {
    let f: Vec<[f64; 2]> = points.iter().map(|&s| test_field(s, cfg.a, cfg.variant)).collect();
    f.iter().map(|v| v[0]).chain(f.iter().map(|v| v[1])).collect()
}

/// `side × side` regularly spaced points covering the domain, corners included.
pub fn prediction_grid(domain: (f64, f64), side: usize) -> Vec<[f64; 2]> {
    let at = |i: usize| {
        if side == 1 {
            0.5 * (domain.0 + domain.1)
        } else {
            domain.0 + (domain.1 - domain.0) * i as f64 / (side - 1) as f64
        }
    };
    (0..side * side).map(|v| [at(v % side), at(v / side)]).collect()
}

/// `m` uniform locations in the domain with noisy field values.
pub fn simulate_dataset<R: Rng + ?Sized>(rng: &mut R, cfg: &ExperimentConfig, m: usize) -> Dataset {
    let (lo, hi) = cfg.domain;
    let locations: Vec<[f64; 2]> = (0..m).map(|_| [rng.random_range(lo..hi), rng.random_range(lo..hi)]).collect();
    let sd = cfg.noise_variance().sqrt();
    let noise = standard_normals(rng, 2 * m);
    let y = stacked_field(&locations, cfg).iter().zip(&noise).map(|(f, e)| f + sd * e).collect();
    let grid = prediction_grid(cfg.domain, cfg.pred_grid);
    let truth = stacked_field(&grid, cfg);
    Dataset { locations, y, grid, truth }
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    (pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / truth.len() as f64).sqrt()
}

/// Per-component mean of the observations, used at every prediction point.
pub fn constant_prediction(data: &Dataset) -> Vec<f64> {
    let (m, g) = (data.locations.len(), data.grid.len());
    let mean = |c: usize| data.y[c * m..(c + 1) * m].iter().sum::<f64>() / m as f64;
    let (m1, m2) = (mean(0), mean(1));
    std::iter::repeat_n(m1, g).chain(std::iter::repeat_n(m2, g)).collect()
}

/// Variance of one field component with SPDE parameters `(κ², φ)`.
fn spde_component_variance(kappa2: f64, phi: f64) -> f64 {
    phi * phi / (12.0 * PI * kappa2.powi(3))
}

/// Starting point `(ln κ², ln φ)` matching the sample variance at `κ² = 4`.
fn spde_start(data: &Dataset) -> [f64; 2] {
    let kappa2: f64 = 4.0;
    let var = sample_variance(&data.y).max(1e-12);
    [kappa2.ln(), (var * 12.0 * PI * kappa2.powi(3)).sqrt().ln()]
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
}

/// Mesh, operators and divergence basis for one basis size.
pub struct SpdeSetup {
    pub mesh: Mesh,
    pub ops: SpdeOperators,
    pub cs: ConstraintSet,
    pub cb: ConstraintBasis,
    pub tops: TransformedOperators,
}

impl SpdeSetup {
    pub fn new(cfg: &ExperimentConfig, side: usize, policy: &NumericPolicy) -> Result<(Self, BasisRow)> {
        let mesh = build_mesh(Rect::square(cfg.domain.0, cfg.domain.1).extended(cfg.extension), side, side)?;
        let ops = SpdeOperators::new(&mesh, ALPHA)?.stacked(2);
        let cs = divergence_constraints(&mesh, cfg.stride)?;
        let t = Instant::now();
        let cb = build_basis_blocked(cs.a(), policy)?;
        let basis_seconds = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let tops = ops.congruences(&cb, policy.drop_tol)?;
        let congruence_seconds = t.elapsed().as_secs_f64();
        let largest = cb.blocks().iter().max_by_key(|b| b.rows.len());
        let row = BasisRow {
            experiment: cfg.experiment.as_str().into(),
            size: mesh.n_nodes(),
            basis_seconds,
            congruence_seconds,
            constraints: cs.k(),
            blocks: cb.blocks().len(),
            largest_block_rows: largest.map_or(0, |b| b.rows.len()),
            largest_block_cols: largest.map_or(0, |b| b.cols.len()),
        };
        Ok((Self { mesh, ops, cs, cb, tops }, row))
    }

    /// Nodes per component.
    pub fn n(&self) -> usize {
        self.mesh.n_nodes()
    }

    fn observations(&self, data: &Dataset, sigma2: f64) -> Result<SoftObservations> {
        let a = obs_matrix(&self.mesh, &data.locations)?;
        Ok(SoftObservations::new(SparseMat::block_diag(&[&a, &a]), data.y.clone(), sigma2)?)
    }

    fn predictor(&self, data: &Dataset) -> Result<SparseMat> {
        let a = obs_matrix(&self.mesh, &data.grid)?;
        Ok(SparseMat::block_diag(&[&a, &a]))
    }

    /// Log-likelihood and posterior mean under the divergence constraint.
    pub fn constrained(&self, so: &SoftObservations, kappa2: f64, phi: f64, policy: &NumericPolicy) -> Result<(f64, Vec<f64>)> {
        let q = self.ops.precision(kappa2, phi)?;
        let log_det = cholesky(&q, &FillOrdering::Amd, policy)?.logdet();
        let g = Gmrf::centered(q)?;
        let model = TransformedModel::from_parts(&g, &self.cb, self.tops.precision(kappa2, phi)?, log_det, policy)?;
        let post = PosteriorGmrf::new(&model, self.cs.b(), so, policy)?;
        Ok((post.loglik(LoglikMode::Full)?, post.mean().to_vec()))
    }

    /// Log-likelihood and posterior mean without the constraint.
    pub fn unconstrained(&self, so: &SoftObservations, kappa2: f64, phi: f64, policy: &NumericPolicy) -> Result<(f64, Vec<f64>)> {
        let q = self.ops.precision(kappa2, phi)?;
        let log_det = cholesky(&q, &FillOrdering::Amd, policy)?.logdet();
        let inv_s2 = 1.0 / so.sigma2();
        let btb = so.b().transpose().matmul(so.b())?;
        let q_post = SparseMat::lincomb(&[(1.0, &q), (inv_s2, &btb)])?.symmetrized()?;
        let f = cholesky(&q_post, &FillOrdering::Amd, policy)?;
        let rhs: Vec<f64> = so.b().tr_mul_vec(so.y())?.iter().map(|v| v * inv_s2).collect();
        let mu = f.solve(&rhs)?;
        let m = so.m() as f64;
        let ll = -0.5 * m * (2.0 * PI * so.sigma2()).ln() + 0.5 * log_det - 0.5 * f.logdet()
            - 0.5 * (dot(so.y(), so.y()) * inv_s2 - dot(&mu, &rhs));
        Ok((ll, mu))
    }
}

type Evaluate<'s> = dyn Fn(&SoftObservations, f64, f64) -> Result<(f64, Vec<f64>)> + 's;

/// A fitted model's prediction at the grid.
#[derive(Debug, Clone)]
pub struct Fit {
    pub params: Vec<f64>,
    pub loglik: f64,
    pub prediction: Vec<f64>,
    pub latent_mean: Vec<f64>,
    pub converged: bool,
    pub iters: u64,
}

fn fit_spde(setup: &SpdeSetup, data: &Dataset, cfg: &ExperimentConfig, eval: &Evaluate<'_>) -> Result<Fit> {
    let so = setup.observations(data, cfg.noise_variance())?;
    let objective = |x: &[f64]| eval(&so, x[0].exp(), x[1].exp()).map_or(f64::INFINITY, |(ll, _)| -ll);
    let opt = nelder_mead(objective, &spde_start(data), OPT_STEP, OPT_TOL, cfg.max_iters)?;
    let (kappa2, phi) = (opt.x[0].exp(), opt.x[1].exp());
    let (loglik, mean) = eval(&so, kappa2, phi)?;
    Ok(Fit {
        params: vec![kappa2, phi],
        loglik,
        prediction: setup.predictor(data)?.mul_vec(&mean)?,
        latent_mean: mean,
        converged: opt.converged,
        iters: opt.iters,
    })
}

/// Dense divergence-free kernel model with noise variance `σ_e²`.
pub struct KernelModel {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    kappa: f64,
    sigma2: f64,
}

impl KernelModel {
    pub fn new(locations: &[[f64; 2]], y: &[f64], kappa: f64, sigma2: f64, noise_var: f64) -> Result<Self> {
        let mut k = divfree_cov(locations, locations, NU, kappa, sigma2)?;
        add_diagonal(&mut k, noise_var);
        let chol = k.cholesky().ok_or(cgmrf_core::Error::NotPositiveDefinite { column: 0, pivot: 0.0 })?;
        let alpha = chol.solve(&DVector::from_column_slice(y));
        Ok(Self { chol, alpha, kappa, sigma2 })
    }

    pub fn loglik(&self, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let logdet = 2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * (n * (2.0 * PI).ln() + logdet + DVector::from_column_slice(y).dot(&self.alpha))
    }

    pub fn predict(&self, locations: &[[f64; 2]], grid: &[[f64; 2]]) -> Result<Vec<f64>> {
        let kx = divfree_cov(grid, locations, NU, self.kappa, self.sigma2)?;
        Ok((kx * &self.alpha).as_slice().to_vec())
    }
}

fn add_diagonal(m: &mut DMatrix<f64>, v: f64) {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += v;
    }
}

fn fit_kernel(data: &Dataset, cfg: &ExperimentConfig) -> Result<Fit> {
    let noise = cfg.noise_variance();
    let kappa2: f64 = 4.0;
    let var = sample_variance(&data.y).max(1e-12);
    let x0 = [0.5 * kappa2.ln(), (4.0 * var / kappa2).ln()];
    let objective = |x: &[f64]| {
        KernelModel::new(&data.locations, &data.y, x[0].exp(), x[1].exp(), noise).map_or(f64::INFINITY, |m| -m.loglik(&data.y))
    };
    let opt = nelder_mead(objective, &x0, OPT_STEP, OPT_TOL, cfg.max_iters)?;
    let (kappa, sigma2) = (opt.x[0].exp(), opt.x[1].exp());
    let model = KernelModel::new(&data.locations, &data.y, kappa, sigma2, noise)?;
    Ok(Fit {
        params: vec![kappa, sigma2],
        loglik: model.loglik(&data.y),
        prediction: model.predict(&data.locations, &data.grid)?,
        latent_mean: Vec::new(),
        converged: opt.converged,
        iters: opt.iters,
    })
}

/// `‖A x‖_∞` over the divergence rows.
pub fn divergence_residual(setup: &SpdeSetup, x: &[f64]) -> Result<f64> {
    let ax = setup.cs.a().mul_vec(x)?;
    Ok(max_abs_vec(&ax.iter().zip(setup.cs.b()).map(|(u, v)| u - v).collect::<Vec<_>>()))
}

enum RmseCell {
    Spde { size: usize, rep: usize },
    Reference { rep: usize },
}

fn record_fit(out: &mut RunOutput, cfg: &ExperimentConfig, method: Method, size: usize, rep: usize, secs: f64, fit: &Fit, truth: &[f64]) {
    let ex = cfg.experiment.as_str();
    out.rows.push(ResultRow::new(ex, method, size, rep, secs, rmse(&fit.prediction, truth), cfg.seed));
    out.check(ex, method.as_str(), size, rep, "loglik", fit.loglik);
    out.check(ex, method.as_str(), size, rep, "iterations", fit.iters as f64);
    for (name, v) in ["param_1", "param_2"].iter().zip(&fit.params) {
        out.check(ex, method.as_str(), size, rep, name, *v);
    }
    if !fit.converged {
        out.fail(ex, method.as_str(), size, rep, format!("optimizer stopped after {} iterations without converging", fit.iters));
    }
}

/// RMSE against basis size, with the kernel and constant references once per dataset (size 0).
pub fn run_divfree_rmse(cfg: &ExperimentConfig, policy: &NumericPolicy) -> Result<RunOutput> {
    let ex = cfg.experiment.as_str();
    let mut out = RunOutput::default();
    let built = run_cells(&cfg.n_grid, cfg.threads, |_, &side| SpdeSetup::new(cfg, side, policy));
    let mut setups = Vec::new();
    for (side, b) in cfg.n_grid.iter().zip(built) {
        match b {
            Ok((s, row)) => {
                log::info!("n = {} per component: {} divergence rows", s.n(), s.cs.k());
                out.basis.push(row);
                setups.push(s);
            }
            Err(e) => out.fail(ex, "basis", side * side, 0, e),
        }
    }
    let data: Vec<Dataset> = (0..cfg.reps).map(|r| simulate_dataset(&mut stream(cfg.seed, r as u64), cfg, cfg.observations)).collect();
    let mut cells: Vec<RmseCell> = (0..cfg.reps).map(|rep| RmseCell::Reference { rep }).collect();
    cells.extend((0..setups.len()).flat_map(|size| (0..cfg.reps).map(move |rep| RmseCell::Spde { size, rep })));
    let results = run_cells(&cells, cfg.threads, |_, cell| {
        let mut out = RunOutput::default();
        match *cell {
            RmseCell::Reference { rep } => {
                let d = &data[rep];
                let t = Instant::now();
                let pred = constant_prediction(d);
                out.rows.push(ResultRow::new(ex, Method::Constant, 0, rep, t.elapsed().as_secs_f64(), rmse(&pred, &d.truth), cfg.seed));
                if cfg.baseline {
                    let t = Instant::now();
                    match fit_kernel(d, cfg) {
                        Ok(fit) => record_fit(&mut out, cfg, Method::DenseCov, 0, rep, t.elapsed().as_secs_f64(), &fit, &d.truth),
                        Err(e) => out.fail(ex, Method::DenseCov.as_str(), 0, rep, e),
                    }
                }
            }
            RmseCell::Spde { size, rep } => {
                let (s, d) = (&setups[size], &data[rep]);
                let t = Instant::now();
                let c = fit_spde(s, d, cfg, &|so, k, p| s.constrained(so, k, p, policy));
                let tc = t.elapsed().as_secs_f64();
                match c {
                    Ok(fit) => {
                        record_fit(&mut out, cfg, Method::Spde, s.n(), rep, tc, &fit, &d.truth);
                        match divergence_residual(s, &fit.latent_mean) {
                            Ok(r) => out.check(ex, Method::Spde.as_str(), s.n(), rep, "divergence_residual", r),
                            Err(e) => out.fail(ex, Method::Spde.as_str(), s.n(), rep, e),
                        }
                    }
                    Err(e) => out.fail(ex, Method::Spde.as_str(), s.n(), rep, e),
                }
                let t = Instant::now();
                let u = fit_spde(s, d, cfg, &|so, k, p| s.unconstrained(so, k, p, policy));
                let tu = t.elapsed().as_secs_f64();
                match u {
                    Ok(fit) => {
                        record_fit(&mut out, cfg, Method::SpdeUnconstrained, s.n(), rep, tu, &fit, &d.truth);
                        if let Ok(r) = divergence_residual(s, &fit.latent_mean) {
                            out.check(ex, Method::SpdeUnconstrained.as_str(), s.n(), rep, "divergence_residual", r);
                        }
                    }
                    Err(e) => out.fail(ex, Method::SpdeUnconstrained.as_str(), s.n(), rep, e),
                }
            }
        }
        out
    });
    for r in results {
        out.merge(r);
    }
    Ok(out)
}

/// Prediction cost against the number of observations at fixed parameters.
pub fn run_divfree_timing(cfg: &ExperimentConfig, policy: &NumericPolicy) -> Result<RunOutput> {
    let ex = cfg.experiment.as_str();
    let mut out = RunOutput::default();
    let (setup, row) = SpdeSetup::new(cfg, cfg.timing_side, policy)?;
    out.basis.push(row);
    let (kappa2, phi) = (cfg.timing_kappa2, cfg.timing_phi);
    let kernel_sigma2 = 4.0 * spde_component_variance(kappa2, phi) / kappa2;
    let cells: Vec<(usize, usize)> = cfg.m_grid.iter().flat_map(|&m| (0..cfg.reps).map(move |r| (m, r))).collect();
    let results = run_cells(&cells, cfg.threads, |i, &(m, rep)| {
        let mut out = RunOutput::default();
        let d = simulate_dataset(&mut stream(cfg.seed, 1_000_000 + i as u64), cfg, m);
        let predict = |constrained: bool| -> Result<Vec<f64>> {
            let so = setup.observations(&d, cfg.noise_variance())?;
            let (_, mean) = if constrained {
                setup.constrained(&so, kappa2, phi, policy)?
            } else {
                setup.unconstrained(&so, kappa2, phi, policy)?
            };
            Ok(setup.predictor(&d)?.mul_vec(&mean)?)
        };
        let mut row = |method: Method, r: Result<(f64, Vec<f64>)>| match r {
            Ok((secs, pred)) => out.rows.push(ResultRow::new(ex, method, m, rep, secs, rmse(&pred, &d.truth), cfg.seed)),
            Err(e) => out.fail(ex, method.as_str(), m, rep, e),
        };
        row(Method::Spde, timed(cfg.inner_repeats, || predict(true)));
        row(Method::SpdeUnconstrained, timed(cfg.inner_repeats, || predict(false)));
        if cfg.baseline && m <= cfg.dense_max_k {
            row(
                Method::DenseCov,
                timed(cfg.inner_repeats, || {
                    KernelModel::new(&d.locations, &d.y, kappa2.sqrt(), kernel_sigma2, cfg.noise_variance())?.predict(&d.locations, &d.grid)
                }),
            );
        }
        out
    });
    for r in results {
        out.merge(r);
    }
    Ok(out)
}

/// RMS over draws and centers of the central-difference divergence of fields
/// sampled from the dense divergence-free prior, for each step in `steps`.
pub fn kernel_prior_fd_divergence<R: Rng + ?Sized>(
    rng: &mut R,
    centers: &[[f64; 2]],
    steps: &[f64],
    kappa: f64,
    sigma2: f64,
    draws: usize,
) -> Result<Vec<f64>> {
    steps
        .iter()
        .map(|&h| {
            let pts: Vec<[f64; 2]> = centers
                .iter()
                .flat_map(|c| [[c[0] + h, c[1]], [c[0] - h, c[1]], [c[0], c[1] + h], [c[0], c[1] - h]])
                .collect();
            let np = pts.len();
            let cov = divfree_cov(&pts, &pts, NU, kappa, sigma2)?;
            // divergence functional per center, on the stacked [f₁; f₂] at pts
            let mut d = DMatrix::zeros(centers.len(), 2 * np);
            for c in 0..centers.len() {
                let b = 4 * c;
                d[(c, b)] = 1.0 / (2.0 * h);
                d[(c, b + 1)] = -1.0 / (2.0 * h);
                d[(c, np + b + 2)] = 1.0 / (2.0 * h);
                d[(c, np + b + 3)] = -1.0 / (2.0 * h);
            }
            let eig = ((&cov + cov.transpose()) * 0.5).symmetric_eigen();
            let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
            let dr = &d * root;
            let mut ss = 0.0;
            for _ in 0..draws {
                let z = DVector::from_vec(standard_normals(rng, 2 * np));
                ss += (&dr * z).norm_squared();
            }
            Ok((ss / (draws * centers.len()) as f64).sqrt())
        })
        .collect()
}
