//! Likelihood and conditional-sampling cost against the number of exact point
//! observations of an SPDE field on the unit square.

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::results::{Method, ResultRow};
use crate::runner::{run_cells, timed, BasisRow, RunOutput};
use cgmrf_core::hard::{loglik_standard, Kriging, TransformedModel};
use cgmrf_core::rng::{standard_normals, stream};
use cgmrf_core::sparse::{cholesky, max_abs_vec, FillOrdering};
use cgmrf_core::spde::{build_mesh, matern_cov_matrix, obs_matrix, spde_marginal_variance, Mesh, Rect, SpdeOperators, TransformedOperators};
use cgmrf_core::{build_basis_blocked, ConstraintBasis, ConstraintSet, Gmrf, NumericPolicy};
use nalgebra::DVector;
use rand::Rng;
use std::time::Instant;

const EXPERIMENT: &str = "hard-timing";

/// Draws `k` points, one in each of `k` distinct triangles, uniformly within each.
pub fn one_point_per_triangle<R: Rng + ?Sized>(rng: &mut R, mesh: &Mesh, k: usize) -> Vec<[f64; 2]> {
    let picks = rand::seq::index::sample(rng, mesh.triangles().len(), k);
    picks
        .iter()
        .map(|t| {
            let p = mesh.triangles()[t].map(|v| mesh.nodes()[v]);
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                (u, v) = (1.0 - u, 1.0 - v);
            }
            [0, 1].map(|d| p[0][d] + u * (p[1][d] - p[0][d]) + v * (p[2][d] - p[0][d]))
        })
        .collect()
}

/// Everything that depends on `k` but not on the parameters.
struct SizeSetup {
    k: usize,
    locations: Vec<[f64; 2]>,
    cs: ConstraintSet,
    cb: ConstraintBasis,
    tops: TransformedOperators,
}

fn setup_size(cfg: &ExperimentConfig, mesh: &Mesh, ops: &SpdeOperators, index: usize, k: usize, policy: &NumericPolicy) -> Result<(SizeSetup, BasisRow)> {
    let mut rng = stream(cfg.seed, index as u64);
    let locations = one_point_per_triangle(&mut rng, mesh, k);
    let a = obs_matrix(mesh, &locations)?;
    // data from the simulation parameters, observed without noise
    let truth = Gmrf::centered(ops.precision(cfg.sim_kappa2, cfg.sim_phi)?)?;
    let x = truth.sample_with(&standard_normals(&mut rng, mesh.n_nodes()), policy)?;
    let cs = ConstraintSet::new(a.clone(), a.mul_vec(&x)?)?;
    let t = Instant::now();
    let cb = build_basis_blocked(cs.a(), policy)?;
    let basis_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let tops = ops.congruences(&cb, policy.drop_tol)?;
    let congruence_seconds = t.elapsed().as_secs_f64();
    let largest = cb.blocks().iter().max_by_key(|b| b.rows.len());
    let row = BasisRow {
        experiment: EXPERIMENT.into(),
        size: k,
        basis_seconds,
        congruence_seconds,
        constraints: k,
        blocks: cb.blocks().len(),
        largest_block_rows: largest.map_or(0, |b| b.rows.len()),
        largest_block_cols: largest.map_or(0, |b| b.cols.len()),
    };
    Ok((SizeSetup { k, locations, cs, cb, tops }, row))
}

fn transformed_model<'a>(ops: &SpdeOperators, s: &'a SizeSetup, kappa2: f64, phi: f64, policy: &NumericPolicy) -> Result<TransformedModel<'a>> {
    let q = ops.precision(kappa2, phi)?;
    let log_det = cholesky(&q, &FillOrdering::Amd, policy)?.logdet();
    let g = Gmrf::centered(q)?;
    Ok(TransformedModel::from_parts(&g, &s.cb, s.tops.precision(kappa2, phi)?, log_det, policy)?)
}

/// `ln N(y; 0, Σ)` for the Matérn covariance matching the SPDE parameters.
fn dense_loglik(s: &SizeSetup, kappa2: f64, phi: f64) -> Result<f64> {
    let kappa = kappa2.sqrt();
    let sigma2 = spde_marginal_variance(kappa, phi, 1.0)?;
    let cov = matern_cov_matrix(&s.locations, &s.locations, 1.0, kappa, sigma2)?;
    let chol = cov.cholesky().ok_or(cgmrf_core::Error::NotPositiveDefinite { column: 0, pivot: 0.0 })?;
    let y = DVector::from_column_slice(s.cs.b());
    let quad = y.dot(&chol.solve(&y));
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (s.k as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad))
}

fn run_cell(cfg: &ExperimentConfig, ops: &SpdeOperators, s: &SizeSetup, rep: usize, cell: usize, policy: &NumericPolicy) -> RunOutput {
    let mut out = RunOutput::default();
    let mut rng = stream(cfg.seed, 1_000_000 + cell as u64);
    let kappa2 = rng.random_range(cfg.kappa2_range.0..=cfg.kappa2_range.1);
    let phi = rng.random_range(cfg.phi_range.0..=cfg.phi_range.1);
    let n = ops.c().nrows();
    let z_full = standard_normals(&mut rng, n);
    let z_u = standard_normals(&mut rng, n - s.k);
    let (k, reps, seed) = (s.k, cfg.inner_repeats, cfg.seed);
    let row = |out: &mut RunOutput, m: Method, r: Result<(f64, f64)>| match r {
        Ok((secs, v)) => out.rows.push(ResultRow::new(EXPERIMENT, m, k, rep, secs, v, seed)),
        Err(e) => out.fail(EXPERIMENT, m.as_str(), k, rep, e),
    };
    let g = match ops.precision(kappa2, phi).and_then(Gmrf::centered) {
        Ok(g) => g,
        Err(e) => {
            out.fail(EXPERIMENT, "all", k, rep, e);
            return out;
        }
    };

    let std_ll = timed(reps, || Ok(loglik_standard(&g, &s.cs, policy)?));
    let tr_ll = timed(reps, || transformed_model(ops, s, kappa2, phi, policy)?.loglik(s.cs.b()).map_err(Into::into));
    if let (Ok((_, a)), Ok((_, b))) = (&std_ll, &tr_ll) {
        out.check(EXPERIMENT, "transformed", k, rep, "loglik_rel_diff", (a - b).abs() / a.abs().max(1.0));
    }
    row(&mut out, Method::Standard, std_ll);
    row(&mut out, Method::Transformed, tr_ll);
    if k <= cfg.dense_max_k {
        row(&mut out, Method::DenseCov, timed(reps, || dense_loglik(s, kappa2, phi)));
    }

    let residual = |x: &[f64]| -> Result<f64> {
        let ax = s.cs.a().mul_vec(x)?;
        Ok(max_abs_vec(&ax.iter().zip(s.cs.b()).map(|(u, v)| u - v).collect::<Vec<_>>()))
    };
    let krige = timed(reps, || Ok(Kriging::new(&g, &s.cs, policy)?.sample(&z_full)?)).and_then(|(t, x)| Ok((t, residual(&x)?)));
    row(&mut out, Method::Krige, krige);
    let alg3 = timed(reps, || {
        let model = transformed_model(ops, s, kappa2, phi, policy)?;
        Ok(model.conditional(s.cs.b())?.sample(&z_u)?)
    })
    .and_then(|(t, x)| Ok((t, residual(&x)?)));
    row(&mut out, Method::Alg3, alg3);
    out
}

pub fn run_hard_timing(cfg: &ExperimentConfig, policy: &NumericPolicy) -> Result<RunOutput> {
    let mesh = build_mesh(Rect::unit(), cfg.mesh, cfg.mesh)?;
    let ops = SpdeOperators::new(&mesh, 2)?;
    let mut out = RunOutput::default();
    let sizes: Vec<(usize, usize)> = cfg.k_grid.iter().copied().enumerate().collect();
    let setups = run_cells(&sizes, cfg.threads, |_, &(i, k)| setup_size(cfg, &mesh, &ops, i, k, policy));
    let mut ready = Vec::new();
    for ((_, k), s) in sizes.iter().zip(setups) {
        match s {
            Ok((s, b)) => {
                log::info!("k = {k}: basis with {} blocks in {:.3}s", b.blocks, b.basis_seconds);
                out.basis.push(b);
                ready.push(s);
            }
            Err(e) => out.fail(EXPERIMENT, "basis", *k, 0, e),
        }
    }
    let cells: Vec<(usize, usize)> = (0..ready.len()).flat_map(|i| (0..cfg.reps).map(move |r| (i, r))).collect();
    let results = run_cells(&cells, cfg.threads, |c, &(i, r)| run_cell(cfg, &ops, &ready[i], r, c, policy));
    for r in results {
        out.merge(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    #[test]
    fn points_fall_in_distinct_triangles() {
        let mesh = build_mesh(Rect::unit(), 6, 6).unwrap();
        let mut rng = stream(1, 0);
        let pts = one_point_per_triangle(&mut rng, &mesh, 50);
        let mut tris: Vec<usize> = pts.iter().map(|&p| mesh.locate(p).unwrap().0).collect();
        tris.sort_unstable();
        tris.dedup();
        assert_eq!(tris.len(), 50);
    }

    #[test]
    fn small_run_agrees_across_methods() {
        let mut cfg = ExperimentConfig::defaults(Experiment::HardTiming);
        cfg.mesh = 12;
        cfg.k_grid = vec![5, 40];
        cfg.reps = 2;
        cfg.inner_repeats = 1;
        cfg.threads = 2;
        let out = run_hard_timing(&cfg, &NumericPolicy::default()).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert_eq!(out.rows.len(), 2 * 2 * 5);
        assert!(out.check_values("transformed", "loglik_rel_diff").iter().all(|&d| d <= 1e-6));
        for r in out.rows.iter().filter(|r| r.method == "krige" || r.method == "alg3") {
            assert!(r.value <= 1e-9, "{r:?}");
        }
        assert_eq!(out.basis.len(), 2);
    }
}
