//! Transformed-basis results against the classical dense formulas on random proper fields.

use cgmrf_core::constraints::{build_basis_blocked, build_basis_svd, ConstraintBasis, ConstraintSet};
use cgmrf_core::hard::{krige_sample, loglik_standard, oracle_conditional, TransformedModel};
use cgmrf_core::rng::{standard_normals, stream};
use cgmrf_core::soft::{LoglikMode, PosteriorGmrf, SoftObservations};
use cgmrf_core::synth::{random_constraints, random_proper_gmrf, random_soft, Overlap};
use cgmrf_core::{Gmrf, NumericPolicy};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::f64::consts::PI;

fn policy() -> NumericPolicy {
    NumericPolicy::default()
}

fn overlap(i: u8) -> Overlap {
    [Overlap::None, Overlap::Random, Overlap::Mixed][i as usize % 3]
}

fn instance(seed: u64, n: usize, k: usize, ov: Overlap) -> (Gmrf, ConstraintSet) {
    let mut rng = stream(seed, 0);
    let g = random_proper_gmrf(&mut rng, n, 4).unwrap();
    let cs = random_constraints(&mut rng, n, k, ov).unwrap();
    (g, cs)
}

fn bases(cs: &ConstraintSet) -> [ConstraintBasis; 2] {
    [build_basis_svd(cs.a(), &policy()).unwrap(), build_basis_blocked(cs.a(), &policy()).unwrap()]
}

/// Joint-Gaussian posterior of `X | A X = b, Y = y` and the marginal log density of `y`.
fn dense_soft(g: &Gmrf, cs: &ConstraintSet, so: &SoftObservations) -> (DVector<f64>, DMatrix<f64>, f64) {
    let (mu, sigma) = oracle_conditional(g, cs, &policy()).unwrap();
    let b = so.b().to_dense();
    let m = so.m();
    let s = &b * &sigma * b.transpose() + DMatrix::identity(m, m) * so.sigma2();
    let c = s.clone().cholesky().unwrap();
    let r = DVector::from_column_slice(so.y()) - &b * &mu;
    let logdet = 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ll = -0.5 * (m as f64 * (2.0 * PI).ln() + logdet + r.dot(&c.solve(&r)));
    let gain = &sigma * b.transpose() * c.inverse();
    let mean = &mu + &gain * r;
    let cov = &sigma - &gain * &b * &sigma;
    (mean, cov, ll)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn likelihoods_agree(seed in any::<u64>(), n in 20usize..120, k in 1usize..10, ov in any::<u8>()) {
        let (g, cs) = instance(seed, n, k, overlap(ov));
        let standard = loglik_standard(&g, &cs, &policy()).unwrap();
        for cb in bases(&cs) {
            let ours = TransformedModel::new(&g, &cb, &policy()).unwrap().loglik(cs.b()).unwrap();
            prop_assert!((ours - standard).abs() <= 1e-8 * standard.abs().max(1.0), "{ours} vs {standard}");
        }
    }

    #[test]
    fn conditional_laws_agree(seed in any::<u64>(), n in 10usize..60, k in 1usize..6, ov in any::<u8>()) {
        let (g, cs) = instance(seed, n, k, overlap(ov));
        let (mean, cov) = oracle_conditional(&g, &cs, &policy()).unwrap();
        for cb in bases(&cs) {
            let model = TransformedModel::new(&g, &cb, &policy()).unwrap();
            let cond = model.conditional(cs.b()).unwrap();
            prop_assert!((DVector::from_column_slice(cond.mean()) - &mean).amax() <= 1e-8);
            prop_assert!((cond.covariance_dense().unwrap() - &cov).amax() <= 1e-8);
        }
    }

    #[test]
    fn every_sampler_hits_the_constraints(seed in any::<u64>(), n in 10usize..80, k in 1usize..8, ov in any::<u8>()) {
        let (g, cs) = instance(seed, n, k, overlap(ov));
        let mut rng = stream(seed, 1);
        let scale = cs.b().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let x = krige_sample(&g, &cs, &standard_normals(&mut rng, n), &policy()).unwrap();
        prop_assert!(cs.residual(&x).unwrap() <= 1e-9 * scale);
        let so = random_soft(&mut rng, n, 5, 0.4).unwrap();
        for cb in bases(&cs) {
            let model = TransformedModel::new(&g, &cb, &policy()).unwrap();
            let x = model.conditional(cs.b()).unwrap().sample(&standard_normals(&mut rng, n - k)).unwrap();
            prop_assert!(cs.residual(&x).unwrap() <= 1e-9 * scale);
            let post = PosteriorGmrf::new(&model, cs.b(), &so, &policy()).unwrap();
            let x = post.sample(&standard_normals(&mut rng, n - k)).unwrap();
            prop_assert!(cs.residual(&x).unwrap() <= 1e-9 * scale);
        }
    }

    #[test]
    fn soft_posterior_matches_joint_conditioning(seed in any::<u64>(), n in 10usize..80, k in 1usize..6, m in 1usize..15) {
        let (g, cs) = instance(seed, n, k, Overlap::Mixed);
        let so = random_soft(&mut stream(seed, 2), n, m.min(n), 0.25).unwrap();
        let (mean, cov, ll) = dense_soft(&g, &cs, &so);
        for cb in bases(&cs) {
            let model = TransformedModel::new(&g, &cb, &policy()).unwrap();
            let post = PosteriorGmrf::new(&model, cs.b(), &so, &policy()).unwrap();
            let ours = post.loglik(LoglikMode::Full).unwrap();
            prop_assert!((ours - ll).abs() <= 1e-8 * ll.abs().max(1.0), "{ours} vs {ll}");
            prop_assert!((DVector::from_column_slice(post.mean()) - &mean).amax() <= 1e-8);
            prop_assert!((post.covariance_dense().unwrap() - &cov).amax() <= 1e-8);
        }
    }

    #[test]
    fn basis_is_orthonormal_and_aligns_constraints(seed in any::<u64>(), n in 5usize..150, k in 1usize..20, ov in any::<u8>()) {
        let k = k.min(n / 2).max(1);
        let (_, cs) = instance(seed, n, k, overlap(ov));
        for cb in bases(&cs) {
            let t = cb.t().to_dense();
            prop_assert!((&t * t.transpose() - DMatrix::identity(n, n)).amax() <= 1e-10);
            let at = cs.a().to_dense() * t.transpose();
            prop_assert!(at.columns(k, n - k).amax() <= 1e-10);
            prop_assert!((cb.log_det_aat() - cgmrf_core::hard::log_det_aat_dense(cs.a()).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn loglik_is_invariant_to_row_scaling_up_to_jacobian(seed in any::<u64>(), c in 0.1f64..10.0) {
        // scaling A and b by c changes the density of AX by −k ln c
        let (g, cs) = instance(seed, 40, 3, Overlap::Mixed);
        let scaled = ConstraintSet::new(cs.a().scaled(c), cs.b().iter().map(|v| v * c).collect()).unwrap();
        let cb = build_basis_blocked(cs.a(), &policy()).unwrap();
        let cbs = build_basis_blocked(scaled.a(), &policy()).unwrap();
        let l0 = TransformedModel::new(&g, &cb, &policy()).unwrap().loglik(cs.b()).unwrap();
        let l1 = TransformedModel::new(&g, &cbs, &policy()).unwrap().loglik(scaled.b()).unwrap();
        prop_assert!((l1 - (l0 - 3.0 * c.ln())).abs() <= 1e-9 * l0.abs().max(1.0));
    }
}

#[test]
fn sampler_covariance_matches_closed_form() {
    let (g, cs) = instance(99, 20, 3, Overlap::Mixed);
    let (mean, cov) = oracle_conditional(&g, &cs, &policy()).unwrap();
    let cb = build_basis_blocked(cs.a(), &policy()).unwrap();
    let model = TransformedModel::new(&g, &cb, &policy()).unwrap();
    let cond = model.conditional(cs.b()).unwrap();
    let draws = 20_000;
    let mut rng = stream(99, 7);
    let mut sum = DVector::zeros(20);
    let mut outer = DMatrix::zeros(20, 20);
    for _ in 0..draws {
        let x = DVector::from_vec(cond.sample(&standard_normals(&mut rng, 17)).unwrap()) - &mean;
        sum += &x;
        outer += &x * x.transpose();
    }
    let nd = draws as f64;
    let emp = (outer - &sum * sum.transpose() / nd) / (nd - 1.0);
    for i in 0..20 {
        for j in 0..20 {
            // standard error of a sample covariance entry
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / nd).sqrt();
            assert!((emp[(i, j)] - cov[(i, j)]).abs() <= 5.0 * se + 1e-12, "({i},{j})");
        }
    }
}
