//! Conditioning on hard constraints `A X = b`.
//!
//! Two routes are provided. The classical one works with the `k × k` matrix
//! `A Q⁻¹ Aᵀ` ([`Kriging`], [`loglik_standard`], [`oracle_conditional`]);
//! the transformed one works in a [`ConstraintBasis`] and only factorizes the
//! unconstrained block `Q*_{𝒰𝒰}` ([`TransformedModel`]).

use crate::constraints::{transform, ConstraintBasis, ConstraintSet};
use crate::dense::{null_space, numerical_rank};
use crate::error::{check_len, Error, Result};
use crate::gmrf::Gmrf;
use crate::nullspace::{NullSpaceBasis, PseudoFactor};
use crate::policy::NumericPolicy;
use crate::sparse::{cholesky, dot, CholFactor, SparseMat};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

fn ln2pi() -> f64 {
    (2.0 * PI).ln()
}

fn require_proper(g: &Gmrf) -> Result<()> {
    if g.is_intrinsic() {
        Err(Error::InvalidInput("this method needs a proper precision".into()))
    } else {
        Ok(())
    }
}

/// Dense conditional mean and covariance of `X | A X = b` for a proper field.
pub fn oracle_conditional(g: &Gmrf, cs: &ConstraintSet, policy: &NumericPolicy) -> Result<(DVector<f64>, DMatrix<f64>)> {
    require_proper(g)?;
    let n = g.n();
    check_len("constraint columns", n, cs.n())?;
    if n > policy.dense_oracle_cap {
        return Err(Error::DenseCapExceeded {
            rows: n,
            cap: policy.dense_oracle_cap,
        });
    }
    let qd = g.q().to_dense();
    let sigma = qd
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { column: 0, pivot: 0.0 })?
        .inverse();
    let a = cs.a().to_dense();
    let mu = DVector::from_vec(g.natural_mean(policy)?);
    let b = DVector::from_column_slice(cs.b());
    let sat = &sigma * a.transpose();
    let gram = &a * &sat;
    let gi = gram.cholesky().ok_or(Error::DenseConstraintGram)?.inverse();
    let mean = &mu - &sat * (&gi * (&a * &mu - b));
    let cov = &sigma - &sat * &gi * sat.transpose();
    Ok((mean, cov))
}

/// Precomputed pieces for conditioning by kriging: one sparse factorization of
/// `Q`, `k` solves for `Q⁻¹Aᵀ`, and one dense factorization of `A Q⁻¹ Aᵀ`.
#[derive(Debug, Clone)]
pub struct Kriging {
    chol: CholFactor,
    mu: Vec<f64>,
    a: SparseMat,
    b: Vec<f64>,
    w: DMatrix<f64>,
    gram: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Kriging {
    pub fn new(g: &Gmrf, cs: &ConstraintSet, policy: &NumericPolicy) -> Result<Self> {
        require_proper(g)?;
        check_len("constraint columns", g.n(), cs.n())?;
        let chol = cholesky(g.q(), g.ordering(), policy)?;
        let mu = g.natural_mean(policy)?;
        let at = cs.a().transpose().to_dense();
        let w = chol.solve_dense(&at)?;
        let gram_m = cs.a().mul_dense(&w)?;
        let gram_m = (&gram_m + gram_m.transpose()) * 0.5;
        let gram = gram_m.cholesky().ok_or(Error::DenseConstraintGram)?;
        Ok(Self {
            chol,
            mu,
            a: cs.a().clone(),
            b: cs.b().to_vec(),
            w,
            gram,
        })
    }

    /// `x − Q⁻¹Aᵀ(AQ⁻¹Aᵀ)⁻¹(Ax − b)`.
    pub fn correct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a.mul_vec(x)?;
        let r = DVector::from_iterator(ax.len(), ax.iter().zip(&self.b).map(|(u, v)| u - v));
        let c = &self.w * self.gram.solve(&r);
        Ok(x.iter().zip(c.iter()).map(|(u, v)| u - v).collect())
    }

    /// One constrained draw from white noise `z`.
    pub fn sample(&self, z: &[f64]) -> Result<Vec<f64>> {
        let dx = self.chol.solve_r(z)?;
        let x: Vec<f64> = self.mu.iter().zip(&dx).map(|(a, b)| a + b).collect();
        self.correct(&x)
    }

    pub fn factor(&self) -> &CholFactor {
        &self.chol
    }
}

/// Conditioning by kriging for a single draw.
pub fn krige_sample(g: &Gmrf, cs: &ConstraintSet, z: &[f64], policy: &NumericPolicy) -> Result<Vec<f64>> {
    Kriging::new(g, cs, policy)?.sample(z)
}

/// `ln π_{AX}(b)` from `AX ~ N(Aμ, A Q⁻¹ Aᵀ)`.
pub fn loglik_standard(g: &Gmrf, cs: &ConstraintSet, policy: &NumericPolicy) -> Result<f64> {
    require_proper(g)?;
    check_len("constraint columns", g.n(), cs.n())?;
    let chol = cholesky(g.q(), g.ordering(), policy)?;
    let mu = g.natural_mean(policy)?;
    let at = cs.a().transpose().to_dense();
    let w = chol.solve_dense(&at)?;
    let gram = cs.a().mul_dense(&w)?;
    let gram = (&gram + gram.transpose()) * 0.5;
    let gc = gram.cholesky().ok_or(Error::DenseConstraintGram)?;
    let amu = cs.a().mul_vec(&mu)?;
    let r = DVector::from_iterator(cs.k(), amu.iter().zip(cs.b()).map(|(u, v)| v - u));
    let quad = r.dot(&gc.solve(&r));
    let logdet = 2.0 * gc.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * cs.k() as f64 * ln2pi() - 0.5 * logdet - 0.5 * quad)
}

/// `ln |A Aᵀ|` via a dense factorization of the `k × k` Gram matrix.
pub fn log_det_aat_dense(a: &SparseMat) -> Result<f64> {
    let aat = a.matmul(&a.transpose())?.to_dense();
    let c = aat.cholesky().ok_or(Error::DenseConstraintGram)?;
    Ok(2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `ln π(x | A x = b)` for a feasible `x`, with the level-set density factor `|AAᵀ|^{-1/2}`.
pub fn log_conditional_density(g: &Gmrf, cs: &ConstraintSet, x: &[f64], policy: &NumericPolicy) -> Result<f64> {
    let res = cs.residual(x)?;
    let scale = cs.b().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if res > policy.residual_tol * scale {
        return Err(Error::InvalidInput(format!("point violates the constraints by {res:e}")));
    }
    Ok(g.log_density(x, policy)? - 0.5 * log_det_aat_dense(cs.a())? - loglik_standard(g, cs, policy)?)
}

/// A field expressed in a constraint basis with `Q*_{𝒰𝒰}` factorized.
///
/// Everything here is independent of the right-hand side `b`, so one model
/// serves repeated likelihood evaluations and draws.
#[derive(Debug, Clone)]
pub struct TransformedModel<'a> {
    basis: &'a ConstraintBasis,
    q_star: SparseMat,
    q_uu: SparseMat,
    q_uc: SparseMat,
    q_cc: SparseMat,
    mu_star: Vec<f64>,
    e_star: DMatrix<f64>,
    s: usize,
    k0: usize,
    uu: PseudoFactor,
    log_pdet_q: f64,
}

impl<'a> TransformedModel<'a> {
    pub fn new(g: &Gmrf, basis: &'a ConstraintBasis, policy: &NumericPolicy) -> Result<Self> {
        let q_factor = g.factor(policy)?;
        Self::with_prior_factor(g, basis, q_factor.log_pseudo_det(), policy)
    }

    /// Like [`TransformedModel::new`] but fails unless `rank(A E_Q)` equals `expected_k0`.
    pub fn new_checked(g: &Gmrf, basis: &'a ConstraintBasis, expected_k0: usize, policy: &NumericPolicy) -> Result<Self> {
        let m = Self::new(g, basis, policy)?;
        if m.k0 != expected_k0 {
            return Err(Error::RankAssumptionViolated {
                what: "rank(A E_Q)",
                expected: expected_k0,
                found: m.k0,
            });
        }
        Ok(m)
    }

    /// Uses a known `ln |Q|†`, skipping the factorization of `Q`.
    pub fn with_prior_factor(g: &Gmrf, basis: &'a ConstraintBasis, log_pdet_q: f64, policy: &NumericPolicy) -> Result<Self> {
        let tr = transform(g, basis, policy)?;
        Self::from_transformed(basis, tr.q_star, tr.mu_star, tr.e_star, log_pdet_q, g, policy)
    }

    /// Builds the model from a precomputed `Q* = T Q Tᵀ`.
    pub fn from_parts(
        g: &Gmrf,
        basis: &'a ConstraintBasis,
        q_star: SparseMat,
        log_pdet_q: f64,
        policy: &NumericPolicy,
    ) -> Result<Self> {
        check_len("transformed precision", basis.n(), q_star.nrows())?;
        let mu_star = basis.apply(&g.natural_mean(policy)?)?;
        let e_star = basis.t().mul_dense(g.nullspace().matrix())?;
        Self::from_transformed(basis, q_star, mu_star, e_star, log_pdet_q, g, policy)
    }

    fn from_transformed(
        basis: &'a ConstraintBasis,
        q_star: SparseMat,
        mu_star: Vec<f64>,
        e_star: DMatrix<f64>,
        log_pdet_q: f64,
        g: &Gmrf,
        policy: &NumericPolicy,
    ) -> Result<Self> {
        let (n, k) = (basis.n(), basis.k());
        let s = e_star.ncols();
        let e_c = e_star.rows(0, k).into_owned();
        let e_u = e_star.rows(k, n - k).into_owned();
        let (k0, uu_null) = if s == 0 {
            (0, NullSpaceBasis::empty(n - k))
        } else {
            // E* has orthonormal columns, so unit scale separates rank from rounding
            let k0 = numerical_rank(&e_c, policy.rank_tol, 1.0, policy)?;
            let nmat = null_space(&e_c, policy.rank_tol, 1.0, policy)?;
            let null = if nmat.ncols() == 0 {
                NullSpaceBasis::empty(n - k)
            } else {
                NullSpaceBasis::new(&e_u * nmat)?
            };
            (k0, null)
        };
        let q_uu = q_star.slice(k..n, k..n);
        let q_uc = q_star.slice(k..n, 0..k);
        let q_cc = q_star.slice(0..k, 0..k);
        let uu = PseudoFactor::new(&q_uu, &uu_null, g.ordering(), policy)?;
        Ok(Self {
            basis,
            q_star,
            q_uu,
            q_uc,
            q_cc,
            mu_star,
            e_star,
            s,
            k0,
            uu,
            log_pdet_q,
        })
    }

    pub fn basis(&self) -> &'a ConstraintBasis {
        self.basis
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    /// Rank deficiency of `Q`.
    pub fn s(&self) -> usize {
        self.s
    }

    /// `rank(A E_Q)`.
    pub fn k0(&self) -> usize {
        self.k0
    }

    pub fn q_star(&self) -> &SparseMat {
        &self.q_star
    }

    pub fn q_uu(&self) -> &SparseMat {
        &self.q_uu
    }

    pub fn q_uc(&self) -> &SparseMat {
        &self.q_uc
    }

    pub fn q_cc(&self) -> &SparseMat {
        &self.q_cc
    }

    pub fn mu_star(&self) -> &[f64] {
        &self.mu_star
    }

    pub fn e_star(&self) -> &DMatrix<f64> {
        &self.e_star
    }

    pub fn uu_factor(&self) -> &PseudoFactor {
        &self.uu
    }

    /// Kernel of `Q*_{𝒰𝒰}`, spanned by `T_𝒰 E_Q N` with `N = null(A E_Q)`.
    pub fn uu_nullspace(&self) -> &NullSpaceBasis {
        self.uu.nullspace()
    }

    /// Expected rank of `Q*_{𝒰𝒰}`: `n − s − (k − k₀)`.
    pub fn uu_rank(&self) -> usize {
        self.n() - self.s - (self.k() - self.k0)
    }

    /// `d = b* − μ*_𝒞` and `r = Q*_{𝒰𝒞} d`.
    fn residuals(&self, b: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let b_star = self.basis.b_star(b)?;
        let d: Vec<f64> = b_star.iter().zip(&self.mu_star[..self.k()]).map(|(u, v)| u - v).collect();
        let r = self.q_uc.mul_vec(&d)?;
        Ok((b_star, d, r))
    }

    /// `ln π_{AX}(b)`; for intrinsic fields the density of the proper part of `AX`.
    pub fn loglik(&self, b: &[f64]) -> Result<f64> {
        let (_, d, r) = self.residuals(b)?;
        let w = self.uu.solve(&r)?;
        let quad = self.q_cc.quad_form(&d)? - dot(&r, &w);
        let kk = (self.k() - self.k0) as f64;
        Ok(0.5 * (self.log_pdet_q - self.uu.log_pseudo_det())
            - 0.5 * kk * ln2pi()
            - 0.5 * self.basis.log_det_aat()
            - 0.5 * quad)
    }

    /// `μ̃*_𝒰 = μ*_𝒰 − (Q*_{𝒰𝒰})† Q*_{𝒰𝒞}(b* − μ*_𝒞)` together with `b*`.
    pub fn conditional_parts(&self, b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (b_star, _, r) = self.residuals(b)?;
        let w = self.uu.solve(&r)?;
        let mu_u: Vec<f64> = self.mu_star[self.k()..].iter().zip(&w).map(|(u, v)| u - v).collect();
        Ok((b_star, mu_u))
    }

    pub fn conditional(&self, b: &[f64]) -> Result<ConditionalGmrf<'_, 'a>> {
        let (b_star, mu_u) = self.conditional_parts(b)?;
        let mu_tilde = self.basis.back_transform(&b_star, &mu_u)?;
        Ok(ConditionalGmrf {
            model: self,
            b_star,
            mu_u,
            mu_tilde,
        })
    }
}

/// Law of `X | A X = b` in the constraint basis.
#[derive(Debug, Clone)]
pub struct ConditionalGmrf<'m, 'a> {
    model: &'m TransformedModel<'a>,
    b_star: Vec<f64>,
    mu_u: Vec<f64>,
    mu_tilde: Vec<f64>,
}

impl ConditionalGmrf<'_, '_> {
    /// Conditional mean `μ̃`.
    pub fn mean(&self) -> &[f64] {
        &self.mu_tilde
    }

    pub fn b_star(&self) -> &[f64] {
        &self.b_star
    }

    /// `μ̃*_𝒰`.
    pub fn mean_u(&self) -> &[f64] {
        &self.mu_u
    }

    pub fn k0(&self) -> usize {
        self.model.k0
    }

    /// `Q_cond = T_𝒰ᵀ Q*_{𝒰𝒰} T_𝒰`, singular with rank `n − s − (k − k₀)`.
    pub fn precision(&self) -> Result<SparseMat> {
        let t_u = self.model.basis.t_u();
        t_u.transpose().matmul(&self.model.q_uu)?.matmul(&t_u)?.symmetrized()
    }

    /// Dense `T_𝒰ᵀ (Q*_{𝒰𝒰})† T_𝒰`, the conditional covariance of the proper part.
    pub fn covariance_dense(&self) -> Result<DMatrix<f64>> {
        let t_u = self.model.basis.t_u().to_dense();
        let m = t_u.nrows();
        let mut inv = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            let col = self.model.uu.solve(&e)?;
            inv.column_mut(j).copy_from_slice(&col);
        }
        Ok(t_u.transpose() * inv * t_u)
    }

    /// One draw `x = Tᵀ [b*; μ̃*_𝒰 + R⁻¹ z]` from white noise `z` of length `n − k`.
    pub fn sample(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("noise length", self.mu_u.len(), z.len())?;
        let w = self.model.uu.sample_whitened(z)?;
        let x_u: Vec<f64> = self.mu_u.iter().zip(&w).map(|(a, b)| a + b).collect();
        self.model.basis.back_transform(&self.b_star, &x_u)
    }
}

/// `ln π_{AX}(b)` through the constraint basis.
pub fn loglik_transformed(g: &Gmrf, cb: &ConstraintBasis, b: &[f64], policy: &NumericPolicy) -> Result<f64> {
    TransformedModel::new(g, cb, policy)?.loglik(b)
}

/// Conditional mean and the rank-related data of `X | A X = b`.
pub fn conditional_mean(g: &Gmrf, cb: &ConstraintBasis, b: &[f64], policy: &NumericPolicy) -> Result<Vec<f64>> {
    let m = TransformedModel::new(g, cb, policy)?;
    let c = m.conditional(b)?;
    Ok(c.mean().to_vec())
}

/// One constrained draw through the constraint basis.
pub fn sample_conditional(g: &Gmrf, cb: &ConstraintBasis, b: &[f64], z: &[f64], policy: &NumericPolicy) -> Result<Vec<f64>> {
    let m = TransformedModel::new(g, cb, policy)?;
    let c = m.conditional(b)?;
    c.sample(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::build_basis_svd;
    use approx::assert_abs_diff_eq;

    fn p() -> NumericPolicy {
        NumericPolicy::default()
    }

    fn sum_case() -> (Gmrf, ConstraintSet) {
        let g = Gmrf::natural(SparseMat::identity(2), vec![1.0, 1.0]).unwrap();
        let a = SparseMat::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        (g, ConstraintSet::new(a, vec![0.0]).unwrap())
    }

    #[test]
    fn oracle_sum_to_zero() {
        let (g, cs) = sum_case();
        let (m, c) = oracle_conditional(&g, &cs, &p()).unwrap();
        assert_abs_diff_eq!(m, DVector::from_vec(vec![0.0, 0.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(c, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]), epsilon = 1e-15);
    }

    #[test]
    fn oracle_conditioning_on_the_mean() {
        let g = Gmrf::natural(SparseMat::from_diag(&[2.0, 3.0, 1.0]), vec![1.0, -1.0, 0.5]).unwrap();
        let a = SparseMat::from_triplets(1, 3, &[(0, 0, 1.0)]).unwrap();
        let cs = ConstraintSet::new(a, vec![1.0]).unwrap();
        let (m, c) = oracle_conditional(&g, &cs, &p()).unwrap();
        assert_abs_diff_eq!(m, DVector::from_vec(vec![1.0, -1.0, 0.5]), epsilon = 1e-15);
        assert!(c.row(0).amax() < 1e-15 && c.column(0).amax() < 1e-15);
    }

    #[test]
    fn kriging_hand_example() {
        let g = Gmrf::centered(SparseMat::identity(2)).unwrap();
        let a = SparseMat::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let cs = ConstraintSet::new(a, vec![0.0]).unwrap();
        let x = krige_sample(&g, &cs, &[1.0, 0.0], &p()).unwrap();
        assert_abs_diff_eq!(x[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn standard_loglik_examples() {
        let (g, cs) = sum_case();
        let expected = (-1f64).exp().ln() - (2.0 * PI.sqrt()).ln();
        assert_abs_diff_eq!(loglik_standard(&g, &cs, &p()).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, -2.2655, epsilon = 1e-4);
        let cb = build_basis_svd(cs.a(), &p()).unwrap();
        assert_abs_diff_eq!(loglik_transformed(&g, &cb, cs.b(), &p()).unwrap(), expected, epsilon = 1e-14);

        // scaling the row by c shifts the value by −ln|c|
        let c = -3.0;
        let a = SparseMat::from_triplets(1, 2, &[(0, 0, c), (0, 1, c)]).unwrap();
        let scaled = ConstraintSet::new(a, vec![0.0]).unwrap();
        assert_abs_diff_eq!(
            loglik_standard(&g, &scaled, &p()).unwrap(),
            expected - c.abs().ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn all_variables_constrained() {
        let q = SparseMat::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        let g = Gmrf::natural(q, vec![0.5, -0.5]).unwrap();
        let cs = ConstraintSet::new(SparseMat::identity(2), vec![1.0, 2.0]).unwrap();
        let direct = g.log_density(&[1.0, 2.0], &p()).unwrap();
        assert_abs_diff_eq!(loglik_standard(&g, &cs, &p()).unwrap(), direct, epsilon = 1e-13);
    }

    #[test]
    fn conditional_sum_case() {
        let (g, cs) = sum_case();
        let cb = build_basis_svd(cs.a(), &p()).unwrap();
        let model = TransformedModel::new(&g, &cb, &p()).unwrap();
        let c = model.conditional(cs.b()).unwrap();
        assert_abs_diff_eq!(c.mean()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.mean()[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            c.precision().unwrap().to_dense(),
            DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]),
            epsilon = 1e-15
        );
        assert_eq!(c.sample(&[0.0]).unwrap(), c.mean().to_vec());
    }

    #[test]
    fn intrinsic_rw1_sum_constraint() {
        let q = SparseMat::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 1.0)],
        )
        .unwrap();
        let g = Gmrf::centered(q).unwrap().with_nullspace(NullSpaceBasis::constant(3)).unwrap();
        let a = SparseMat::from_triplets(1, 3, &[(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let cb = build_basis_svd(&a, &p()).unwrap();
        let m = TransformedModel::new_checked(&g, &cb, 1, &p()).unwrap();
        assert_eq!(m.uu_rank(), 2);
        assert!(m.uu_nullspace().is_empty());
        // the constrained direction is exactly the improper one, so AX carries
        // no proper part: the value is −½ ln|AAᵀ| = −½ ln 3 for every b
        for b in [0.0, 5.0] {
            let ll = m.loglik(&[b]).unwrap();
            assert_abs_diff_eq!(ll, -0.5 * 3f64.ln(), epsilon = 1e-12);
        }
        let c = m.conditional(&[0.0]).unwrap();
        assert!(c.mean().iter().all(|v| v.abs() < 1e-14));
        assert!(matches!(
            TransformedModel::new_checked(&g, &cb, 0, &p()),
            Err(Error::RankAssumptionViolated { expected: 0, found: 1, .. })
        ));
    }
}
