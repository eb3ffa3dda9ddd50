//! Hard constraints combined with noisy observations `Y ~ N(B X, σ² I)`.

use crate::constraints::ConstraintBasis;
use crate::dense::{null_space, numerical_rank};
use crate::error::{check_len, Error, Result};
use crate::gmrf::Gmrf;
use crate::hard::TransformedModel;
use crate::nullspace::{NullSpaceBasis, PseudoFactor};
use crate::policy::NumericPolicy;
use crate::sparse::{dot, SparseMat};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Observation matrix `B`, data `y` and noise variance `σ²`.
#[derive(Debug, Clone)]
pub struct SoftObservations {
    b: SparseMat,
    y: Vec<f64>,
    sigma2: f64,
}

impl SoftObservations {
    pub fn new(b: SparseMat, y: Vec<f64>, sigma2: f64) -> Result<Self> {
        check_len("observation count", b.nrows(), y.len())?;
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidInput(format!("noise variance must be positive, got {sigma2}")));
        }
        if b.nrows() > b.ncols() {
            return Err(Error::InvalidInput("more observations than latent variables".into()));
        }
        Ok(Self { b, y, sigma2 })
    }

    pub fn b(&self) -> &SparseMat {
        &self.b
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        Self::new(self.b.clone(), self.y.clone(), sigma2)
    }
}

/// Whether [`loglik_soft`] includes the `2π` normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoglikMode {
    #[default]
    Full,
    UpToConstant,
}

/// Law of `X | A X = b, Y = y` in the constraint basis.
#[derive(Debug, Clone)]
pub struct PosteriorGmrf<'m, 'a> {
    model: &'m TransformedModel<'a>,
    q_hat: SparseMat,
    factor: PseudoFactor,
    b_star: Vec<f64>,
    mu_tilde_u: Vec<f64>,
    mu_hat_u: Vec<f64>,
    mu_hat: Vec<f64>,
    y_star: Vec<f64>,
    r_b: usize,
    m: usize,
    sigma2: f64,
}

impl<'m, 'a> PosteriorGmrf<'m, 'a> {
    pub fn new(model: &'m TransformedModel<'a>, b: &[f64], so: &SoftObservations, policy: &NumericPolicy) -> Result<Self> {
        let basis = model.basis();
        let (n, k) = (basis.n(), basis.k());
        check_len("observation columns", n, so.b().ncols())?;
        let (b_star, mu_tilde_u) = model.conditional_parts(b)?;

        let b_t = so.b().matmul(&basis.t().transpose())?;
        let b_c = b_t.slice(0..so.m(), 0..k);
        let b_u = b_t.slice(0..so.m(), k..n);
        let bcb = b_c.mul_vec(&b_star)?;
        let y_star: Vec<f64> = so.y().iter().zip(&bcb).map(|(u, v)| u - v).collect();

        let inv_s2 = 1.0 / so.sigma2();
        let q_hat = SparseMat::lincomb(&[(1.0, model.q_uu()), (inv_s2, &b_u.transpose().matmul(&b_u)?)])?.symmetrized()?;

        let e_uu = model.uu_nullspace();
        let (r_b, hat_null) = if e_uu.is_empty() {
            (0, NullSpaceBasis::empty(n - k))
        } else {
            let be = b_u.mul_dense(e_uu.matrix())?;
            let scale = b_u.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            let r_b = numerical_rank(&be, policy.rank_tol, scale, policy)?;
            let nb = null_space(&be, policy.rank_tol, scale, policy)?;
            let null = if nb.ncols() == 0 {
                NullSpaceBasis::empty(n - k)
            } else {
                NullSpaceBasis::new(e_uu.matrix() * nb)?
            };
            (r_b, null)
        };
        let factor = PseudoFactor::new(&q_hat, &hat_null, &crate::sparse::FillOrdering::Amd, policy)?;

        let mut rhs = model.q_uu().mul_vec(&mu_tilde_u)?;
        let bty = b_u.tr_mul_vec(&y_star)?;
        for (r, v) in rhs.iter_mut().zip(&bty) {
            *r += inv_s2 * v;
        }
        let mu_hat_u = factor.solve(&rhs)?;
        let mu_hat = basis.back_transform(&b_star, &mu_hat_u)?;
        Ok(Self {
            model,
            q_hat,
            factor,
            b_star,
            mu_tilde_u,
            mu_hat_u,
            mu_hat,
            y_star,
            r_b,
            m: so.m(),
            sigma2: so.sigma2(),
        })
    }

    /// Posterior mean `μ̂`.
    pub fn mean(&self) -> &[f64] {
        &self.mu_hat
    }

    /// `μ̂*_𝒰`.
    pub fn mean_u(&self) -> &[f64] {
        &self.mu_hat_u
    }

    /// `Q̂*_{𝒰𝒰} = Q*_{𝒰𝒰} + σ⁻² B*_𝒰ᵀ B*_𝒰`.
    pub fn q_hat_uu(&self) -> &SparseMat {
        &self.q_hat
    }

    /// `rank(B*_𝒰 E_{Q*_{𝒰𝒰}})`.
    pub fn r_b(&self) -> usize {
        self.r_b
    }

    /// `n − s − (k − k₀) + rank(B*_𝒰 E_{Q*_{𝒰𝒰}})`.
    pub fn rank(&self) -> usize {
        self.model.uu_rank() + self.r_b
    }

    /// Posterior precision `T_𝒰ᵀ Q̂*_{𝒰𝒰} T_𝒰`.
    pub fn precision(&self) -> Result<SparseMat> {
        let t_u = self.model.basis().t_u();
        t_u.transpose().matmul(&self.q_hat)?.matmul(&t_u)?.symmetrized()
    }

    /// Dense `T_𝒰ᵀ (Q̂*_{𝒰𝒰})† T_𝒰`.
    pub fn covariance_dense(&self) -> Result<DMatrix<f64>> {
        let t_u = self.model.basis().t_u().to_dense();
        let m = t_u.nrows();
        let mut inv = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            inv.column_mut(j).copy_from_slice(&self.factor.solve(&e)?);
        }
        Ok(t_u.transpose() * inv * t_u)
    }

    /// `ln π_{Y|AX}(y | b)`.
    pub fn loglik(&self, mode: LoglikMode) -> Result<f64> {
        let quad_tilde = self.model.q_uu().quad_form(&self.mu_tilde_u)?;
        let quad_hat = self.q_hat.quad_form(&self.mu_hat_u)?;
        let yy = dot(&self.y_star, &self.y_star) / self.sigma2;
        let mut ll = -0.5 * self.m as f64 * self.sigma2.ln()
            + 0.5 * self.model.uu_factor().log_pseudo_det()
            - 0.5 * self.factor.log_pseudo_det()
            - 0.5 * (yy + quad_tilde - quad_hat);
        if mode == LoglikMode::Full {
            ll -= 0.5 * (self.m - self.r_b) as f64 * (2.0 * PI).ln();
        }
        Ok(ll)
    }

    /// One posterior draw `Tᵀ [b*; μ̂*_𝒰 + R̂⁻¹ z]`, `z` of length `n − k`.
    pub fn sample(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("noise length", self.mu_hat_u.len(), z.len())?;
        let w = self.factor.sample_whitened(z)?;
        let x_u: Vec<f64> = self.mu_hat_u.iter().zip(&w).map(|(a, b)| a + b).collect();
        self.model.basis().back_transform(&self.b_star, &x_u)
    }
}

/// Posterior mean of `X | A X = b, Y = y`.
pub fn posterior_mean(g: &Gmrf, cb: &ConstraintBasis, b: &[f64], so: &SoftObservations, policy: &NumericPolicy) -> Result<Vec<f64>> {
    let model = TransformedModel::new(g, cb, policy)?;
    Ok(PosteriorGmrf::new(&model, b, so, policy)?.mean().to_vec())
}

/// `ln π_{Y|AX}(y | b)`.
pub fn loglik_soft(
    g: &Gmrf,
    cb: &ConstraintBasis,
    b: &[f64],
    so: &SoftObservations,
    mode: LoglikMode,
    policy: &NumericPolicy,
) -> Result<f64> {
    let model = TransformedModel::new(g, cb, policy)?;
    PosteriorGmrf::new(&model, b, so, policy)?.loglik(mode)
}

/// One posterior draw.
pub fn sample_posterior(
    g: &Gmrf,
    cb: &ConstraintBasis,
    b: &[f64],
    so: &SoftObservations,
    z: &[f64],
    policy: &NumericPolicy,
) -> Result<Vec<f64>> {
    let model = TransformedModel::new(g, cb, policy)?;
    PosteriorGmrf::new(&model, b, so, policy)?.sample(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::build_basis_svd;
    use approx::assert_abs_diff_eq;

    fn p() -> NumericPolicy {
        NumericPolicy::default()
    }

    #[test]
    fn univariate_convolution() {
        let g = Gmrf::centered(SparseMat::identity(1)).unwrap();
        let cb = build_basis_svd(&SparseMat::zeros(0, 1), &p()).unwrap();
        let so = SoftObservations::new(SparseMat::identity(1), vec![0.0], 1.0).unwrap();
        let ll = loglik_soft(&g, &cb, &[], &so, LoglikMode::Full, &p()).unwrap();
        assert_abs_diff_eq!(ll, -0.5 * (4.0 * PI).ln(), epsilon = 1e-14);
    }

    #[test]
    fn no_constraints_matches_bayes_update() {
        let q = SparseMat::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        let mu = vec![1.0, -1.0];
        let g = Gmrf::natural(q.clone(), mu.clone()).unwrap();
        let cb = build_basis_svd(&SparseMat::zeros(0, 2), &p()).unwrap();
        let y = vec![0.3, 0.9];
        let so = SoftObservations::new(SparseMat::identity(2), y.clone(), 0.5).unwrap();
        let got = posterior_mean(&g, &cb, &[], &so, &p()).unwrap();
        let qd = q.to_dense() + DMatrix::identity(2, 2) * 2.0;
        let rhs = q.to_dense() * nalgebra::DVector::from_vec(mu) + nalgebra::DVector::from_vec(y) * 2.0;
        let want = qd.cholesky().unwrap().solve(&rhs);
        assert_abs_diff_eq!(got[0], want[0], epsilon = 1e-14);
        assert_abs_diff_eq!(got[1], want[1], epsilon = 1e-14);
    }

    #[test]
    fn location_invariance() {
        let g = Gmrf::natural(SparseMat::from_diag(&[1.0, 2.0, 3.0]), vec![0.0; 3]).unwrap();
        let a = SparseMat::from_triplets(1, 3, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let cb = build_basis_svd(&a, &p()).unwrap();
        let bm = SparseMat::from_triplets(2, 3, &[(0, 1, 1.0), (1, 2, 0.5), (1, 0, 0.5)]).unwrap();
        let so = SoftObservations::new(bm.clone(), vec![0.2, -0.4], 0.3).unwrap();
        let base = loglik_soft(&g, &cb, &[0.0], &so, LoglikMode::Full, &p()).unwrap();
        // shift μ by δ with Aδ = 0 and y by Bδ
        let delta = [1.0, -1.0, 2.0];
        let g2 = Gmrf::natural(SparseMat::from_diag(&[1.0, 2.0, 3.0]), delta.to_vec()).unwrap();
        let bd = bm.mul_vec(&delta).unwrap();
        let so2 = SoftObservations::new(bm, vec![0.2 + bd[0], -0.4 + bd[1]], 0.3).unwrap();
        let shifted = loglik_soft(&g2, &cb, &[0.0], &so2, LoglikMode::Full, &p()).unwrap();
        assert_abs_diff_eq!(base, shifted, epsilon = 1e-13);
    }

    #[test]
    fn samples_hit_constraints() {
        let g = Gmrf::natural(SparseMat::from_diag(&[1.0, 2.0, 3.0, 4.0]), vec![0.5; 4]).unwrap();
        let a = SparseMat::from_triplets(1, 4, &[(0, 0, 1.0), (0, 1, 1.0), (0, 3, -2.0)]).unwrap();
        let cb = build_basis_svd(&a, &p()).unwrap();
        let so = SoftObservations::new(SparseMat::from_triplets(1, 4, &[(0, 2, 1.0)]).unwrap(), vec![1.0], 0.1).unwrap();
        let model = TransformedModel::new(&g, &cb, &p()).unwrap();
        let post = PosteriorGmrf::new(&model, &[3.0], &so, &p()).unwrap();
        assert_eq!(post.sample(&[0.0; 3]).unwrap(), post.mean().to_vec());
        let x = post.sample(&[0.3, -1.2, 2.0]).unwrap();
        assert_abs_diff_eq!(a.mul_vec(&x).unwrap()[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_noise() {
        assert!(SoftObservations::new(SparseMat::identity(1), vec![0.0], 0.0).is_err());
        assert!(SoftObservations::new(SparseMat::identity(1), vec![0.0, 1.0], 1.0).is_err());
    }
}
