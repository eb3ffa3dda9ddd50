//! Null-space-aware solves and pseudo-determinants for semi-definite precisions.
//!
//! A rank-deficient `Q` with known kernel `span(E)` is made definite by
//! pinning `s` coordinates: `M = Q + τ Σ_p e_p e_pᵀ`, where the pinned rows
//! of `E` form a nonsingular `s × s` block `W`. Then
//!
//! * `Q† v = (I − EEᵀ) M⁻¹ (I − EEᵀ) v`,
//! * `ln |Q|† = ln |M| − s ln τ − 2 ln |det W|`,
//! * `(I − EEᵀ) R_M⁻¹ z` has covariance `Q†`.
//!
//! Unlike a rank-`s` update with `EEᵀ` the pinned system keeps the sparsity of `Q`.

use crate::error::{check_len, Error, Result};
use crate::policy::NumericPolicy;
use crate::sparse::{cholesky, CholFactor, FillOrdering, SparseMat};
use nalgebra::{DMatrix, DVector};

/// Column-orthonormal basis of `ker(Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpaceBasis {
    e: DMatrix<f64>,
}

impl NullSpaceBasis {
    /// Orthonormalizes the columns of `e`; fails if they are linearly dependent.
    pub fn new(e: DMatrix<f64>) -> Result<Self> {
        let (n, s) = e.shape();
        if s == 0 {
            return Ok(Self::empty(n));
        }
        if s > n {
            return Err(Error::InvalidInput(format!("{s} null vectors in dimension {n}")));
        }
        let qr = e.qr();
        let r = qr.r();
        let rmax = r.diagonal().amax();
        if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * rmax) || rmax == 0.0 {
            return Err(Error::InvalidInput("null-space columns are linearly dependent".into()));
        }
        Ok(Self { e: qr.q() })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            e: DMatrix::zeros(n, 0),
        }
    }

    /// The constant vector, the kernel of first-order random walks and FEM stiffness.
    pub fn constant(n: usize) -> Self {
        Self {
            e: DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt()),
        }
    }

    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    /// Rank deficiency `s`.
    pub fn s(&self) -> usize {
        self.e.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.e.ncols() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.e
    }

    /// `(I − EEᵀ) v`.
    pub fn project_out(&self, v: &[f64]) -> Vec<f64> {
        if self.is_empty() {
            return v.to_vec();
        }
        let dv = DVector::from_column_slice(v);
        let c = self.e.tr_mul(&dv);
        (dv - &self.e * c).iter().copied().collect()
    }

    /// Checks `‖Q E‖_max ≤ tol · ‖Q‖_max`.
    pub fn validate(&self, q: &SparseMat, tol: f64) -> Result<()> {
        check_len("null-space dimension", q.nrows(), self.n())?;
        if self.is_empty() {
            return Ok(());
        }
        let qe = q.mul_dense(&self.e)?;
        let (lhs, rhs) = (qe.amax(), tol * q.max_abs());
        if lhs > rhs {
            return Err(Error::InvalidInput(format!(
                "supplied null space is not annihilated by Q: |QE| = {lhs:e} > {rhs:e}"
            )));
        }
        Ok(())
    }

    /// Rows on which to pin `M = Q + τ Σ e_p e_pᵀ`, chosen by partial pivoting on `E`.
    fn pivot_rows(&self) -> (Vec<usize>, f64) {
        let (n, s) = self.e.shape();
        let mut work = self.e.clone();
        let mut used = vec![false; n];
        let mut pins = Vec::with_capacity(s);
        let mut log_abs_det = 0.0;
        for j in 0..s {
            let mut p = usize::MAX;
            let mut best = -1.0;
            for i in 0..n {
                if !used[i] && work[(i, j)].abs() > best {
                    best = work[(i, j)].abs();
                    p = i;
                }
            }
            used[p] = true;
            pins.push(p);
            let piv = work[(p, j)];
            log_abs_det += piv.abs().ln();
            for l in j + 1..s {
                let f = work[(p, l)] / piv;
                if f != 0.0 {
                    for i in 0..n {
                        work[(i, l)] -= f * work[(i, j)];
                    }
                }
            }
        }
        (pins, log_abs_det)
    }
}

/// Factorization supporting `Q†`, `ln |Q|†` and draws with covariance `Q†`.
#[derive(Debug, Clone)]
pub struct PseudoFactor {
    chol: CholFactor,
    nullspace: NullSpaceBasis,
    log_pdet: f64,
}

impl PseudoFactor {
    pub fn new(q: &SparseMat, nullspace: &NullSpaceBasis, ordering: &FillOrdering, policy: &NumericPolicy) -> Result<Self> {
        check_len("pseudo factor dimension", q.nrows(), nullspace.n())?;
        if nullspace.is_empty() {
            let chol = cholesky(q, ordering, policy)?;
            let log_pdet = chol.logdet();
            return Ok(Self {
                chol,
                nullspace: nullspace.clone(),
                log_pdet,
            });
        }
        let n = q.nrows();
        let s = nullspace.s();
        let mean_diag = if n > 0 { q.diag().iter().sum::<f64>() / n as f64 } else { 0.0 };
        let tau = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let (pins, log_abs_det_w) = nullspace.pivot_rows();
        let m = q.add_to_diagonal(&pins, tau);
        let chol = cholesky(&m, ordering, policy)?;
        let log_pdet = chol.logdet() - s as f64 * tau.ln() - 2.0 * log_abs_det_w;
        Ok(Self {
            chol,
            nullspace: nullspace.clone(),
            log_pdet,
        })
    }

    pub fn n(&self) -> usize {
        self.chol.n()
    }

    /// Rank of `Q`.
    pub fn rank(&self) -> usize {
        self.n() - self.nullspace.s()
    }

    pub fn nullspace(&self) -> &NullSpaceBasis {
        &self.nullspace
    }

    pub fn is_proper(&self) -> bool {
        self.nullspace.is_empty()
    }

    /// `ln |Q|†`.
    pub fn log_pseudo_det(&self) -> f64 {
        self.log_pdet
    }

    pub fn factor(&self) -> &CholFactor {
        &self.chol
    }

    /// `Q† v`.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("pseudo solve", self.n(), v.len())?;
        if self.is_proper() {
            return self.chol.solve(v);
        }
        let w = self.nullspace.project_out(v);
        let x = self.chol.solve(&w)?;
        Ok(self.nullspace.project_out(&x))
    }

    /// Maps white noise `z` to a draw with covariance `Q†`.
    pub fn sample_whitened(&self, z: &[f64]) -> Result<Vec<f64>> {
        let x = self.chol.solve_r(z)?;
        Ok(self.nullspace.project_out(&x))
    }
}

/// `Q† v` for a one-off solve.
pub fn pseudo_solve(q: &SparseMat, e: &NullSpaceBasis, v: &[f64], policy: &NumericPolicy) -> Result<Vec<f64>> {
    PseudoFactor::new(q, e, &FillOrdering::Amd, policy)?.solve(v)
}

/// `ln |Q|†`, the sum of the logs of the positive eigenvalues.
pub fn log_pseudo_det(q: &SparseMat, e: &NullSpaceBasis, policy: &NumericPolicy) -> Result<f64> {
    Ok(PseudoFactor::new(q, e, &FillOrdering::Amd, policy)?.log_pseudo_det())
}
