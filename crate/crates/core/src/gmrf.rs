//! Gaussian Markov random fields in natural or canonical parametrization.

use crate::error::{check_len, Error, Result};
use crate::nullspace::{NullSpaceBasis, PseudoFactor};
use crate::policy::NumericPolicy;
use crate::rng::standard_normals;
use crate::sparse::{dot, FillOrdering, SparseMat};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which mean vector was supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parametrization {
    Natural,
    Canonical,
}

#[derive(Debug, Clone)]
pub struct Gmrf {
    q: SparseMat,
    mu: Option<Vec<f64>>,
    mu_c: Option<Vec<f64>>,
    param: Parametrization,
    nullspace: NullSpaceBasis,
    ordering: FillOrdering,
}

fn checked_precision(q: SparseMat) -> Result<SparseMat> {
    if q.nrows() != q.ncols() {
        return Err(Error::DimensionMismatch {
            context: "precision must be square",
            expected: q.nrows(),
            found: q.ncols(),
        });
    }
    if q.is_symmetric() {
        return Ok(q);
    }
    let asym = q.asymmetry();
    if asym > 1e-10 {
        return Err(Error::InvalidInput(format!("precision is not symmetric (relative asymmetry {asym:e})")));
    }
    q.symmetrized()
}

impl Gmrf {
    /// `N(mu, Q⁻¹)`.
    pub fn natural(q: SparseMat, mu: Vec<f64>) -> Result<Self> {
        let q = checked_precision(q)?;
        check_len("mean length", q.nrows(), mu.len())?;
        let n = q.nrows();
        Ok(Self {
            q,
            mu: Some(mu),
            mu_c: None,
            param: Parametrization::Natural,
            nullspace: NullSpaceBasis::empty(n),
            ordering: FillOrdering::Amd,
        })
    }

    /// Density proportional to `exp(−½ xᵀQx + mu_cᵀx)`.
    pub fn canonical(q: SparseMat, mu_c: Vec<f64>) -> Result<Self> {
        let q = checked_precision(q)?;
        check_len("canonical mean length", q.nrows(), mu_c.len())?;
        let n = q.nrows();
        Ok(Self {
            q,
            mu: None,
            mu_c: Some(mu_c),
            param: Parametrization::Canonical,
            nullspace: NullSpaceBasis::empty(n),
            ordering: FillOrdering::Amd,
        })
    }

    /// Zero-mean field.
    pub fn centered(q: SparseMat) -> Result<Self> {
        let n = q.nrows();
        Self::natural(q, vec![0.0; n])
    }

    /// Declares `span(E)` as the kernel of `Q`, making the field intrinsic.
    pub fn with_nullspace(mut self, e: NullSpaceBasis) -> Result<Self> {
        e.validate(&self.q, 1e-8)?;
        if let Some(mu_c) = &self.mu_c {
            let dev: f64 = e.matrix().tr_mul(&nalgebra::DVector::from_column_slice(mu_c)).amax();
            let scale = mu_c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if dev > 1e-8 * scale {
                return Err(Error::InvalidInput("canonical mean has a component in ker(Q)".into()));
            }
        }
        self.nullspace = e;
        Ok(self)
    }

    /// Supplies the other mean vector too; both must satisfy `Qμ = μ_C`.
    pub fn with_both_means(mut self, mu: Vec<f64>, mu_c: Vec<f64>) -> Result<Self> {
        check_len("mean length", self.n(), mu.len())?;
        check_len("canonical mean length", self.n(), mu_c.len())?;
        let qmu = self.q.mul_vec(&mu)?;
        let err = qmu.iter().zip(&mu_c).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if err > 1e-8 {
            return Err(Error::InvalidInput(format!("Q mu differs from mu_c by {err:e}")));
        }
        self.mu = Some(mu);
        self.mu_c = Some(mu_c);
        Ok(self)
    }

    pub fn with_ordering(mut self, ordering: FillOrdering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &SparseMat {
        &self.q
    }

    pub fn nullspace(&self) -> &NullSpaceBasis {
        &self.nullspace
    }

    pub fn is_intrinsic(&self) -> bool {
        !self.nullspace.is_empty()
    }

    pub fn parametrization(&self) -> Parametrization {
        self.param
    }

    pub fn ordering(&self) -> &FillOrdering {
        &self.ordering
    }

    /// The stored natural mean, if one was supplied.
    pub fn stored_mean(&self) -> Option<&[f64]> {
        self.mu.as_deref()
    }

    pub fn stored_canonical_mean(&self) -> Option<&[f64]> {
        self.mu_c.as_deref()
    }

    pub fn factor(&self, policy: &NumericPolicy) -> Result<PseudoFactor> {
        PseudoFactor::new(&self.q, &self.nullspace, &self.ordering, policy)
    }

    /// Natural mean; for a canonical-only intrinsic field this is `Q† μ_C`,
    /// the representative orthogonal to `ker(Q)`.
    pub fn natural_mean(&self, policy: &NumericPolicy) -> Result<Vec<f64>> {
        match (&self.mu, &self.mu_c) {
            (Some(mu), _) => Ok(mu.clone()),
            (None, Some(mu_c)) => self.factor(policy)?.solve(mu_c),
            (None, None) => unreachable!("a mean is always present"),
        }
    }

    pub fn canonical_mean(&self) -> Result<Vec<f64>> {
        match (&self.mu, &self.mu_c) {
            (_, Some(mu_c)) => Ok(mu_c.clone()),
            (Some(mu), None) => self.q.mul_vec(mu),
            (None, None) => unreachable!("a mean is always present"),
        }
    }

    /// `μ + R⁻¹ z` with `Q = RᵀR`.
    pub fn sample_with(&self, z: &[f64], policy: &NumericPolicy) -> Result<Vec<f64>> {
        if self.is_intrinsic() {
            return Err(Error::IntrinsicNotSamplable);
        }
        check_len("noise length", self.n(), z.len())?;
        let f = self.factor(policy)?;
        let mu = self.natural_mean(policy)?;
        let w = f.factor().solve_r(z)?;
        Ok(mu.iter().zip(&w).map(|(a, b)| a + b).collect())
    }

    /// Draws `count` samples sharing one factorization.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize, policy: &NumericPolicy) -> Result<Vec<Vec<f64>>> {
        if self.is_intrinsic() {
            return Err(Error::IntrinsicNotSamplable);
        }
        let f = self.factor(policy)?;
        let mu = self.natural_mean(policy)?;
        (0..count)
            .map(|_| {
                let z = standard_normals(rng, self.n());
                let w = f.factor().solve_r(&z)?;
                Ok(mu.iter().zip(&w).map(|(a, b)| a + b).collect())
            })
            .collect()
    }

    /// Log-density; intrinsic fields use `|Q|†` and `(n − s)/2` powers of `2π`.
    pub fn log_density(&self, x: &[f64], policy: &NumericPolicy) -> Result<f64> {
        check_len("point dimension", self.n(), x.len())?;
        let f = self.factor(policy)?;
        let mu = match &self.mu {
            Some(mu) => mu.clone(),
            None => f.solve(self.mu_c.as_ref().expect("canonical mean"))?,
        };
        let d: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let quad = dot(&d, &self.q.mul_vec(&d)?);
        let r = f.rank() as f64;
        Ok(0.5 * f.log_pseudo_det() - 0.5 * r * (2.0 * PI).ln() - 0.5 * quad)
    }
}
