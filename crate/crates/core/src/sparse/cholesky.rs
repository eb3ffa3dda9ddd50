//! Up-looking sparse Cholesky with a fill-reducing symmetric permutation.
//!
//! For a permutation `perm` (new position → original index) the factor
//! satisfies `Q[perm, perm] = L Lᵀ`. Writing `P` for the matching row
//! selection, `R = Lᵀ P` is the upper factor with `Q = Rᵀ R`.

use super::{SparseMat, TripletBuilder};
use crate::error::{check_len, Error, Result};
use crate::policy::NumericPolicy;
use nalgebra::DMatrix;
use std::time::Instant;

/// Choice of fill-reducing ordering.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum FillOrdering {
    Natural,
    #[default]
    Amd,
    /// Explicit permutation, `perm[new] = old`.
    Given(Vec<usize>),
}

/// Which triangular factor to solve with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriSide {
    /// Solve `R x = v`.
    R,
    /// Solve `Rᵀ x = v`.
    Rt,
}

#[derive(Debug, Clone)]
pub struct CholFactor {
    l: SparseMat,
    perm: Vec<usize>,
    logdet: f64,
    seconds: f64,
}

impl CholFactor {
    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// `ln det Q`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Lower factor of the permuted matrix.
    pub fn l(&self) -> &SparseMat {
        &self.l
    }

    /// Upper factor `Lᵀ` of the permuted matrix; the permutation is kept separately.
    pub fn r(&self) -> SparseMat {
        self.l.transpose()
    }

    /// Wall time spent in symbolic plus numeric factorization.
    pub fn factor_seconds(&self) -> f64 {
        self.seconds
    }

    pub fn nnz(&self) -> usize {
        self.l.nnz()
    }

    /// `x` with `R x = v`. This maps white noise to a draw with precision `Q`.
    pub fn solve_r(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("triangular solve", self.n(), v.len())?;
        let mut y = v.to_vec();
        self.lt_solve_in_place(&mut y);
        let mut x = vec![0.0; y.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        Ok(x)
    }

    /// `x` with `Rᵀ x = v`.
    pub fn solve_rt(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("triangular solve", self.n(), v.len())?;
        let mut w: Vec<f64> = self.perm.iter().map(|&p| v[p]).collect();
        self.l_solve_in_place(&mut w);
        Ok(w)
    }

    /// `Q⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("cholesky solve", self.n(), v.len())?;
        let mut w: Vec<f64> = self.perm.iter().map(|&p| v[p]).collect();
        self.l_solve_in_place(&mut w);
        self.lt_solve_in_place(&mut w);
        let mut x = vec![0.0; w.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = w[i];
        }
        Ok(x)
    }

    /// `Q⁻¹ V` column by column.
    pub fn solve_dense(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len("cholesky solve", self.n(), v.nrows())?;
        let mut out = DMatrix::zeros(v.nrows(), v.ncols());
        for c in 0..v.ncols() {
            let col: Vec<f64> = v.column(c).iter().copied().collect();
            let x = self.solve(&col)?;
            out.column_mut(c).copy_from_slice(&x);
        }
        Ok(out)
    }

    fn l_solve_in_place(&self, x: &mut [f64]) {
        let (cp, ri, vals) = (self.l.colptr(), self.l.rowidx(), self.l.values());
        for j in 0..x.len() {
            let xj = x[j] / vals[cp[j]];
            x[j] = xj;
            if xj != 0.0 {
                for p in cp[j] + 1..cp[j + 1] {
                    x[ri[p]] -= vals[p] * xj;
                }
            }
        }
    }

    fn lt_solve_in_place(&self, x: &mut [f64]) {
        let (cp, ri, vals) = (self.l.colptr(), self.l.rowidx(), self.l.values());
        for j in (0..x.len()).rev() {
            let mut s = x[j];
            for p in cp[j] + 1..cp[j + 1] {
                s -= vals[p] * x[ri[p]];
            }
            x[j] = s / vals[cp[j]];
        }
    }
}

/// Solves with one triangular factor; see [`TriSide`].
pub fn tri_solve(f: &CholFactor, v: &[f64], side: TriSide) -> Result<Vec<f64>> {
    match side {
        TriSide::R => f.solve_r(v),
        TriSide::Rt => f.solve_rt(v),
    }
}

fn fill_permutation(q: &SparseMat, ordering: &FillOrdering) -> Result<Vec<usize>> {
    let n = q.nrows();
    match ordering {
        FillOrdering::Natural => Ok((0..n).collect()),
        FillOrdering::Given(p) => {
            check_len("permutation length", n, p.len())?;
            let mut seen = vec![false; n];
            for &i in p {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidInput("ordering is not a permutation".into()));
                }
            }
            Ok(p.clone())
        }
        FillOrdering::Amd => {
            if n == 0 {
                return Ok(Vec::new());
            }
            let (p, _, _) = amd::order::<usize>(n, q.colptr(), q.rowidx(), &amd::Control::default())
                .map_err(|s| Error::InvalidInput(format!("amd ordering failed: {s:?}")))?;
            Ok(p)
        }
    }
}

/// Factorizes a symmetric positive definite `q`. Only the upper triangle is read.
pub fn cholesky(q: &SparseMat, ordering: &FillOrdering, policy: &NumericPolicy) -> Result<CholFactor> {
    let start = Instant::now();
    let n = q.nrows();
    check_len("cholesky square", n, q.ncols())?;
    let perm = fill_permutation(q, ordering)?;
    let mut pinv = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        pinv[old] = new;
    }

    // upper triangle of the permuted matrix
    let mut b = TripletBuilder::with_capacity(n, n, q.nnz() / 2 + n);
    let mut max_diag: f64 = 0.0;
    for j in 0..n {
        for (i, v) in q.col(j) {
            if i <= j {
                let (a, c) = (pinv[i], pinv[j]);
                b.push(a.min(c), a.max(c), v);
            }
            if i == j {
                max_diag = max_diag.max(v.abs());
            }
        }
    }
    let c = b.build();
    let (cp, ci, cx) = (c.colptr(), c.rowidx(), c.values());

    // elimination tree
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        for &r in &ci[cp[k]..cp[k + 1]] {
            let mut i = r;
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }

    let mut stack = vec![0usize; n];
    let mut mark = vec![usize::MAX; n];
    let ereach = |k: usize, stack: &mut [usize], mark: &mut [usize]| -> usize {
        let mut top = n;
        mark[k] = k;
        for &r in &ci[cp[k]..cp[k + 1]] {
            if r > k {
                continue;
            }
            let mut i = r;
            let mut len = 0;
            while mark[i] != k {
                stack[len] = i;
                len += 1;
                mark[i] = k;
                i = parent[i];
            }
            while len > 0 {
                top -= 1;
                len -= 1;
                stack[top] = stack[len];
            }
        }
        top
    };

    // column counts
    let mut counts = vec![1usize; n];
    for k in 0..n {
        let top = ereach(k, &mut stack, &mut mark);
        for &j in &stack[top..n] {
            counts[j] += 1;
        }
    }
    let mut lp = vec![0usize; n + 1];
    for j in 0..n {
        lp[j + 1] = lp[j] + counts[j];
    }
    let nnz = lp[n];
    let mut li = vec![0usize; nnz];
    let mut lx = vec![0.0; nnz];
    let mut next: Vec<usize> = lp[..n].to_vec();
    let mut x = vec![0.0; n];
    mark.iter_mut().for_each(|m| *m = usize::MAX);

    let tol = policy.pivot_tol * max_diag;
    for k in 0..n {
        let top = ereach(k, &mut stack, &mut mark);
        x[k] = 0.0;
        for p in cp[k]..cp[k + 1] {
            if ci[p] <= k {
                x[ci[p]] = cx[p];
            }
        }
        let mut d = x[k];
        x[k] = 0.0;
        for &i in &stack[top..n] {
            let lki = x[i] / lx[lp[i]];
            x[i] = 0.0;
            for p in lp[i] + 1..next[i] {
                x[li[p]] -= lx[p] * lki;
            }
            d -= lki * lki;
            let p = next[i];
            next[i] += 1;
            li[p] = k;
            lx[p] = lki;
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite {
                column: perm[k],
                pivot: d,
            });
        }
        let p = next[k];
        next[k] += 1;
        li[p] = k;
        lx[p] = d.sqrt();
    }

    let logdet = 2.0 * (0..n).map(|j| lx[lp[j]].ln()).sum::<f64>();
    let l = SparseMat::from_csc(n, n, lp, li, lx)?;
    Ok(CholFactor {
        l,
        perm,
        logdet,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn policy() -> NumericPolicy {
        NumericPolicy::default()
    }

    fn tridiag() -> SparseMat {
        SparseMat::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap()
    }

    #[test]
    fn diagonal_factor() {
        let q = SparseMat::from_diag(&[4.0, 9.0]);
        let f = cholesky(&q, &FillOrdering::Natural, &policy()).unwrap();
        assert_eq!(f.r().to_dense(), DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert_abs_diff_eq!(f.logdet(), 36f64.ln(), epsilon = 1e-15);
        assert_eq!(tri_solve(&f, &[2.0, 3.0], TriSide::R).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn identity_factor() {
        let q = SparseMat::identity(4);
        let f = cholesky(&q, &FillOrdering::Amd, &policy()).unwrap();
        assert_eq!(f.logdet(), 0.0);
        let v = [0.3, -1.0, 2.0, 5.0];
        assert_eq!(f.solve_r(&v).unwrap(), v.to_vec());
        assert_eq!(f.solve_rt(&v).unwrap(), v.to_vec());
    }

    #[test]
    fn two_by_two_inverse() {
        let f = cholesky(&tridiag(), &FillOrdering::Amd, &policy()).unwrap();
        assert_abs_diff_eq!(f.logdet(), 3f64.ln(), epsilon = 1e-14);
        let x = f.solve(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(x[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_singular() {
        let q = SparseMat::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(
            cholesky(&q, &FillOrdering::Natural, &policy()),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn given_ordering_reconstructs() {
        let q = SparseMat::from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (0, 2, 1.0), (2, 0, 1.0), (1, 1, 3.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 5.0)],
        )
        .unwrap();
        let f = cholesky(&q, &FillOrdering::Given(vec![2, 0, 1]), &policy()).unwrap();
        // Q = Rᵀ R with R = Lᵀ P
        let mut p = DMatrix::zeros(3, 3);
        for (i, &o) in f.perm().iter().enumerate() {
            p[(i, o)] = 1.0;
        }
        let r = f.r().to_dense() * p;
        assert_abs_diff_eq!(r.transpose() * r, q.to_dense(), epsilon = 1e-14);
        assert!(cholesky(&q, &FillOrdering::Given(vec![0, 0, 1]), &policy()).is_err());
    }
}
