//! Small dense kernels: one-sided Jacobi SVD and a pivoted Householder QR
//! that yields an orthogonal basis adapted to a row space.

use crate::error::{Error, Result};
use crate::policy::NumericPolicy;
use nalgebra::{DMatrix, DVector};

/// Thin SVD `M = U diag(s) Vᵀ` with descending singular values.
#[derive(Debug, Clone)]
pub struct SmallSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

impl SmallSvd {
    /// Number of singular values above `tol * s_max`.
    pub fn rank(&self, tol: f64) -> usize {
        self.rank_scaled(tol, 0.0)
    }

    /// Number of singular values above `tol * max(s_max, scale)`.
    pub fn rank_scaled(&self, tol: f64, scale: f64) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0).max(scale);
        self.s.iter().filter(|&&s| s > tol * smax && s > 0.0).count()
    }
}

/// Rotates column pairs of `a` until they are mutually orthogonal and
/// accumulates the rotations in `v`, so that `a_in · v = a_out`.
fn jacobi_orthogonalize(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, max_sweeps: usize) -> Result<()> {
    let c = a.ncols();
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..c {
            for j in i + 1..c {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for m in [&mut *a, &mut *v] {
                    for r in 0..m.nrows() {
                        let (x, y) = (m[(r, i)], m[(r, j)]);
                        m[(r, i)] = cs * x - sn * y;
                        m[(r, j)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::ConvergenceFailure("Jacobi singular value decomposition"))
}

/// SVD by one-sided Jacobi rotations, with the sign of each right singular
/// vector fixed so that its largest-magnitude entry (first one on ties) is positive.
pub fn svd_small(m: &DMatrix<f64>, policy: &NumericPolicy) -> Result<SmallSvd> {
    if m.nrows() > policy.dense_block_cap {
        return Err(Error::DenseCapExceeded {
            rows: m.nrows(),
            cap: policy.dense_block_cap,
        });
    }
    let (r, c) = m.shape();
    let p = r.min(c);
    let (s, u, vt) = if r >= c {
        let (s, u, v) = jacobi_thin(m.clone(), policy)?;
        (s, u, v.transpose())
    } else {
        let (s, v, u) = jacobi_thin(m.transpose(), policy)?;
        (s, u, v.transpose())
    };
    let mut out = SmallSvd {
        u: DMatrix::zeros(r, p),
        s: Vec::with_capacity(p),
        vt: DMatrix::zeros(p, c),
    };
    for k in 0..p {
        let row = vt.row(k);
        let mut best = 0;
        for j in 1..c {
            if row[j].abs() > row[best].abs() {
                best = j;
            }
        }
        let sign = if row[best] < 0.0 { -1.0 } else { 1.0 };
        out.vt.row_mut(k).copy_from(&(row * sign));
        out.u.column_mut(k).copy_from(&(u.column(k) * sign));
        out.s.push(s[k]);
    }
    Ok(out)
}

/// Thin SVD of a tall matrix: `(s, U, V)` with `U` of shape `r × c`, `V` `c × c`.
fn jacobi_thin(mut a: DMatrix<f64>, policy: &NumericPolicy) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let c = a.ncols();
    let mut v = DMatrix::identity(c, c);
    jacobi_orthogonalize(&mut a, &mut v, policy.svd_max_iter.clamp(1, 200))?;
    let norms: Vec<f64> = (0..c).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let mut u = DMatrix::zeros(a.nrows(), c);
    let mut vs = DMatrix::zeros(c, c);
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > 0.0 {
            u.column_mut(k).copy_from(&(a.column(j) / norms[j]));
        }
        vs.column_mut(k).copy_from(&v.column(j));
    }
    Ok((order.iter().map(|&j| norms[j]).collect(), u, vs))
}

/// Orthogonal basis adapted to the row space of a full-row-rank `W` (`r × d`),
/// from a Householder QR with column pivoting of `Wᵀ`.
///
/// `W[perm[j], :] = Σ_i R[i, j] · V[i, :]` where the first `r` rows of `V`
/// span the row space of `W` and the remaining rows its orthogonal complement.
#[derive(Debug, Clone)]
pub struct RowSpaceQr {
    /// `d × d` orthogonal matrix.
    pub v: DMatrix<f64>,
    /// `r × r` upper triangular factor with non-increasing `|R_ii|`.
    pub r: DMatrix<f64>,
    pub perm: Vec<usize>,
}

impl RowSpaceQr {
    /// `(min |R_ii|, max |R_ii|)`.
    pub fn diag_extremes(&self) -> (f64, f64) {
        let d = self.r.diagonal();
        (d.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())), d.iter().fold(0.0, |m, v| m.max(v.abs())))
    }

    /// `ln |W Wᵀ| = 2 Σ ln |R_ii|`.
    pub fn log_det_gram(&self) -> f64 {
        2.0 * self.r.diagonal().iter().map(|v| v.abs().ln()).sum::<f64>()
    }

    /// Solves `W Vᵀ_{1:r} x = b`, i.e. `Rᵀ x = b[perm]`.
    pub fn solve_h(&self, b: &[f64]) -> DVector<f64> {
        let r = self.r.nrows();
        let mut x = DVector::from_iterator(r, self.perm.iter().map(|&p| b[p]));
        for j in 0..r {
            let mut acc = x[j];
            for i in 0..j {
                acc -= self.r[(i, j)] * x[i];
            }
            x[j] = acc / self.r[(j, j)];
        }
        x
    }

    /// `H = W Vᵀ_{1:r}` in the original row order.
    pub fn h(&self) -> DMatrix<f64> {
        let r = self.r.nrows();
        let mut h = DMatrix::zeros(r, r);
        for (j, &p) in self.perm.iter().enumerate() {
            for i in 0..=j {
                h[(p, i)] = self.r[(i, j)];
            }
        }
        h
    }
}

pub fn row_space_qr(w: &DMatrix<f64>, policy: &NumericPolicy) -> Result<RowSpaceQr> {
    let (r, d) = w.shape();
    if r > policy.dense_block_cap {
        return Err(Error::DenseCapExceeded {
            rows: r,
            cap: policy.dense_block_cap,
        });
    }
    if r > d {
        return Err(Error::InvalidInput(format!("{r} rows cannot be independent in {d} columns")));
    }
    let mut a = w.transpose();
    let mut perm: Vec<usize> = (0..r).collect();
    let mut norms: Vec<f64> = (0..r).map(|j| a.column(j).norm_squared()).collect();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(r);
    for j in 0..r {
        // pivot: remaining column with the largest norm below row j
        let p = (j..r).max_by(|&x, &y| norms[x].total_cmp(&norms[y])).unwrap_or(j);
        if p != j {
            a.swap_columns(j, p);
            perm.swap(j, p);
            norms.swap(j, p);
        }
        let x = a.view((j, j), (d - j, 1)).column(0).clone_owned();
        let norm = x.norm();
        let mut v = x;
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vn = v.norm();
        if vn > 0.0 {
            v /= vn;
            let mut sub = a.view_mut((j, j), (d - j, r - j));
            let t = v.transpose() * &sub;
            sub.ger(-2.0, &v, &t.transpose(), 1.0);
        }
        for (l, nl) in norms.iter_mut().enumerate().skip(j + 1) {
            // downdate, recomputing when cancellation sets in
            *nl -= a[(j, l)] * a[(j, l)];
            if *nl < 1e-6 * a.view((j + 1, l), (d - j - 1, 1)).norm_squared().max(f64::MIN_POSITIVE) || *nl < 0.0 {
                *nl = a.view((j + 1, l), (d - j - 1, 1)).norm_squared();
            }
        }
        reflectors.push(v);
    }
    let rmat = a.view((0, 0), (r, r)).upper_triangle();
    // V = Qᵀ with Q = H_0 ⋯ H_{r−1}; build Q from the identity, touching only the trailing block
    let mut q = DMatrix::identity(d, d);
    for (j, v) in reflectors.iter().enumerate().rev() {
        if v.norm_squared() == 0.0 {
            continue;
        }
        let mut sub = q.view_mut((j, j), (d - j, d - j));
        let t = v.transpose() * &sub;
        sub.ger(-2.0, v, &t.transpose(), 1.0);
    }
    let mut v = q.transpose();
    let mut rmat = rmat;
    // signs: positive R diagonal, complement rows with a positive largest entry
    for i in 0..d {
        let flip = if i < r {
            rmat[(i, i)] < 0.0
        } else {
            let row = v.row(i);
            let best = (0..d).fold(0, |b, j| if row[j].abs() > row[b].abs() { j } else { b });
            row[best] < 0.0
        };
        if flip {
            v.row_mut(i).neg_mut();
            if i < r {
                rmat.row_mut(i).neg_mut();
            }
        }
    }
    Ok(RowSpaceQr { v, r: rmat, perm })
}

fn relaxed(policy: &NumericPolicy) -> NumericPolicy {
    NumericPolicy {
        dense_block_cap: usize::MAX,
        ..*policy
    }
}

/// Numerical rank: singular values above `tol * max(s_max, scale)`.
///
/// A nonzero `scale` keeps a matrix made only of rounding noise at rank zero.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64, scale: f64, policy: &NumericPolicy) -> Result<usize> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    Ok(svd_small(m, &relaxed(policy))?.rank_scaled(tol, scale))
}

/// Orthonormal basis (as columns) of the numerical null space of `m`, with
/// the rank threshold of [`numerical_rank`].
pub fn null_space(m: &DMatrix<f64>, tol: f64, scale: f64, policy: &NumericPolicy) -> Result<DMatrix<f64>> {
    let c = m.ncols();
    if m.nrows() == 0 || c == 0 {
        return Ok(DMatrix::identity(c, c));
    }
    // Jacobi on the columns of m gives all c right vectors, whatever the shape
    let mut a = m.clone();
    let mut v = DMatrix::identity(c, c);
    jacobi_orthogonalize(&mut a, &mut v, relaxed(policy).svd_max_iter.clamp(1, 200))?;
    let norms: Vec<f64> = (0..c).map(|j| a.column(j).norm()).collect();
    let smax = norms.iter().fold(0.0f64, |x, &y| x.max(y)).max(scale);
    let null: Vec<usize> = (0..c).filter(|&j| !(norms[j] > tol * smax && norms[j] > 0.0)).collect();
    Ok(DMatrix::from_fn(c, null.len(), |i, k| v[(i, null[k])]))
}
