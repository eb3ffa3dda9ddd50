use super::blocks::{find_blocks, Block};
use crate::dense::row_space_qr;
use crate::error::{check_len, Error, Result};
use crate::gmrf::Gmrf;
use crate::nullspace::NullSpaceBasis;
use crate::policy::NumericPolicy;
use crate::sparse::{SparseMat, TripletBuilder};
use nalgebra::DMatrix;
use std::ops::Range;

/// Linear equality constraints `A x = b`.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    a: SparseMat,
    b: Vec<f64>,
}

impl ConstraintSet {
    pub fn new(a: SparseMat, b: Vec<f64>) -> Result<Self> {
        check_len("constraint right-hand side", a.nrows(), b.len())?;
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &SparseMat {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// `‖A x − b‖_∞`.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        let ax = self.a.mul_vec(x)?;
        Ok(ax.iter().zip(&self.b).fold(0.0, |m, (u, v)| m.max((u - v).abs())))
    }

    pub fn with_rhs(&self, b: Vec<f64>) -> Result<Self> {
        Self::new(self.a.clone(), b)
    }
}

/// One dense piece of the basis: an orthogonal `d × d` matrix acting on the
/// columns `cols`, whose first `r` rows span the row space of `A[rows, cols]`.
///
/// `A[rows[perm[j]], cols] = Σ_i R[i, j] · v[i, :]`.
#[derive(Debug, Clone)]
pub struct BasisBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub c_pos: Range<usize>,
    pub u_pos: Range<usize>,
    pub v: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub perm: Vec<usize>,
}

impl BasisBlock {
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Position in the transformed vector of row `l` of `v`.
    pub fn position(&self, l: usize) -> usize {
        let r = self.rank();
        if l < r {
            self.c_pos.start + l
        } else {
            self.u_pos.start + (l - r)
        }
    }
}

/// Orthonormal change of basis `T` whose first `k` rows span the row space of `A`.
#[derive(Debug, Clone)]
pub struct ConstraintBasis {
    n: usize,
    k: usize,
    t: SparseMat,
    blocks: Vec<BasisBlock>,
    /// `(position, column)` for columns outside every block.
    free: Vec<(usize, usize)>,
}

impl ConstraintBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn c_idx(&self) -> Range<usize> {
        0..self.k
    }

    pub fn u_idx(&self) -> Range<usize> {
        self.k..self.n
    }

    pub fn t(&self) -> &SparseMat {
        &self.t
    }

    pub fn blocks(&self) -> &[BasisBlock] {
        &self.blocks
    }

    pub fn free_columns(&self) -> &[(usize, usize)] {
        &self.free
    }

    /// Row and column sets of each dense block.
    pub fn block_sets(&self) -> Vec<Block> {
        self.blocks
            .iter()
            .map(|b| Block {
                rows: b.rows.clone(),
                cols: b.cols.clone(),
            })
            .collect()
    }

    /// Rows `𝒰` of `T`.
    pub fn t_u(&self) -> SparseMat {
        self.t.slice(self.k..self.n, 0..self.n)
    }

    /// `H = (A Tᵀ)_{·𝒞}` as a dense `k × k` matrix.
    pub fn h_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.k, self.k);
        for b in &self.blocks {
            for (j, &p) in b.perm.iter().enumerate() {
                for i in 0..=j {
                    h[(b.rows[p], b.c_pos.start + i)] = b.r[(i, j)];
                }
            }
        }
        h
    }

    /// `b* = H⁻¹ b`, one triangular solve `Rᵀ x = b[perm]` per block.
    pub fn b_star(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("constraint right-hand side", self.k, b.len())?;
        let mut out = vec![0.0; self.k];
        for blk in &self.blocks {
            let r = blk.rank();
            let mut x: Vec<f64> = blk.perm.iter().map(|&p| b[blk.rows[p]]).collect();
            for j in 0..r {
                let mut acc = x[j];
                for i in 0..j {
                    acc -= blk.r[(i, j)] * x[i];
                }
                x[j] = acc / blk.r[(j, j)];
            }
            out[blk.c_pos.clone()].copy_from_slice(&x);
        }
        Ok(out)
    }

    /// `ln |A Aᵀ| = 2 Σ ln |R_ii|` over all blocks.
    pub fn log_det_aat(&self) -> f64 {
        2.0 * self.blocks.iter().flat_map(|b| b.r.diagonal().iter().copied().collect::<Vec<_>>()).map(|v| v.abs().ln()).sum::<f64>()
    }

    /// `Σ r_i³ + r_i² |D_i|`, the dense work of the block factorizations.
    pub fn svd_cost(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let r = b.rank() as f64;
                r.powi(3) + r * r * b.cols.len() as f64
            })
            .sum()
    }

    /// `T x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.t.mul_vec(x)
    }

    /// `Tᵀ y`.
    pub fn apply_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.t.tr_mul_vec(y)
    }

    /// `Tᵀ [x_𝒞; x_𝒰]`.
    pub fn back_transform(&self, x_c: &[f64], x_u: &[f64]) -> Result<Vec<f64>> {
        check_len("constrained part", self.k, x_c.len())?;
        check_len("unconstrained part", self.n - self.k, x_u.len())?;
        let mut y = x_c.to_vec();
        y.extend_from_slice(x_u);
        self.apply_t(&y)
    }

    /// `T Q Tᵀ` using the block structure of `T`: each dense block costs one
    /// dense product instead of a sparse product with dense rows.
    pub fn congruence(&self, q: &SparseMat, drop_tol: f64) -> Result<SparseMat> {
        check_len("congruence rows", self.n, q.nrows())?;
        check_len("congruence cols", self.n, q.ncols())?;
        let n = self.n;
        let s = self.t.matmul(q)?;
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(pos, col) in &self.free {
            columns[pos] = s.col(col).filter(|&(_, v)| v.abs() > drop_tol).collect();
        }
        let mut slot = vec![usize::MAX; n];
        for blk in &self.blocks {
            let d = blk.cols.len();
            let mut rows: Vec<usize> = blk.cols.iter().flat_map(|&c| s.col(c).map(|(i, _)| i)).collect();
            rows.sort_unstable();
            rows.dedup();
            for (p, &i) in rows.iter().enumerate() {
                slot[i] = p;
            }
            let mut x = DMatrix::zeros(rows.len(), d);
            for (l, &c) in blk.cols.iter().enumerate() {
                for (i, v) in s.col(c) {
                    x[(slot[i], l)] = v;
                }
            }
            let y = x * blk.v.transpose();
            for l in 0..d {
                columns[blk.position(l)] = rows
                    .iter()
                    .enumerate()
                    .filter_map(|(p, &i)| {
                        let v = y[(p, l)];
                        (v.abs() > drop_tol).then_some((i, v))
                    })
                    .collect();
            }
            for &i in &rows {
                slot[i] = usize::MAX;
            }
        }
        let mut colptr = Vec::with_capacity(n + 1);
        let nnz: usize = columns.iter().map(Vec::len).sum();
        let mut rowidx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        colptr.push(0);
        for col in columns {
            for (i, v) in col {
                rowidx.push(i);
                values.push(v);
            }
            colptr.push(rowidx.len());
        }
        SparseMat::from_csc(n, n, colptr, rowidx, values)?.symmetrized()
    }
}

fn build_from_blocks(a: &SparseMat, groups: Vec<Block>, policy: &NumericPolicy) -> Result<ConstraintBasis> {
    let (k, n) = a.shape();
    let mut blocks = Vec::with_capacity(groups.len());
    let mut c_next = 0;
    let mut u_next = k;
    let mut touched = vec![false; n];
    for (bi, g) in groups.into_iter().enumerate() {
        let (r, d) = (g.rows.len(), g.cols.len());
        if r > d {
            return Err(Error::RankDeficient {
                block: bi,
                sigma_min: 0.0,
                sigma_max: 0.0,
            });
        }
        let dense = a.select(&g.rows, &g.cols).to_dense();
        let qr = row_space_qr(&dense, policy)?;
        let (smin, smax) = qr.diag_extremes();
        if !(smin > policy.rank_tol * smax) {
            return Err(Error::RankDeficient {
                block: bi,
                sigma_min: smin,
                sigma_max: smax,
            });
        }
        for &c in &g.cols {
            touched[c] = true;
        }
        blocks.push(BasisBlock {
            rows: g.rows,
            cols: g.cols,
            c_pos: c_next..c_next + r,
            u_pos: u_next..u_next + (d - r),
            v: qr.v,
            r: qr.r,
            perm: qr.perm,
        });
        c_next += r;
        u_next += d - r;
    }
    debug_assert_eq!(c_next, k);
    let mut free = Vec::with_capacity(n - u_next);
    for c in 0..n {
        if !touched[c] {
            free.push((u_next, c));
            u_next += 1;
        }
    }
    let nnz = blocks.iter().map(|b| b.cols.len().pow(2)).sum::<usize>() + free.len();
    let mut tb = TripletBuilder::with_capacity(n, n, nnz);
    for b in &blocks {
        for l in 0..b.cols.len() {
            let pos = b.position(l);
            for (j, &c) in b.cols.iter().enumerate() {
                let val = b.v[(l, j)];
                if val != 0.0 {
                    tb.push(pos, c, val);
                }
            }
        }
    }
    for &(pos, c) in &free {
        tb.push(pos, c, 1.0);
    }
    Ok(ConstraintBasis {
        n,
        k,
        t: tb.build(),
        blocks,
        free,
    })
}

/// Basis from one SVD of `A` restricted to its nonzero columns.
pub fn build_basis_svd(a: &SparseMat, policy: &NumericPolicy) -> Result<ConstraintBasis> {
    let group = Block {
        rows: (0..a.nrows()).collect(),
        cols: a.nonzero_cols(),
    };
    let groups = if a.nrows() == 0 { Vec::new() } else { vec![group] };
    build_from_blocks(a, groups, policy)
}

/// Basis from one SVD per block of constraints with disjoint column supports.
pub fn build_basis_blocked(a: &SparseMat, policy: &NumericPolicy) -> Result<ConstraintBasis> {
    build_from_blocks(a, find_blocks(a), policy)
}

/// A field expressed in the constraint basis.
#[derive(Debug, Clone)]
pub struct Transformed {
    /// `Q* = T Q Tᵀ`.
    pub q_star: SparseMat,
    /// `μ* = T μ`.
    pub mu_star: Vec<f64>,
    /// `T E`, orthonormal because `T` is.
    pub e_star: DMatrix<f64>,
}

impl Transformed {
    pub fn q_uu(&self, k: usize) -> SparseMat {
        let n = self.q_star.nrows();
        self.q_star.slice(k..n, k..n)
    }

    pub fn q_cc(&self, k: usize) -> SparseMat {
        self.q_star.slice(0..k, 0..k)
    }

    /// `Q*_{𝒰𝒞}`.
    pub fn q_uc(&self, k: usize) -> SparseMat {
        let n = self.q_star.nrows();
        self.q_star.slice(k..n, 0..k)
    }
}

/// Expresses `g` in the basis `cb`.
pub fn transform(g: &Gmrf, cb: &ConstraintBasis, policy: &NumericPolicy) -> Result<Transformed> {
    check_len("basis dimension", cb.n(), g.n())?;
    let q_star = cb.congruence(g.q(), policy.drop_tol)?;
    let mu_star = cb.apply(&g.natural_mean(policy)?)?;
    let e_star = cb.t().mul_dense(g.nullspace().matrix())?;
    Ok(Transformed { q_star, mu_star, e_star })
}

/// `T E` for a null-space basis.
pub fn transform_nullspace(e: &NullSpaceBasis, cb: &ConstraintBasis) -> Result<DMatrix<f64>> {
    cb.t().mul_dense(e.matrix())
}
