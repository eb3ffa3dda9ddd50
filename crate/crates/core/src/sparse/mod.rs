//! Compressed sparse column matrices and the kernels built on them.
//!
//! Row indices inside each column are kept strictly increasing, so a matrix
//! never stores the same `(row, col)` pair twice.

mod cholesky;

pub use cholesky::{cholesky, tri_solve, CholFactor, FillOrdering, TriSide};

use crate::error::{check_len, Error, Result};
use nalgebra::DMatrix;

/// Sparse matrix in compressed column storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    nrows: usize,
    ncols: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    /// Panics when the index is out of bounds.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            row < self.nrows && col < self.ncols,
            "triplet ({row}, {col}) outside {}x{}",
            self.nrows,
            self.ncols
        );
        self.entries.push((row, col, value));
    }

    pub fn build(self) -> SparseMat {
        let TripletBuilder { nrows, ncols, entries } = self;
        // bucket by column, then sort each (short) column by row
        let mut start = vec![0usize; ncols + 1];
        for &(_, c, _) in &entries {
            start[c + 1] += 1;
        }
        for j in 0..ncols {
            start[j + 1] += start[j];
        }
        let mut next = start.clone();
        let mut bucket = vec![(0usize, 0.0f64); entries.len()];
        for &(r, c, v) in &entries {
            bucket[next[c]] = (r, v);
            next[c] += 1;
        }
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowidx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        for j in 0..ncols {
            let col = &mut bucket[start[j]..start[j + 1]];
            col.sort_unstable_by_key(|e| e.0);
            let mut last = None;
            for &(r, v) in col.iter() {
                if last == Some(r) {
                    *values.last_mut().expect("previous entry") += v;
                } else {
                    rowidx.push(r);
                    values.push(v);
                    last = Some(r);
                }
            }
            colptr[j + 1] = rowidx.len();
        }
        SparseMat {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        }
    }
}

impl SparseMat {
    /// Builds a matrix from raw CSC arrays, validating the storage invariants.
    pub fn from_csc(
        nrows: usize,
        ncols: usize,
        colptr: Vec<usize>,
        rowidx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_len("colptr length", ncols + 1, colptr.len())?;
        check_len("value count", rowidx.len(), values.len())?;
        if colptr[0] != 0 || colptr[ncols] != rowidx.len() {
            return Err(Error::InvalidInput("column pointers do not span the entries".into()));
        }
        for j in 0..ncols {
            if colptr[j] > colptr[j + 1] {
                return Err(Error::InvalidInput("column pointers decrease".into()));
            }
            let col = &rowidx[colptr[j]..colptr[j + 1]];
            if col.iter().any(|&r| r >= nrows) {
                return Err(Error::InvalidInput(format!("row index out of bounds in column {j}")));
            }
            if col.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!(
                    "row indices in column {j} not strictly increasing"
                )));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        })
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut b = TripletBuilder::with_capacity(nrows, ncols, triplets.len());
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidInput(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            b.push(r, c, v);
        }
        Ok(b.build())
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowidx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            colptr: (0..=n).collect(),
            rowidx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Converts a dense matrix, keeping entries with `|v| > drop_tol`.
    pub fn from_dense(m: &DMatrix<f64>, drop_tol: f64) -> Self {
        let (nrows, ncols) = m.shape();
        let mut colptr = Vec::with_capacity(ncols + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        colptr.push(0);
        for j in 0..ncols {
            for i in 0..nrows {
                let v = m[(i, j)];
                if v.abs() > drop_tol {
                    rowidx.push(i);
                    values.push(v);
                }
            }
            colptr.push(rowidx.len());
        }
        Self {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn colptr(&self) -> &[usize] {
        &self.colptr
    }

    pub fn rowidx(&self) -> &[usize] {
        &self.rowidx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterates the stored `(row, value)` pairs of column `j`.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.colptr[j]..self.colptr[j + 1];
        self.rowidx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.colptr[j]..self.colptr[j + 1];
        match self.rowidx[range.clone()].binary_search(&i) {
            Ok(p) => self.values[range.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.nrows + 1];
        for &r in &self.rowidx {
            counts[r + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let colptr = counts.clone();
        let mut next = counts;
        let mut rowidx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                let p = next[i];
                rowidx[p] = j;
                values[p] = v;
                next[i] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            colptr,
            rowidx,
            values,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("matrix-vector product", self.ncols, x.len())?;
        let mut y = vec![0.0; self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (i, v) in self.col(j) {
                    y[i] += v * xj;
                }
            }
        }
        Ok(y)
    }

    /// Computes `selfᵀ x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("transposed matrix-vector product", self.nrows, x.len())?;
        Ok((0..self.ncols)
            .map(|j| self.col(j).map(|(i, v)| v * x[i]).sum())
            .collect())
    }

    /// Sparse times dense.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len("sparse-dense product", self.ncols, x.nrows())?;
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut yc = y.column_mut(c);
            for j in 0..self.ncols {
                let xj = xc[j];
                if xj != 0.0 {
                    for (i, v) in self.col(j) {
                        yc[i] += v * xj;
                    }
                }
            }
        }
        Ok(y)
    }

    /// Sparse product `self * other` (Gustavson's algorithm).
    pub fn matmul(&self, other: &SparseMat) -> Result<SparseMat> {
        check_len("sparse product", self.ncols, other.nrows)?;
        let mut colptr = Vec::with_capacity(other.ncols + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0; self.nrows];
        let mut mark = vec![usize::MAX; self.nrows];
        let mut pattern: Vec<usize> = Vec::new();
        colptr.push(0);
        for j in 0..other.ncols {
            pattern.clear();
            for (k, bkj) in other.col(j) {
                for (i, aik) in self.col(k) {
                    if mark[i] != j {
                        mark[i] = j;
                        pattern.push(i);
                        acc[i] = aik * bkj;
                    } else {
                        acc[i] += aik * bkj;
                    }
                }
            }
            pattern.sort_unstable();
            for &i in &pattern {
                rowidx.push(i);
                values.push(acc[i]);
            }
            colptr.push(rowidx.len());
        }
        Ok(SparseMat {
            nrows: self.nrows,
            ncols: other.ncols,
            colptr,
            rowidx,
            values,
        })
    }

    /// Linear combination `sum_i w_i M_i` of equally shaped matrices.
    pub fn lincomb(terms: &[(f64, &SparseMat)]) -> Result<SparseMat> {
        let Some(&(_, first)) = terms.first() else {
            return Err(Error::InvalidInput("empty linear combination".into()));
        };
        let (nrows, ncols) = first.shape();
        for (_, m) in terms {
            check_len("linear combination rows", nrows, m.nrows)?;
            check_len("linear combination cols", ncols, m.ncols)?;
        }
        let mut colptr = Vec::with_capacity(ncols + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0; nrows];
        let mut mark = vec![usize::MAX; nrows];
        let mut pattern = Vec::new();
        colptr.push(0);
        for j in 0..ncols {
            pattern.clear();
            for &(w, m) in terms {
                for (i, v) in m.col(j) {
                    if mark[i] != j {
                        mark[i] = j;
                        pattern.push(i);
                        acc[i] = w * v;
                    } else {
                        acc[i] += w * v;
                    }
                }
            }
            pattern.sort_unstable();
            for &i in &pattern {
                rowidx.push(i);
                values.push(acc[i]);
            }
            colptr.push(rowidx.len());
        }
        Ok(SparseMat {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        })
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn scaled(&self, factor: f64) -> SparseMat {
        let mut m = self.clone();
        m.scale(factor);
        m
    }

    /// Returns `diag(d) * self`.
    pub fn scale_rows(&self, d: &[f64]) -> Result<SparseMat> {
        check_len("row scaling", self.nrows, d.len())?;
        let mut m = self.clone();
        for (p, v) in m.values.iter_mut().enumerate() {
            *v *= d[m.rowidx[p]];
        }
        Ok(m)
    }

    /// Adds `delta[i]` to the diagonal entry `(idx[i], idx[i])`.
    pub fn add_to_diagonal(&self, idx: &[usize], delta: f64) -> SparseMat {
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + idx.len());
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                b.push(i, j, v);
            }
        }
        for &i in idx {
            b.push(i, i, delta);
        }
        b.build()
    }

    /// Drops stored entries with `|v| <= tol`.
    pub fn pruned(&self, tol: f64) -> SparseMat {
        let mut colptr = Vec::with_capacity(self.ncols + 1);
        let mut rowidx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        colptr.push(0);
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                if v.abs() > tol {
                    rowidx.push(i);
                    values.push(v);
                }
            }
            colptr.push(rowidx.len());
        }
        SparseMat {
            nrows: self.nrows,
            ncols: self.ncols,
            colptr,
            rowidx,
            values,
        }
    }

    /// Extracts the submatrix with the given rows and columns (in the given order).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> SparseMat {
        let mut map = vec![usize::MAX; self.nrows];
        for (new, &old) in rows.iter().enumerate() {
            map[old] = new;
        }
        let mut colptr = Vec::with_capacity(cols.len() + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        let mut buf: Vec<(usize, f64)> = Vec::new();
        colptr.push(0);
        for &j in cols {
            buf.clear();
            buf.extend(self.col(j).filter_map(|(i, v)| {
                let r = map[i];
                (r != usize::MAX).then_some((r, v))
            }));
            buf.sort_unstable_by_key(|e| e.0);
            for &(r, v) in &buf {
                rowidx.push(r);
                values.push(v);
            }
            colptr.push(rowidx.len());
        }
        SparseMat {
            nrows: rows.len(),
            ncols: cols.len(),
            colptr,
            rowidx,
            values,
        }
    }

    /// Contiguous block `rows × cols`.
    pub fn slice(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> SparseMat {
        let mut colptr = Vec::with_capacity(cols.len() + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        colptr.push(0);
        for j in cols.clone() {
            for (i, v) in self.col(j) {
                if rows.contains(&i) {
                    rowidx.push(i - rows.start);
                    values.push(v);
                }
            }
            colptr.push(rowidx.len());
        }
        SparseMat {
            nrows: rows.len(),
            ncols: cols.len(),
            colptr,
            rowidx,
            values,
        }
    }

    /// Stacks `[blocks[0] 0; 0 blocks[1]; ...]`.
    pub fn block_diag(blocks: &[&SparseMat]) -> SparseMat {
        let nrows = blocks.iter().map(|b| b.nrows).sum();
        let ncols = blocks.iter().map(|b| b.ncols).sum();
        let mut colptr = Vec::with_capacity(ncols + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        colptr.push(0);
        let mut roff = 0;
        for b in blocks {
            for j in 0..b.ncols {
                for (i, v) in b.col(j) {
                    rowidx.push(i + roff);
                    values.push(v);
                }
                colptr.push(rowidx.len());
            }
            roff += b.nrows;
        }
        SparseMat {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        }
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hstack(&self, other: &SparseMat) -> Result<SparseMat> {
        check_len("horizontal stack", self.nrows, other.nrows)?;
        let mut m = self.clone();
        let off = m.rowidx.len();
        m.rowidx.extend_from_slice(&other.rowidx);
        m.values.extend_from_slice(&other.values);
        m.colptr.extend(other.colptr[1..].iter().map(|p| p + off));
        m.ncols += other.ncols;
        Ok(m)
    }

    /// Largest `|a_ij - a_ji|` relative to `max_abs`.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let t = self.transpose();
        let diff = SparseMat::lincomb(&[(1.0, self), (-1.0, &t)]).expect("square");
        let scale = self.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            diff.max_abs() / scale
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && *self == self.transpose()
    }

    /// Returns `(self + selfᵀ) / 2`, exactly symmetric.
    pub fn symmetrized(&self) -> Result<SparseMat> {
        check_len("symmetrize", self.nrows, self.ncols)?;
        let t = self.transpose();
        let mut s = SparseMat::lincomb(&[(0.5, self), (0.5, &t)])?;
        // entries (i,j) and (j,i) are both 0.5 a + 0.5 b, summed in different
        // orders; copy the upper triangle onto the lower to make them bitwise equal
        let upper: Vec<(usize, usize, f64)> = (0..s.ncols)
            .flat_map(|j| s.col(j).filter(move |&(i, _)| i < j).map(move |(i, v)| (i, j, v)))
            .collect();
        for (i, j, v) in upper {
            let range = s.colptr[i]..s.colptr[i + 1];
            if let Ok(p) = s.rowidx[range.clone()].binary_search(&j) {
                s.values[range.start + p] = v;
            }
        }
        Ok(s)
    }

    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let y = self.mul_vec(x)?;
        Ok(dot(x, &y))
    }

    /// Indices of columns holding at least one stored nonzero.
    pub fn nonzero_cols(&self) -> Vec<usize> {
        (0..self.ncols)
            .filter(|&j| self.col(j).any(|(_, v)| v != 0.0))
            .collect()
    }
}

/// Triple product `T Q Tᵀ`, symmetrised, dropping entries with `|v| <= drop_tol`.
pub fn triple_product(t: &SparseMat, q: &SparseMat, drop_tol: f64) -> Result<SparseMat> {
    check_len("triple product inner", t.ncols(), q.nrows())?;
    check_len("triple product square", q.nrows(), q.ncols())?;
    let tq = t.matmul(q)?;
    let tt = t.transpose();
    let m = tq.matmul(&tt)?;
    m.pruned(drop_tol).symmetrized()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs_vec(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
