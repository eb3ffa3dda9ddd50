//! Seeded generators for synthetic fields and constraint sets, used by the
//! benchmarks and the test suites.

use crate::constraints::{Block, ConstraintSet};
use crate::error::Result;
use crate::gmrf::Gmrf;
use crate::nullspace::NullSpaceBasis;
use crate::soft::SoftObservations;
use crate::sparse::{SparseMat, TripletBuilder};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// Sparse, strictly diagonally dominant precision with about `degree`
/// off-diagonal entries per row, and a random mean.
pub fn random_proper_gmrf<R: Rng + ?Sized>(rng: &mut R, n: usize, degree: usize) -> Result<Gmrf> {
    let mut diag = vec![0.0; n];
    let mut tb = TripletBuilder::new(n, n);
    for i in 0..n {
        for _ in 0..degree.div_ceil(2) {
            let j = rng.random_range(0..n);
            if j == i {
                continue;
            }
            let w: f64 = rng.random_range(-1.0..1.0);
            tb.push(i, j, w);
            tb.push(j, i, w);
            diag[i] += w.abs();
            diag[j] += w.abs();
        }
    }
    for (i, d) in diag.iter().enumerate() {
        tb.push(i, i, d + rng.random_range(0.2..1.5));
    }
    let mu = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Gmrf::natural(tb.build(), mu)
}

/// How constraint supports are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overlap {
    /// Disjoint supports.
    None,
    /// Supports drawn from anywhere, so rows chain into shared blocks.
    Random,
    /// Half of the rows disjoint, half drawn from anywhere.
    Mixed,
}

/// `k × n` constraint set of full row rank with Gaussian entries.
///
/// Each row owns a private column, which makes full rank generic.
/// Disjoint rows need `n ≥ 2k` to receive more than one column.
pub fn random_constraints<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, overlap: Overlap) -> Result<ConstraintSet> {
    assert!(k <= n, "need k <= n");
    let mut cols: Vec<usize> = (0..n).collect();
    cols.shuffle(rng);
    let mut tb = TripletBuilder::new(k, n);
    // cols[r] is private to row r; disjoint rows add columns from their own slice after the first k
    let per = (n - k) / k.max(1);
    for r in 0..k {
        let shared = match overlap {
            Overlap::None => false,
            Overlap::Random => true,
            Overlap::Mixed => r % 2 == 1,
        };
        let extra = rng.random_range(1..4);
        tb.push(r, cols[r], rng.sample(StandardNormal));
        if shared {
            for _ in 0..extra {
                tb.push(r, rng.random_range(0..n), rng.sample(StandardNormal));
            }
        } else {
            for &c in cols[k + r * per..k + (r + 1) * per].iter().take(extra) {
                tb.push(r, c, rng.sample(StandardNormal));
            }
        }
    }
    let a = tb.build();
    let b = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    ConstraintSet::new(a, b)
}

/// First-order random walk on a path: precision and normalized constant kernel.
pub fn rw1_path(n: usize) -> (SparseMat, NullSpaceBasis) {
    let mut tb = TripletBuilder::new(n, n);
    for i in 0..n - 1 {
        tb.push(i, i, 1.0);
        tb.push(i + 1, i + 1, 1.0);
        tb.push(i, i + 1, -1.0);
        tb.push(i + 1, i, -1.0);
    }
    (tb.build(), NullSpaceBasis::constant(n))
}

/// Second-order random walk on a path; the kernel holds constants and linear trends.
pub fn rw2_path(n: usize) -> Result<(SparseMat, NullSpaceBasis)> {
    let mut d = TripletBuilder::new(n - 2, n);
    for i in 0..n - 2 {
        d.push(i, i, 1.0);
        d.push(i, i + 1, -2.0);
        d.push(i, i + 2, 1.0);
    }
    let d = d.build();
    let q = d.transpose().matmul(&d)?.symmetrized()?;
    let e = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
    Ok((q, NullSpaceBasis::new(e)?))
}

/// Block-diagonal union of `parts` first-order walks of length `len`; kernel dimension `parts`.
pub fn rw1_components(parts: usize, len: usize) -> Result<(SparseMat, NullSpaceBasis)> {
    let (q1, _) = rw1_path(len);
    let blocks: Vec<&SparseMat> = std::iter::repeat_n(&q1, parts).collect();
    let q = SparseMat::block_diag(&blocks);
    let n = parts * len;
    let e = DMatrix::from_fn(n, parts, |i, j| if i / len == j { 1.0 } else { 0.0 });
    Ok((q, NullSpaceBasis::new(e)?))
}

/// Dense `k × n` constraints with `rank(A E) = k0` for the orthonormal kernel `E` (`n × s`).
///
/// With `aligned`, the first `k0` rows lie in `span(E)ᵀ` and the others are
/// orthogonal to it, so that `range(Aᵀ) ∩ span(E)` has dimension exactly `k0`.
/// Otherwise the rows mix both parts.
pub fn constraints_with_k0<R: Rng + ?Sized>(
    rng: &mut R,
    e: &NullSpaceBasis,
    k: usize,
    k0: usize,
    aligned: bool,
) -> Result<ConstraintSet> {
    let (n, s) = (e.n(), e.s());
    assert!(k0 <= k && k0 <= s && k - k0 <= n - s, "infeasible rank request");
    let em = e.matrix();
    let gauss = |rng: &mut R, r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let proj = DMatrix::identity(n, n) - em * em.transpose();
    let a = if aligned {
        let mut a = DMatrix::zeros(k, n);
        if k0 > 0 {
            let c = gauss(rng, k0, s);
            a.rows_mut(0, k0).copy_from(&(c * em.transpose()));
        }
        let r = gauss(rng, k - k0, n) * &proj;
        a.rows_mut(k0, k - k0).copy_from(&r);
        a
    } else {
        let m = gauss(rng, k, k0) * gauss(rng, k0, s);
        gauss(rng, k, n) * &proj + m * em.transpose()
    };
    let b = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    ConstraintSet::new(SparseMat::from_dense(&a, 0.0), b)
}

/// Noisy observations `y = B x + ε` with `B` of shape `m × n` (two to four nonzeros per row).
pub fn random_soft<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize, sigma2: f64) -> Result<SoftObservations> {
    let mut tb = TripletBuilder::new(m, n);
    for r in 0..m {
        for _ in 0..rng.random_range(2..5) {
            tb.push(r, rng.random_range(0..n), rng.sample(StandardNormal));
        }
    }
    let y = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    SoftObservations::new(tb.build(), y, sigma2)
}

/// Block-structured constraint matrix with `nblocks` planted blocks whose
/// rows and columns are randomly permuted, together with the planted partition
/// in the form `find_blocks` reports it.
pub fn planted_blocks<R: Rng + ?Sized>(rng: &mut R, nblocks: usize, max_rows: usize, max_cols: usize) -> (SparseMat, Vec<Block>) {
    let sizes: Vec<(usize, usize)> = (0..nblocks)
        .map(|_| {
            let r = rng.random_range(1..=max_rows);
            (r, rng.random_range(r.max(2)..=max_cols.max(r + 1)))
        })
        .collect();
    let k: usize = sizes.iter().map(|s| s.0).sum();
    let n: usize = sizes.iter().map(|s| s.1).sum();
    let mut rperm: Vec<usize> = (0..k).collect();
    let mut cperm: Vec<usize> = (0..n).collect();
    rperm.shuffle(rng);
    cperm.shuffle(rng);
    let mut tb = TripletBuilder::new(k, n);
    let mut planted = Vec::with_capacity(nblocks);
    let (mut r0, mut c0) = (0, 0);
    for &(nr, nc) in &sizes {
        // a path through the block keeps it connected: row i touches columns i and i+1
        let mut cols_used = vec![false; nc];
        for i in 0..nr {
            let mut touch = vec![i % nc, (i + 1) % nc];
            if i + 1 == nr {
                touch.extend(nr.min(nc)..nc);
            }
            for _ in 0..rng.random_range(0..3) {
                touch.push(rng.random_range(0..nc));
            }
            touch.sort_unstable();
            touch.dedup();
            for c in touch {
                cols_used[c] = true;
                tb.push(rperm[r0 + i], cperm[c0 + c], rng.random_range(0.5..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 });
            }
        }
        let mut rows: Vec<usize> = (0..nr).map(|i| rperm[r0 + i]).collect();
        let mut cols: Vec<usize> = (0..nc).filter(|&c| cols_used[c]).map(|c| cperm[c0 + c]).collect();
        rows.sort_unstable();
        cols.sort_unstable();
        planted.push(Block { rows, cols });
        r0 += nr;
        c0 += nc;
    }
    planted.sort_by_key(|b| b.rows[0]);
    (tb.build(), planted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::find_blocks;
    use crate::rng::stream;

    #[test]
    fn planted_partition_is_recovered() {
        let mut rng = stream(3, 0);
        let (a, planted) = planted_blocks(&mut rng, 12, 4, 7);
        assert_eq!(find_blocks(&a), planted);
    }

    #[test]
    fn disjoint_constraints_split() {
        let mut rng = stream(4, 0);
        let cs = random_constraints(&mut rng, 40, 8, Overlap::None).unwrap();
        assert_eq!(find_blocks(cs.a()).len(), 8);
    }
}
