use super::mesh::Mesh;
use crate::constraints::{find_blocks, ConstraintBasis, ConstraintSet};
use crate::error::{Error, Result};
use crate::gmrf::Gmrf;
use crate::policy::NumericPolicy;
use crate::sparse::{cholesky, FillOrdering, SparseMat, TripletBuilder};

/// Per-triangle geometry: area and the constant gradients of the three hat functions.
fn element(mesh: &Mesh, t: usize) -> Result<(f64, [[f64; 2]; 3])> {
    let [a, b, c] = mesh.triangles()[t].map(|v| mesh.nodes()[v]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    if !(det.abs() > 0.0) {
        return Err(Error::DegenerateTriangle(t));
    }
    // ∇λ_i is the inward normal of the opposite edge divided by 2·area
    let grad = |p: [f64; 2], q: [f64; 2]| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
    Ok((0.5 * det.abs(), [grad(b, c), grad(c, a), grad(a, b)]))
}

/// Area and local stiffness matrix `∫∇φ_i·∇φ_j` of triangle `t`.
pub fn element_stiffness(mesh: &Mesh, t: usize) -> Result<(f64, [[f64; 3]; 3])> {
    let (area, grads) = element(mesh, t)?;
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
        }
    }
    Ok((area, k))
}

/// Lumped mass `C` (diagonal) and stiffness `G` of the P1 element space.
pub fn assemble(mesh: &Mesh) -> Result<(SparseMat, SparseMat)> {
    let n = mesh.n_nodes();
    let mut c = vec![0.0; n];
    let mut g = TripletBuilder::with_capacity(n, n, 9 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (area, k) = element_stiffness(mesh, t)?;
        for i in 0..3 {
            c[tri[i]] += area / 3.0;
            for j in 0..3 {
                g.push(tri[i], tri[j], k[i][j]);
            }
        }
    }
    Ok((SparseMat::from_diag(&c), g.build().symmetrized()?))
}

/// The matrices `P_0 = C` and `P_j = G (C⁻¹G)^{j−1}` from which every
/// precision of order `α` is a fixed linear combination.
#[derive(Debug, Clone)]
pub struct SpdeOperators {
    c: SparseMat,
    g: SparseMat,
    powers: Vec<SparseMat>,
}

impl SpdeOperators {
    pub fn new(mesh: &Mesh, alpha: u32) -> Result<Self> {
        check_alpha(alpha)?;
        let (c, g) = assemble(mesh)?;
        let cinv: Vec<f64> = c.diag().iter().map(|v| 1.0 / v).collect();
        let cinv_g = g.scale_rows(&cinv)?;
        let mut powers = vec![c.clone(), g.clone()];
        for _ in 2..=alpha {
            let next = powers.last().expect("nonempty").matmul(&cinv_g)?.symmetrized()?;
            powers.push(next);
        }
        Ok(Self { c, g, powers })
    }

    pub fn alpha(&self) -> u32 {
        (self.powers.len() - 1) as u32
    }

    pub fn c(&self) -> &SparseMat {
        &self.c
    }

    pub fn g(&self) -> &SparseMat {
        &self.g
    }

    pub fn powers(&self) -> &[SparseMat] {
        &self.powers
    }

    /// Coefficients of `P_j` in `Q = φ⁻² K (C⁻¹K)^{α−1}` with `K = κ²C + G`.
    pub fn coefficients(alpha: u32, kappa2: f64, phi: f64) -> Vec<f64> {
        let mut binom = 1.0;
        (0..=alpha)
            .map(|j| {
                if j > 0 {
                    binom = binom * f64::from(alpha - j + 1) / f64::from(j);
                }
                binom * kappa2.powi((alpha - j) as i32) / (phi * phi)
            })
            .collect()
    }

    pub fn precision(&self, kappa2: f64, phi: f64) -> Result<SparseMat> {
        combine(&self.powers, kappa2, phi)
    }

    /// The same operators for `copies` independent fields stacked into one vector.
    pub fn stacked(&self, copies: usize) -> Self {
        let bd = |m: &SparseMat| SparseMat::block_diag(&vec![m; copies]);
        Self {
            c: bd(&self.c),
            g: bd(&self.g),
            powers: self.powers.iter().map(bd).collect(),
        }
    }

    /// Every `P_j` expressed in a constraint basis, so that `T Q Tᵀ` for new
    /// parameters is a linear combination rather than a new congruence.
    pub fn congruences(&self, cb: &ConstraintBasis, drop_tol: f64) -> Result<TransformedOperators> {
        let powers = self.powers.iter().map(|p| cb.congruence(p, drop_tol)).collect::<Result<_>>()?;
        Ok(TransformedOperators { powers })
    }
}

/// `T P_j Tᵀ` for the powers of an [`SpdeOperators`].
#[derive(Debug, Clone)]
pub struct TransformedOperators {
    powers: Vec<SparseMat>,
}

impl TransformedOperators {
    /// `T Q Tᵀ` for the given parameters.
    pub fn precision(&self, kappa2: f64, phi: f64) -> Result<SparseMat> {
        combine(&self.powers, kappa2, phi)
    }
}

fn combine(powers: &[SparseMat], kappa2: f64, phi: f64) -> Result<SparseMat> {
    check_params(kappa2, phi)?;
    let coef = SpdeOperators::coefficients(powers.len() as u32 - 1, kappa2, phi);
    let terms: Vec<(f64, &SparseMat)> = coef.into_iter().zip(powers).collect();
    SparseMat::lincomb(&terms)
}

fn check_alpha(alpha: u32) -> Result<()> {
    if alpha == 2 || alpha == 4 {
        Ok(())
    } else {
        Err(Error::UnsupportedAlpha(alpha))
    }
}

fn check_params(kappa2: f64, phi: f64) -> Result<()> {
    if kappa2 > 0.0 && phi > 0.0 && kappa2.is_finite() && phi.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("need kappa2 > 0 and phi > 0, got {kappa2}, {phi}")))
    }
}

/// SPDE approximation of a Matérn field on a mesh.
#[derive(Debug, Clone)]
pub struct SpdeModel {
    mesh: Mesh,
    kappa2: f64,
    phi: f64,
    alpha: u32,
    c: SparseMat,
    g: SparseMat,
    q: SparseMat,
}

pub fn build_precision(mesh: &Mesh, kappa2: f64, phi: f64, alpha: u32) -> Result<SpdeModel> {
    check_alpha(alpha)?;
    check_params(kappa2, phi)?;
    let ops = SpdeOperators::new(mesh, alpha)?;
    let q = ops.precision(kappa2, phi)?;
    Ok(SpdeModel {
        mesh: mesh.clone(),
        kappa2,
        phi,
        alpha,
        c: ops.c,
        g: ops.g,
        q,
    })
}

impl SpdeModel {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    pub fn kappa(&self) -> f64 {
        self.kappa2.sqrt()
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    /// Smoothness of the matching Matérn covariance in two dimensions.
    pub fn nu(&self) -> f64 {
        f64::from(self.alpha) - 1.0
    }

    pub fn c(&self) -> &SparseMat {
        &self.c
    }

    pub fn g(&self) -> &SparseMat {
        &self.g
    }

    pub fn q(&self) -> &SparseMat {
        &self.q
    }

    /// Zero-mean GMRF with this precision.
    /// Column `node` of `Q⁻¹`: covariances between that node and every node.
    pub fn covariance_column(&self, node: usize, policy: &NumericPolicy) -> Result<Vec<f64>> {
        let f = cholesky(&self.q, &FillOrdering::Amd, policy)?;
        let mut e = vec![0.0; self.q.nrows()];
        e[node] = 1.0;
        f.solve(&e)
    }

    pub fn gmrf(&self) -> Result<Gmrf> {
        Gmrf::centered(self.q.clone())
    }
}

/// Row `i` holds the barycentric weights of `locations[i]` in its triangle.
pub fn obs_matrix(mesh: &Mesh, locations: &[[f64; 2]]) -> Result<SparseMat> {
    let mut tb = TripletBuilder::with_capacity(locations.len(), mesh.n_nodes(), 3 * locations.len());
    for (i, &p) in locations.iter().enumerate() {
        let (t, w) = mesh.locate(p)?;
        for (k, &v) in mesh.triangles()[t].iter().enumerate() {
            if w[k] != 0.0 {
                tb.push(i, v, w[k]);
            }
        }
    }
    Ok(tb.build())
}

/// Lumped projection `C⁻¹B_v` of the directional derivative `vᵀ∇`.
pub fn derivative_matrix(mesh: &Mesh, v: [f64; 2]) -> Result<SparseMat> {
    if !(v[0].hypot(v[1]) > 0.0) {
        return Err(Error::InvalidInput("derivative direction must be nonzero".into()));
    }
    let n = mesh.n_nodes();
    let mut c = vec![0.0; n];
    let mut tb = TripletBuilder::with_capacity(n, n, 9 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (area, grads) = element(mesh, t)?;
        for i in 0..3 {
            c[tri[i]] += area / 3.0;
            for j in 0..3 {
                let d = v[0] * grads[j][0] + v[1] * grads[j][1];
                if d != 0.0 {
                    tb.push(tri[i], tri[j], area / 3.0 * d);
                }
            }
        }
    }
    let cinv: Vec<f64> = c.iter().map(|x| 1.0 / x).collect();
    Ok(tb.build().scale_rows(&cinv)?.pruned(0.0))
}

/// Interior nodes on the lattice `i ≡ j ≡ 0 (mod stride)`.
pub fn constraint_nodes(mesh: &Mesh, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    (0..mesh.n_nodes())
        .filter(|&v| mesh.is_interior(v) && (v % mesh.nx()) % stride == 0 && (v / mesh.nx()) % stride == 0)
        .collect()
}

/// Discrete divergence `∂₁X⁽¹⁾ + ∂₂X⁽²⁾ = 0` at the lattice of interior
/// nodes selected by `stride`, acting on the stacked field `[X⁽¹⁾; X⁽²⁾]`.
///
/// When rows share support the constraints remain valid but the blocked basis
/// degenerates towards a single dense block; a warning is logged.
pub fn divergence_constraints(mesh: &Mesh, stride: usize) -> Result<ConstraintSet> {
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be at least 1".into()));
    }
    let n = mesh.n_nodes();
    let d1 = derivative_matrix(mesh, [1.0, 0.0])?;
    let d2 = derivative_matrix(mesh, [0.0, 1.0])?;
    let nodes = constraint_nodes(mesh, stride);
    let both = d1.hstack(&d2)?;
    let a = both.select(&nodes, &(0..2 * n).collect::<Vec<_>>());
    let blocks = find_blocks(&a);
    if blocks.len() < a.nrows() {
        log::warn!(
            "divergence rows at stride {stride} overlap: {} rows in {} blocks, blocked basis falls back to larger SVDs",
            a.nrows(),
            blocks.len()
        );
    }
    ConstraintSet::new(a, vec![0.0; nodes.len()])
}
