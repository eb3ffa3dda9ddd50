//! Finite element approximation of Matérn fields on regular triangulations.

mod fem;
mod matern;
mod mesh;

pub use fem::{
    assemble, build_precision, constraint_nodes, element_stiffness, derivative_matrix, divergence_constraints, obs_matrix, SpdeModel,
    SpdeOperators, TransformedOperators,
};
pub use matern::{
    bessel_k, bessel_k01, divfree_cov, divfree_kernel, divfree_kernel_baseline, matern_cov, matern_cov_matrix,
    spde_marginal_variance,
};
pub use mesh::{build_mesh, Mesh, Rect};

use serde::{Deserialize, Serialize};

/// Which second component to use for the benchmark vector field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFieldVariant {
    /// `f = (∂₂g, −∂₁g)` for `g = −e^{−a s₁s₂} sin(s₁s₂)`, divergence free.
    #[default]
    Curl,
    /// Second component `e^{−a s₁s₂}(s₂ sin(s₁s₂) − a s₂ sin(s₁s₂))`, not divergence free.
    Literal,
}

/// Benchmark vector field evaluated at `s`.
pub fn test_field(s: [f64; 2], a: f64, variant: TestFieldVariant) -> [f64; 2] {
    let p = s[0] * s[1];
    let e = (-a * p).exp();
    let f1 = e * (a * s[0] * p.sin() - s[0] * p.cos());
    let f2 = match variant {
        TestFieldVariant::Curl => e * (s[1] * p.cos() - a * s[1] * p.sin()),
        TestFieldVariant::Literal => e * (s[1] * p.sin() - a * s[1] * p.sin()),
    };
    [f1, f2]
}
