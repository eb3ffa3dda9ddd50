//! Gaussian Markov random fields under sparse hard and soft linear constraints.
//!
//! The central object is a [`constraints::ConstraintBasis`]: an orthonormal
//! change of basis in which `A x = b` fixes the first `k` coordinates. In that
//! basis likelihoods, conditional laws and samplers reduce to sparse Cholesky
//! work on the unconstrained block, for proper and intrinsic fields alike.
//! The classical conditioning-by-kriging route lives next to it in [`hard`]
//! as a baseline and as an oracle.

pub mod constraints;
pub mod dense;
pub mod error;
pub mod gmrf;
pub mod hard;
pub mod io;
pub mod nullspace;
pub mod policy;
pub mod rng;
pub mod soft;
pub mod sparse;
pub mod spde;
pub mod synth;

pub use constraints::{build_basis_blocked, build_basis_svd, find_blocks, ConstraintBasis, ConstraintSet};
pub use error::{Error, Result};
pub use gmrf::Gmrf;
pub use nullspace::NullSpaceBasis;
pub use policy::NumericPolicy;
pub use sparse::SparseMat;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
