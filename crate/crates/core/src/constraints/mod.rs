//! Orthonormal bases that make linear constraints axis aligned.

mod basis;
mod blocks;

pub use basis::{
    build_basis_blocked, build_basis_svd, transform, transform_nullspace, BasisBlock, ConstraintBasis,
    ConstraintSet, Transformed,
};
pub use blocks::{find_blocks, Block};
