/// Numeric tolerances shared by every kernel in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericPolicy {
    /// Relative pivot tolerance for Cholesky, scaled by the largest diagonal entry.
    pub pivot_tol: f64,
    /// Relative residual tolerance used by invariant checks.
    pub residual_tol: f64,
    /// Absolute threshold below which sparse products drop entries.
    pub drop_tol: f64,
    /// Relative singular value threshold for rank decisions on constraint blocks.
    pub rank_tol: f64,
    /// Largest number of rows handed to the dense SVD.
    pub dense_block_cap: usize,
    /// Largest dimension accepted by the dense test oracles.
    pub dense_oracle_cap: usize,
    /// Iteration cap for the dense SVD.
    pub svd_max_iter: usize,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-12,
            residual_tol: 1e-8,
            drop_tol: 1e-14,
            rank_tol: 1e-10,
            dense_block_cap: 2048,
            dense_oracle_cap: 2000,
            svd_max_iter: 10_000,
        }
    }
}
