//! Derivative-free minimization for the hyperparameter fits.

use crate::error::{BenchError, Result};
use argmin::core::{CostFunction, Error as ArgminError, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;

/// Value used in place of a failed or non-finite objective evaluation.
const PENALTY: f64 = 1e300;

struct Objective<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        let v = (self.0)(p);
        Ok(if v.is_finite() { v } else { PENALTY })
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: u64,
    pub converged: bool,
}

/// Nelder–Mead from an axis-aligned simplex of edge `step` at `x0`.
///
/// Stops when the standard deviation of the simplex values drops below `tol`
/// or after `max_iters` iterations; the latter is reported as not converged.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, tol: f64, max_iters: u64) -> Result<Minimum> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut p = x0.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(tol)
        .map_err(|e| BenchError::Optimizer(e.to_string()))?;
    let res = Executor::new(Objective(f), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| BenchError::Optimizer(e.to_string()))?;
    let state = res.state();
    let x = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| BenchError::Optimizer("no best parameter".into()))?;
    let converged = matches!(state.get_termination_status(), TerminationStatus::Terminated(TerminationReason::SolverConverged));
    Ok(Minimum {
        x,
        f: state.get_best_cost(),
        iters: state.get_iter(),
        converged,
    })
}
