//! Optimal allocations for the provider's program.
//!
//! After the optimal payments are substituted, the provider's expected utility
//! is linear in the allocation apart from the shortfall penalty:
//!
//! ```text
//! U(x) = sum_{k,l} a_{k,l} x_{k,l} + M * min(0, sum_{k,l} w_{l,k} x_{k,l} - D)
//! a_{k,l} = w_{l,k} (alpha - v^k) - (v^k - v^{k-1}) sum_{j<k} w_{l,j}
//! ```
//!
//! * [`solve_single_capacity`]: the one-capacity case as a linear program,
//! * [`solve_multi_reduced`]: exact search over greedy allocations `min(c^l, y_k)`,
//! * [`solve_multi_relaxed`]: local search on the relaxed complementarity program,
//! * [`oracle_grid_search`]: brute force on a lattice, for cross-checking.

mod lp;
mod oracle;
mod reduced;
mod relaxed;
mod single;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::Matrix;
use crate::model::{provider_expected_utility, Contract, MarketInstance};

pub use lp::{LinearProgram, LpOutcome};
pub use oracle::{oracle_grid_search, oracle_candidate_count, ORACLE_CANDIDATE_LIMIT};
pub use reduced::{reduced_allocation, solve_multi_reduced};
pub use relaxed::{
    relaxed_feasible, solve_multi_relaxed, solve_multi_relaxed_with, solve_relaxed_schedule,
    RelaxedOptions, DEFAULT_EPSILON, DEFAULT_SCHEDULE,
};
pub use single::solve_single_capacity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SingleExact,
    MultiReducedExact,
    MultiRelaxed,
    Oracle,
}

impl Method {
    pub fn is_exact(self) -> bool {
        matches!(self, Method::SingleExact | Method::MultiReducedExact)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Simplex pivots or accepted local-search steps.
    pub iterations: usize,
    /// Candidate allocations evaluated.
    pub candidates: usize,
    /// Search-tree nodes discarded by bounding.
    pub pruned: usize,
    /// Local-search starts.
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub contract: Contract,
    pub expected_utility: f64,
    pub method: Method,
    pub epsilon: f64,
    /// `min(0, expected supply - D)` at the returned allocation.
    pub aux_t: f64,
    pub diagnostics: Diagnostics,
}

/// Objective coefficients of the payment-substituted program.
#[derive(Debug, Clone)]
pub(crate) struct Objective {
    /// `K x L` linear coefficients `a_{k,l}`.
    pub coef: Matrix,
    /// `K x L` aggregate type weights (transposed relative to the instance layout).
    pub weight: Matrix,
    pub penalty: f64,
    pub floor: f64,
    pub penalty_active: bool,
}

impl Objective {
    pub fn new(instance: &MarketInstance) -> Self {
        let grid = instance.grid();
        let (k_count, l_count) = (grid.num_valuations(), grid.num_capacities());
        let weight = instance.aggregate_weights().matrix().transpose();
        let alpha = instance.alpha();
        let mut coef = Matrix::zeros(k_count, l_count);
        for l in 0..l_count {
            let mut below = 0.0;
            for k in 0..k_count {
                let v = grid.valuation(k);
                let step = if k == 0 { 0.0 } else { v - grid.valuation(k - 1) };
                coef[(k, l)] = weight[(k, l)] * (alpha - v) - step * below;
                below += weight[(k, l)];
            }
        }
        Objective {
            coef,
            weight,
            penalty: instance.penalty(),
            floor: instance.demand_floor(),
            penalty_active: !instance.penalty_inactive(),
        }
    }

    pub fn linear(&self, x: &Matrix) -> f64 {
        dot(self.coef.as_slice(), x.as_slice())
    }

    pub fn supply(&self, x: &Matrix) -> f64 {
        dot(self.weight.as_slice(), x.as_slice())
    }

    pub fn shortfall_term(&self, supply: f64) -> f64 {
        (supply - self.floor).min(0.0)
    }

    pub fn value(&self, x: &Matrix) -> f64 {
        self.linear(x) + self.penalty * self.shortfall_term(self.supply(x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Relative tolerance used to call two objective values tied.
pub(crate) fn tie_tol(a: f64, b: f64) -> f64 {
    1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Tie-break order among optima: objective, then total allocation, then the
/// allocation entries in row-major order (largest first).
pub(crate) fn prefer(a_obj: f64, a_x: &Matrix, b_obj: f64, b_x: &Matrix) -> bool {
    let tol = tie_tol(a_obj, b_obj);
    if a_obj > b_obj + tol {
        return true;
    }
    if a_obj < b_obj - tol {
        return false;
    }
    let (ta, tb) = (a_x.sum(), b_x.sum());
    let ttol = 1e-12 * ta.abs().max(tb.abs()).max(1.0);
    if ta > tb + ttol {
        return true;
    }
    if ta < tb - ttol {
        return false;
    }
    for (a, b) in a_x.as_slice().iter().zip(b_x.as_slice()) {
        if a > &(b + 1e-12) {
            return true;
        }
        if a < &(b - 1e-12) {
            return false;
        }
    }
    false
}

pub(crate) fn finish(
    instance: &MarketInstance,
    contract: Contract,
    method: Method,
    epsilon: f64,
    diagnostics: Diagnostics,
) -> Result<SolveResult> {
    let objective = Objective::new(instance);
    let aux_t = objective.shortfall_term(objective.supply(contract.allocation()));
    let expected_utility = provider_expected_utility(instance, &contract)?;
    Ok(SolveResult {
        contract,
        expected_utility,
        method,
        epsilon,
        aux_t,
        diagnostics,
    })
}

/// Exact solve, picking the linear program when there is one capacity.
pub fn solve_exact(instance: &MarketInstance) -> Result<SolveResult> {
    if instance.grid().num_capacities() == 1 {
        solve_single_capacity(instance)
    } else {
        solve_multi_reduced(instance)
    }
}
