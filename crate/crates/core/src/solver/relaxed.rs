use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Contract, MarketInstance, TypeGrid};
use crate::payments::column_payments;

use super::reduced::{reduced_allocation, solve_multi_reduced};
use super::{finish, prefer, Diagnostics, Method, Objective, SolveResult};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_SCHEDULE: [f64; 3] = [1e-2, 1e-4, 1e-6];

const MIN_STEP: f64 = 1e-10;
const LINEAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedOptions {
    pub epsilon: f64,
    /// Random starting points in addition to the exact reduced optimum.
    pub restarts: usize,
    pub seed: u64,
    /// Accepted steps allowed per start.
    pub max_iterations: usize,
    /// Extra starting allocations; infeasible ones are rounded to greedy rows.
    pub warm_starts: Vec<Matrix>,
}

impl RelaxedOptions {
    pub fn new(epsilon: f64, restarts: usize, seed: u64) -> Self {
        RelaxedOptions {
            epsilon,
            restarts,
            seed,
            max_iterations: 100_000,
            warm_starts: Vec::new(),
        }
    }
}

/// Whether `x` satisfies the relaxed program's constraints:
///
/// ```text
/// c^l >= x[1][l] >= ... >= x[K][l] >= 0                  (each column)
/// x[k][1] <= ... <= x[k][L]                              (each row)
/// (x[k][l'] - x[k][l]) (c^l - x[k][l]) <= epsilon        (all l < l')
/// ```
pub fn relaxed_feasible(grid: &TypeGrid, x: &Matrix, epsilon: f64, tol: f64) -> Result<bool> {
    let (k_count, l_count) = (grid.num_valuations(), grid.num_capacities());
    if x.shape() != (k_count, l_count) {
        return Err(Error::shape(
            "allocation",
            format!("{k_count}x{l_count}"),
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    Ok(linear_ok(grid, x, tol) && max_complementarity(grid, x) <= epsilon + tol)
}

fn linear_ok(grid: &TypeGrid, x: &Matrix, tol: f64) -> bool {
    let (k_count, l_count) = x.shape();
    for l in 0..l_count {
        if x[(0, l)] > grid.capacity(l) + tol || x[(k_count - 1, l)] < -tol {
            return false;
        }
        for k in 1..k_count {
            if x[(k, l)] > x[(k - 1, l)] + tol {
                return false;
            }
        }
    }
    for k in 0..k_count {
        for l in 1..l_count {
            if x[(k, l - 1)] > x[(k, l)] + tol {
                return false;
            }
        }
    }
    true
}

fn max_complementarity(grid: &TypeGrid, x: &Matrix) -> f64 {
    let (k_count, l_count) = x.shape();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..k_count {
        for l in 0..l_count {
            let gap = grid.capacity(l) - x[(k, l)];
            for lp in l + 1..l_count {
                worst = worst.max((x[(k, lp)] - x[(k, l)]) * gap);
            }
        }
    }
    worst
}

/// Relaxed solve with the default iteration limit and no warm starts.
pub fn solve_multi_relaxed(
    instance: &MarketInstance,
    epsilon: f64,
    restarts: usize,
    seed: u64,
) -> Result<SolveResult> {
    solve_multi_relaxed_with(instance, &RelaxedOptions::new(epsilon, restarts, seed))
}

/// Multi-start feasible-direction search on the relaxed program.
///
/// Starts are the exact reduced optimum, the caller's warm starts and
/// `restarts` random greedy allocations. From each start the search moves
/// along rectangular patterns of cells; along a line the objective is
/// concave, so each step goes to the better of the linear-constraint
/// boundary and the point where supply meets the floor, shrinking by halves
/// (then bisecting) when the complementarity bound would be exceeded.
pub fn solve_multi_relaxed_with(
    instance: &MarketInstance,
    options: &RelaxedOptions,
) -> Result<SolveResult> {
    if options.epsilon.is_nan() || options.epsilon <= 0.0 {
        return Err(Error::Usage(format!(
            "relaxed solve needs epsilon > 0 (got {}); use solve_multi_reduced for the exact program",
            options.epsilon
        )));
    }
    if options.restarts == 0 {
        return Err(Error::Usage("relaxed solve needs at least one restart".into()));
    }
    let grid = instance.grid();
    let objective = Objective::new(instance);
    let eps = options.epsilon;

    let mut starts = vec![solve_multi_reduced(instance)?.contract.allocation().clone()];
    for warm in &options.warm_starts {
        if warm.shape() != (grid.num_valuations(), grid.num_capacities()) {
            return Err(Error::shape(
                "warm start",
                format!("{}x{}", grid.num_valuations(), grid.num_capacities()),
                format!("{}x{}", warm.rows(), warm.cols()),
            ));
        }
        if relaxed_feasible(grid, warm, eps, LINEAR_TOL)? {
            starts.push(warm.clone());
        } else {
            starts.push(round_to_greedy(grid, warm));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.restarts {
        let mut y: Vec<f64> = (0..grid.num_valuations())
            .map(|_| rng.random_range(0.0..=grid.max_capacity()))
            .collect();
        y.sort_by(|a, b| b.total_cmp(a));
        starts.push(reduced_allocation(grid, &y)?);
    }

    let directions = directions(grid.num_valuations(), grid.num_capacities());
    let runs: Vec<(Matrix, f64, usize)> = starts
        .into_par_iter()
        .map(|x| climb(grid, &objective, &directions, x, eps, options.max_iterations))
        .collect();

    let n_starts = runs.len();
    let mut iterations = 0;
    let mut best: Option<(Matrix, f64)> = None;
    for (x, value, steps) in runs {
        iterations += steps;
        let take = match &best {
            None => true,
            Some((bx, bv)) => prefer(value, &x, *bv, bx),
        };
        if take {
            best = Some((x, value));
        }
    }
    let (x, _) = best.expect("at least one start");
    let x = Matrix::from_fn(x.rows(), x.cols(), |k, l| x[(k, l)].clamp(0.0, grid.capacity(l)));
    let payment = column_payments(grid, &x, 1e-9)?;
    let contract = Contract::new(x, payment)?;
    finish(
        instance,
        contract,
        Method::MultiRelaxed,
        eps,
        Diagnostics {
            iterations,
            candidates: n_starts,
            pruned: 0,
            restarts: n_starts,
        },
    )
}

/// Solves along a decreasing epsilon schedule, warm-starting each stage
/// from the previous stage's answer.
pub fn solve_relaxed_schedule(
    instance: &MarketInstance,
    schedule: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<SolveResult> {
    let mut last: Option<SolveResult> = None;
    for &eps in schedule {
        let mut options = RelaxedOptions::new(eps, restarts, seed);
        if let Some(prev) = &last {
            options.warm_starts.push(prev.contract.allocation().clone());
        }
        last = Some(solve_multi_relaxed_with(instance, &options)?);
    }
    last.ok_or_else(|| Error::Usage("empty epsilon schedule".into()))
}

/// Rows rounded to `min(c^l, x[k][L])`, which is greedy and keeps the columns
/// monotone when the last column is.
fn round_to_greedy(grid: &TypeGrid, x: &Matrix) -> Matrix {
    let last = grid.num_capacities() - 1;
    let mut ceiling = grid.max_capacity();
    let y: Vec<f64> = (0..grid.num_valuations())
        .map(|k| {
            ceiling = x[(k, last)].clamp(0.0, ceiling);
            ceiling
        })
        .collect();
    Matrix::from_fn(grid.num_valuations(), grid.num_capacities(), |k, l| {
        grid.capacity(l).min(y[k])
    })
}

/// Unit patterns: row ranges over capacity suffixes, single-row capacity
/// ranges and single-column valuation ranges, in both signs.
fn directions(k_count: usize, l_count: usize) -> Vec<Matrix> {
    let mut shapes: Vec<(usize, usize, usize, usize)> = Vec::new();
    for k0 in 0..k_count {
        for k1 in k0..k_count {
            for l0 in 0..l_count {
                shapes.push((k0, k1, l0, l_count - 1));
            }
        }
    }
    for k in 0..k_count {
        for l0 in 0..l_count {
            for l1 in l0..l_count {
                shapes.push((k, k, l0, l1));
            }
        }
    }
    for l in 0..l_count {
        for k0 in 0..k_count {
            for k1 in k0..k_count {
                shapes.push((k0, k1, l, l));
            }
        }
    }
    shapes.sort_unstable();
    shapes.dedup();
    let mut out = Vec::with_capacity(shapes.len() * 2);
    for sign in [1.0, -1.0] {
        for &(k0, k1, l0, l1) in &shapes {
            out.push(Matrix::from_fn(k_count, l_count, |k, l| {
                if (k0..=k1).contains(&k) && (l0..=l1).contains(&l) {
                    sign
                } else {
                    0.0
                }
            }));
        }
    }
    out
}

/// Largest `t >= 0` keeping `x + t d` inside the linear constraints.
fn linear_step(grid: &TypeGrid, x: &Matrix, d: &Matrix) -> f64 {
    let (k_count, l_count) = x.shape();
    let mut t = f64::INFINITY;
    let mut limit = |slack: f64, rate: f64| {
        if rate > 0.0 {
            t = t.min((slack / rate).max(0.0));
        }
    };
    for l in 0..l_count {
        limit(grid.capacity(l) - x[(0, l)], d[(0, l)]);
        limit(x[(k_count - 1, l)], -d[(k_count - 1, l)]);
        for k in 1..k_count {
            limit(x[(k - 1, l)] - x[(k, l)], d[(k, l)] - d[(k - 1, l)]);
        }
    }
    for k in 0..k_count {
        for l in 1..l_count {
            limit(x[(k, l)] - x[(k, l - 1)], d[(k, l - 1)] - d[(k, l)]);
        }
    }
    t
}

fn shifted(x: &Matrix, d: &Matrix, t: f64) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |k, l| x[(k, l)] + t * d[(k, l)])
}

fn climb(
    grid: &TypeGrid,
    objective: &Objective,
    directions: &[Matrix],
    mut x: Matrix,
    eps: f64,
    max_iterations: usize,
) -> (Matrix, f64, usize) {
    let mut value = objective.value(&x);
    let mut steps = 0;
    while steps < max_iterations {
        // steepest pattern: single-cell moves are often pinned by the
        // complementarity bound of a neighbouring pair
        let mut best: Option<(Matrix, f64)> = None;
        for d in directions {
            let Some(candidate) = line_step(grid, objective, &x, d, eps) else {
                continue;
            };
            let cand_value = objective.value(&candidate);
            let floor = best.as_ref().map_or(value, |b| b.1);
            if cand_value > floor + improvement_floor(floor) {
                best = Some((candidate, cand_value));
            }
        }
        let Some((next, next_value)) = best else {
            break;
        };
        x = next;
        value = next_value;
        steps += 1;
    }
    (x, value, steps)
}

/// Best feasible point along `x + t d`, `t >= MIN_STEP`, if it improves.
fn line_step(grid: &TypeGrid, objective: &Objective, x: &Matrix, d: &Matrix, eps: f64) -> Option<Matrix> {
    let feasible = |y: &Matrix| linear_ok(grid, y, LINEAR_TOL) && max_complementarity(grid, y) <= eps;
    let t_max = linear_step(grid, x, d);
    if !t_max.is_finite() || t_max < MIN_STEP {
        return None;
    }
    let value = objective.value(x);
    let along = |t: f64| objective.value(&shifted(x, d, t));
    let mut t = t_max;
    let supply_rate = objective.supply(d);
    if objective.penalty_active && supply_rate != 0.0 {
        let kink = (objective.floor - objective.supply(x)) / supply_rate;
        if kink > MIN_STEP && kink < t_max && along(kink) >= along(t_max) {
            t = kink;
        }
    }
    if along(t) <= value + improvement_floor(value) {
        return None;
    }
    if !feasible(&shifted(x, d, t)) {
        let mut bad = t;
        while t >= MIN_STEP && !feasible(&shifted(x, d, t)) {
            bad = t;
            t *= 0.5;
        }
        if t < MIN_STEP {
            return None;
        }
        for _ in 0..40 {
            let mid = 0.5 * (t + bad);
            if feasible(&shifted(x, d, mid)) {
                t = mid;
            } else {
                bad = mid;
            }
        }
    }
    Some(shifted(x, d, t))
}

fn improvement_floor(value: f64) -> f64 {
    1e-13 * value.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::{compute_regret, regret_bound};
    use crate::model::{ClientDistribution, Item};

    fn two_capacity(alpha: f64, penalty: f64, floor: f64) -> MarketInstance {
        let grid = TypeGrid::new(vec![1.0], vec![5.0, 10.0]).unwrap();
        let probs = Matrix::from_rows(vec![vec![0.5], vec![0.5]]).unwrap();
        MarketInstance::new(grid, vec![ClientDistribution::new(probs).unwrap()], alpha, penalty, floor)
            .unwrap()
    }

    #[test]
    fn close_to_exact_with_small_regret() {
        let inst = two_capacity(2.0, 0.0, 0.0);
        let exact = solve_multi_reduced(&inst).unwrap();
        let r = solve_multi_relaxed(&inst, 1e-4, 4, 7).unwrap();
        assert_eq!(r.method, Method::MultiRelaxed);
        assert!((r.expected_utility - exact.expected_utility).abs() < 1e-2);
        let regret = compute_regret(inst.grid(), &r.contract).unwrap();
        assert!(regret <= regret_bound(inst.grid(), 1e-4).unwrap());
        assert!(relaxed_feasible(inst.grid(), r.contract.allocation(), 1e-4, 1e-9).unwrap());
    }

    #[test]
    fn relaxation_is_no_worse_than_exact() {
        let grid = TypeGrid::new(vec![1.0, 3.0], vec![2.0, 6.0]).unwrap();
        let probs = Matrix::from_rows(vec![vec![0.6, 0.0], vec![0.0, 0.4]]).unwrap();
        let inst = MarketInstance::new(grid, vec![ClientDistribution::new(probs).unwrap()], 2.0, 0.0, 0.0)
            .unwrap();
        let exact = solve_multi_reduced(&inst).unwrap();
        let relaxed = solve_multi_relaxed(&inst, 1e-2, 3, 1).unwrap();
        assert!(relaxed.expected_utility >= exact.expected_utility - 1e-12);
    }

    #[test]
    fn rejects_non_positive_epsilon() {
        let inst = two_capacity(2.0, 0.0, 0.0);
        for eps in [0.0, -1e-3, f64::NAN] {
            let err = solve_multi_relaxed(&inst, eps, 1, 0).unwrap_err();
            assert!(err.to_string().contains("solve_multi_reduced"), "{err}");
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let inst = two_capacity(0.5, 3.0, 4.0);
        let a = solve_multi_relaxed(&inst, 1e-3, 5, 42).unwrap();
        let b = solve_multi_relaxed(&inst, 1e-3, 5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn greedy_rounding_is_feasible_at_zero() {
        let grid = TypeGrid::new(vec![1.0, 2.0], vec![2.0, 4.0, 8.0]).unwrap();
        let x = Matrix::from_rows(vec![vec![1.5, 3.0, 7.0], vec![1.0, 1.2, 3.0]]).unwrap();
        let r = round_to_greedy(&grid, &x);
        assert!(relaxed_feasible(&grid, &r, 0.0, 0.0).unwrap());
        assert_eq!(r.row(0), &[2.0, 4.0, 7.0]);
    }

    #[test]
    fn schedule_ends_at_last_epsilon() {
        let inst = two_capacity(0.5, 3.0, 4.0);
        let r = solve_relaxed_schedule(&inst, &DEFAULT_SCHEDULE, 2, 3).unwrap();
        assert_eq!(r.epsilon, 1e-6);
        assert!(relaxed_feasible(inst.grid(), r.contract.allocation(), 1e-6, 1e-9).unwrap());
        assert!(r.contract.x(Item::new(0, 1)) >= r.contract.x(Item::new(0, 0)));
    }
}
