//! Brute-force reference solver.
//!
//! Independent of the substituted-coefficient form: every candidate is priced
//! with the payment recursion and scored with the provider's expected utility
//! summed term by term.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{MarketInstance, TypeGrid};
use crate::payments::optimal_contract;

use super::{finish, prefer, tie_tol, Diagnostics, Method, SolveResult};

pub const ORACLE_CANDIDATE_LIMIT: u128 = 10_000_000;

/// Number of non-increasing `y` vectors the oracle would enumerate.
pub fn oracle_candidate_count(instance: &MarketInstance, grid_step: f64) -> Result<u128> {
    let values = candidate_values(instance, grid_step)?;
    Ok(multichoose(values.len() as u128, instance.grid().num_valuations() as u128))
}

/// Maximizes expected utility over `x = min(c^l, y_k)` with every `y_k` drawn
/// from the lattice `{0, s, 2s, ...}`, the capacities, and the values where
/// the top rows alone meet the demand floor.
pub fn oracle_grid_search(instance: &MarketInstance, grid_step: f64) -> Result<SolveResult> {
    let values = candidate_values(instance, grid_step)?;
    let grid = instance.grid();
    let k_count = grid.num_valuations();
    let count = multichoose(values.len() as u128, k_count as u128);
    if count > ORACLE_CANDIDATE_LIMIT {
        return Err(Error::TooLarge {
            count,
            limit: ORACLE_CANDIDATE_LIMIT,
        });
    }
    let scorer = Scorer::new(instance);

    // the bottom row is fixed per task; rows above can only be larger
    let partial: Vec<Option<(f64, Vec<f64>)>> = (0..values.len())
        .into_par_iter()
        .map(|i| {
            let mut y = vec![0.0; k_count];
            y[k_count - 1] = values[i];
            let mut best = None;
            scorer.descend(&values, k_count - 1, i, &mut y, &mut best);
            best
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in partial.into_iter().flatten() {
        if scorer.better(&cand, best.as_ref()) {
            best = Some(cand);
        }
    }
    let (_, y) = best.ok_or_else(|| Error::Solver("oracle enumerated no candidate".into()))?;
    let allocation = Matrix::from_fn(k_count, grid.num_capacities(), |k, l| {
        grid.capacity(l).min(y[k])
    });
    let contract = optimal_contract(grid, allocation, 1e-9)?;
    finish(
        instance,
        contract,
        Method::Oracle,
        0.0,
        Diagnostics {
            candidates: usize::try_from(count).unwrap_or(usize::MAX),
            ..Diagnostics::default()
        },
    )
}

fn multichoose(n: u128, k: u128) -> u128 {
    // C(n + k - 1, k)
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n + i) / (i + 1);
    }
    acc
}

fn candidate_values(instance: &MarketInstance, grid_step: f64) -> Result<Vec<f64>> {
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::invalid("grid_step", format!("must be finite and positive, got {grid_step}")));
    }
    let grid = instance.grid();
    let top = grid.max_capacity();
    let steps = (top / grid_step + 1e-9).floor();
    if steps > ORACLE_CANDIDATE_LIMIT as f64 {
        return Err(Error::TooLarge {
            count: steps as u128,
            limit: ORACLE_CANDIDATE_LIMIT,
        });
    }
    let mut values: Vec<f64> = (0..=steps as u64).map(|i| i as f64 * grid_step).collect();
    values.extend_from_slice(grid.capacities());
    if !instance.penalty_inactive() {
        let weights = instance.aggregate_weights();
        for rows in 1..=grid.num_valuations() {
            let supply = |z: f64| -> f64 {
                (0..rows)
                    .flat_map(|k| (0..grid.num_capacities()).map(move |l| (k, l)))
                    .map(|(k, l)| weights.matrix()[(l, k)] * grid.capacity(l).min(z))
                    .sum()
            };
            if let Some(z) = invert(grid, supply, instance.demand_floor()) {
                values.push(z);
            }
        }
    }
    values.retain(|v| *v <= top);
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * top.max(1.0));
    Ok(values)
}

/// Solves `supply(z) = target` on `[0, c^L]` for a non-decreasing piecewise
/// linear `supply` with kinks at the capacities.
fn invert(grid: &TypeGrid, supply: impl Fn(f64) -> f64, target: f64) -> Option<f64> {
    let mut lo = 0.0;
    let mut s_lo = supply(lo);
    for &hi in grid.capacities() {
        let s_hi = supply(hi);
        if s_lo < target && target <= s_hi {
            return Some(lo + (target - s_lo) / (s_hi - s_lo) * (hi - lo));
        }
        lo = hi;
        s_lo = s_hi;
    }
    None
}

struct Scorer<'a> {
    grid: &'a TypeGrid,
    /// Aggregate weight per item, `K x L`.
    weight: Matrix,
    alpha: f64,
    penalty: f64,
    floor: f64,
}

impl<'a> Scorer<'a> {
    fn new(instance: &'a MarketInstance) -> Self {
        Scorer {
            grid: instance.grid(),
            weight: instance.aggregate_weights().matrix().transpose(),
            alpha: instance.alpha(),
            penalty: instance.penalty(),
            floor: instance.demand_floor(),
        }
    }

    /// Fills rows `k-1, ..., 0` with values at index `>= i` and scores each
    /// completed `y`. Payments are built bottom-up alongside.
    fn descend(
        &self,
        values: &[f64],
        k: usize,
        i: usize,
        y: &mut Vec<f64>,
        best: &mut Option<(f64, Vec<f64>)>,
    ) {
        if k == 0 {
            let cand = (self.score(y), y.clone());
            if self.better(&cand, best.as_ref()) {
                *best = Some(cand);
            }
            return;
        }
        for j in i..values.len() {
            y[k - 1] = values[j];
            self.descend(values, k - 1, j, y, best);
        }
    }

    fn score(&self, y: &[f64]) -> f64 {
        let k_count = y.len();
        let mut utility = 0.0;
        let mut supply = 0.0;
        for l in 0..self.grid.num_capacities() {
            let cap = self.grid.capacity(l);
            let mut pay = 0.0;
            let mut above = 0.0;
            for k in (0..k_count).rev() {
                let x = cap.min(y[k]);
                pay = if k == k_count - 1 {
                    self.grid.valuation(k) * x
                } else {
                    pay + self.grid.valuation(k) * (x - above)
                };
                above = x;
                let w = self.weight[(k, l)];
                utility += w * (self.alpha * x - pay);
                supply += w * x;
            }
        }
        utility + self.penalty * (supply - self.floor).min(0.0)
    }

    fn better(&self, a: &(f64, Vec<f64>), b: Option<&(f64, Vec<f64>)>) -> bool {
        let Some(b) = b else { return true };
        if a.0 > b.0 + tie_tol(a.0, b.0) {
            return true;
        }
        if a.0 < b.0 - tie_tol(a.0, b.0) {
            return false;
        }
        let to_x = |y: &[f64]| {
            Matrix::from_fn(y.len(), self.grid.num_capacities(), |k, l| {
                self.grid.capacity(l).min(y[k])
            })
        };
        prefer(a.0, &to_x(&a.1), b.0, &to_x(&b.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClientDistribution, Item};
    use crate::solver::solve_single_capacity;

    #[test]
    fn counts_multisets() {
        assert_eq!(multichoose(4, 1), 4);
        assert_eq!(multichoose(4, 2), 10);
        assert_eq!(multichoose(5, 3), 35);
    }

    #[test]
    fn positive_margin_recycles_everything() {
        let grid = TypeGrid::new(vec![1.0, 2.0], vec![1.0, 3.0]).unwrap();
        let probs = Matrix::filled(2, 2, 0.25);
        let inst = MarketInstance::new(grid.clone(), vec![ClientDistribution::new(probs).unwrap()], 3.0, 0.0, 0.0)
            .unwrap();
        let r = oracle_grid_search(&inst, 0.5).unwrap();
        for it in grid.items() {
            assert_eq!(r.contract.x(it), grid.capacity(it.l));
        }
    }

    #[test]
    fn two_point_lattice_matches_linear_program() {
        let grid = TypeGrid::new(vec![1.0], vec![10.0]).unwrap();
        for (alpha, m, d) in [(2.0, 0.0, 0.0), (0.5, 0.0, 0.0), (0.5, 5.0, 10.0)] {
            let client = ClientDistribution::point_mass(&grid, Item::new(0, 0)).unwrap();
            let inst = MarketInstance::new(grid.clone(), vec![client], alpha, m, d).unwrap();
            let o = oracle_grid_search(&inst, 10.0).unwrap();
            let s = solve_single_capacity(&inst).unwrap();
            assert!((o.expected_utility - s.expected_utility).abs() < 1e-9);
        }
    }

    #[test]
    fn refuses_huge_lattices() {
        let grid = TypeGrid::new(vec![1.0, 2.0, 3.0], vec![10.0]).unwrap();
        let probs = Matrix::filled(1, 3, 1.0 / 3.0);
        let inst = MarketInstance::new(grid, vec![ClientDistribution::new(probs).unwrap()], 1.0, 0.0, 0.0)
            .unwrap();
        match oracle_grid_search(&inst, 1e-4) {
            Err(Error::TooLarge { count, limit }) => assert!(count > limit),
            other => panic!("expected size error, got {other:?}"),
        }
    }
}
