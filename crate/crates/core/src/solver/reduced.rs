use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Contract, MarketInstance, TypeGrid};
use crate::payments::optimal_payment_multi;

use super::{finish, prefer, tie_tol, Diagnostics, Method, Objective, SolveResult};

/// Greedy allocation `x[k][l] = min(c^l, y_k)`.
pub fn reduced_allocation(grid: &TypeGrid, y: &[f64]) -> Result<Matrix> {
    if y.len() != grid.num_valuations() {
        return Err(Error::shape("y", grid.num_valuations(), y.len()));
    }
    Ok(Matrix::from_fn(grid.num_valuations(), grid.num_capacities(), |k, l| {
        grid.capacity(l).min(y[k])
    }))
}

/// Exact optimum over greedy, valuation-monotone allocations.
///
/// Each row is `min(c^l, y_k)` with `y_1 >= ... >= y_K`. Within any fixed
/// choice of capacity segment per row the objective is concave and piecewise
/// linear, so some optimum has every `y_k` on a breakpoint `{0, c^1..c^L}`
/// except possibly one run of consecutive rows sharing a value at which the
/// expected supply equals the floor `D`. The search enumerates exactly those
/// points, depth first, with a bound that drops subtrees unable to beat the
/// incumbent.
pub fn solve_multi_reduced(instance: &MarketInstance) -> Result<SolveResult> {
    let grid = instance.grid();
    let objective = Objective::new(instance);
    let search = Search::new(grid, &objective);
    let mut state = State {
        y: vec![Slot::Fixed(0); grid.num_valuations()],
        best: None,
        candidates: 0,
        pruned: 0,
    };
    let top = search.breaks.len() - 1;
    search.visit(&mut state, 0, top, 0.0, 0.0, Block::Unused);

    let Some((_, y)) = state.best else {
        return Err(Error::Solver("reduced search produced no candidate".into()));
    };
    let allocation = reduced_allocation(grid, &y)?;
    let payment = optimal_payment_multi(grid, &allocation, 1e-9)?;
    let contract = Contract::new(allocation, payment)?;
    finish(
        instance,
        contract,
        Method::MultiReducedExact,
        0.0,
        Diagnostics {
            candidates: state.candidates,
            pruned: state.pruned,
            ..Diagnostics::default()
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    /// Index into the breakpoint list.
    Fixed(usize),
    /// Member of the run solved against the demand floor.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    Unused,
    /// Run open since `start`, capped by breakpoint `ceil`.
    Open { start: usize, ceil: usize },
    Closed { start: usize, end: usize, ceil: usize },
}

struct State {
    y: Vec<Slot>,
    best: Option<(f64, Vec<f64>)>,
    candidates: usize,
    pruned: usize,
}

struct Search<'a> {
    grid: &'a TypeGrid,
    objective: &'a Objective,
    /// `0, c^1, ..., c^L`.
    breaks: Vec<f64>,
    /// Row objective and supply at each breakpoint.
    g: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    /// Best objective of rows `k..` when capped at breakpoint `j`.
    suf_g: Vec<Vec<f64>>,
    /// Supply of rows `k..` all at breakpoint `j`.
    suf_h: Vec<Vec<f64>>,
    /// `max_{j' <= j} g[k][j']`.
    cap_g: Vec<Vec<f64>>,
}

impl<'a> Search<'a> {
    fn new(grid: &'a TypeGrid, objective: &'a Objective) -> Self {
        let (k_count, l_count) = (grid.num_valuations(), grid.num_capacities());
        let mut breaks = vec![0.0];
        breaks.extend_from_slice(grid.capacities());
        let m = breaks.len();
        let row_at = |table: &Matrix, k: usize, y: f64| -> f64 {
            (0..l_count).map(|l| table[(k, l)] * grid.capacity(l).min(y)).sum()
        };
        let g: Vec<Vec<f64>> = (0..k_count)
            .map(|k| breaks.iter().map(|&b| row_at(&objective.coef, k, b)).collect())
            .collect();
        let h: Vec<Vec<f64>> = (0..k_count)
            .map(|k| breaks.iter().map(|&b| row_at(&objective.weight, k, b)).collect())
            .collect();
        let mut suf_g = vec![vec![0.0; m]; k_count + 1];
        let mut suf_h = vec![vec![0.0; m]; k_count + 1];
        for k in (0..k_count).rev() {
            let mut running = f64::NEG_INFINITY;
            for j in 0..m {
                running = running.max(g[k][j] + suf_g[k + 1][j]);
                suf_g[k][j] = running;
                suf_h[k][j] = h[k][j] + suf_h[k + 1][j];
            }
        }
        let cap_g = g
            .iter()
            .map(|row| {
                let mut running = f64::NEG_INFINITY;
                row.iter()
                    .map(|&v| {
                        running = running.max(v);
                        running
                    })
                    .collect()
            })
            .collect();
        Search {
            grid,
            objective,
            breaks,
            g,
            h,
            suf_g,
            suf_h,
            cap_g,
        }
    }

    fn visit(&self, st: &mut State, k: usize, ceil: usize, g_acc: f64, h_acc: f64, block: Block) {
        let k_count = self.grid.num_valuations();
        if k == k_count {
            self.leaf(st, h_acc, block);
            return;
        }
        if let Some((best, _)) = &st.best {
            let (mut ub_g, mut ub_h) = (g_acc, h_acc);
            let run = match block {
                Block::Unused => None,
                Block::Open { start, ceil } => Some((start, k, ceil)),
                Block::Closed { start, end, ceil } => Some((start, end, ceil)),
            };
            if let Some((start, end, bc)) = run {
                for r in start..end {
                    ub_g += self.cap_g[r][bc];
                    ub_h += self.h[r][bc];
                }
            }
            ub_g += self.suf_g[k][ceil];
            ub_h += self.suf_h[k][ceil];
            let ub = ub_g + self.objective.penalty * self.objective.shortfall_term(ub_h);
            if ub < best - tie_tol(ub, *best) {
                st.pruned += 1;
                return;
            }
        }

        let can_open = self.objective.penalty_active && block == Block::Unused;
        let in_run = matches!(block, Block::Open { .. });
        if can_open || in_run {
            let next = match block {
                Block::Unused => Block::Open { start: k, ceil },
                other => other,
            };
            st.y[k] = Slot::Free;
            self.visit(st, k + 1, ceil, g_acc, h_acc, next);
        }
        let after = match block {
            Block::Open { start, ceil } => Block::Closed { start, end: k, ceil },
            other => other,
        };
        for j in (0..=ceil).rev() {
            st.y[k] = Slot::Fixed(j);
            self.visit(st, k + 1, j, g_acc + self.g[k][j], h_acc + self.h[k][j], after);
        }
    }

    fn leaf(&self, st: &mut State, h_fixed: f64, block: Block) {
        let k_count = self.grid.num_valuations();
        let (start, end, ceil) = match block {
            Block::Unused => (0, 0, 0),
            Block::Open { start, ceil } => (start, k_count, ceil),
            Block::Closed { start, end, ceil } => (start, end, ceil),
        };
        let mut y: Vec<f64> = st
            .y
            .iter()
            .map(|s| match s {
                Slot::Fixed(j) => self.breaks[*j],
                Slot::Free => f64::NAN,
            })
            .collect();
        if end > start {
            let lo = match st.y.get(end) {
                Some(Slot::Fixed(j)) => *j,
                _ => 0,
            };
            let Some(z) = self.crossing(start, end, lo, ceil, self.objective.floor - h_fixed) else {
                return;
            };
            for v in &mut y[start..end] {
                *v = z;
            }
        }
        st.candidates += 1;
        let x = Matrix::from_fn(k_count, self.grid.num_capacities(), |k, l| {
            self.grid.capacity(l).min(y[k])
        });
        let value = self.objective.value(&x);
        let better = match &st.best {
            None => true,
            Some((best, by)) => {
                let bx = Matrix::from_fn(k_count, self.grid.num_capacities(), |k, l| {
                    self.grid.capacity(l).min(by[k])
                });
                prefer(value, &x, *best, &bx)
            }
        };
        if better {
            st.best = Some((value, y));
        }
    }

    /// Common value `z` strictly between breakpoints `lo` and `hi` at which
    /// rows `start..end` supply `target`; `None` when no interior crossing.
    fn crossing(&self, start: usize, end: usize, lo: usize, hi: usize, target: f64) -> Option<f64> {
        let supply = |j: usize| -> f64 { (start..end).map(|r| self.h[r][j]).sum() };
        let scale = 1e-12 * target.abs().max(1.0);
        if !(supply(lo) < target - scale && target < supply(hi) - scale) {
            return None;
        }
        for j in lo..hi {
            let (s0, s1) = (supply(j), supply(j + 1));
            if s0 <= target && target < s1 {
                let (b0, b1) = (self.breaks[j], self.breaks[j + 1]);
                let z = b0 + (target - s0) / (s1 - s0) * (b1 - b0);
                return Some(z.clamp(b0, b1));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::check_theorem1;
    use crate::model::{ClientDistribution, Item};
    use crate::solver::solve_single_capacity;

    fn uniform(grid: &TypeGrid) -> ClientDistribution {
        let cells = (grid.num_valuations() * grid.num_capacities()) as f64;
        ClientDistribution::new(Matrix::filled(
            grid.num_capacities(),
            grid.num_valuations(),
            1.0 / cells,
        ))
        .unwrap()
    }

    #[test]
    fn full_recycling_with_positive_margin() {
        let grid = TypeGrid::new(vec![1.0], vec![5.0, 10.0]).unwrap();
        let inst = MarketInstance::new(grid.clone(), vec![uniform(&grid)], 2.0, 0.0, 0.0).unwrap();
        let r = solve_multi_reduced(&inst).unwrap();
        assert_eq!(r.contract.allocation().row(0), &[5.0, 10.0]);
        assert_eq!(r.contract.payment().row(0), &[5.0, 10.0]);
        assert!(check_theorem1(&grid, &r.contract, 1e-8).unwrap().properties_hold());
        assert!((r.expected_utility - 7.5).abs() < 1e-12);
    }

    #[test]
    fn interior_crossing_meets_floor() {
        // alpha below every valuation, penalty large: buy exactly D in expectation
        let grid = TypeGrid::new(vec![1.0, 2.0], vec![4.0, 8.0]).unwrap();
        let inst = MarketInstance::new(grid.clone(), vec![uniform(&grid)], 0.5, 10.0, 2.5).unwrap();
        let r = solve_multi_reduced(&inst).unwrap();
        assert!(r.aux_t.abs() < 1e-9, "aux_t {}", r.aux_t);
        let supply: f64 = grid.items().map(|it| 0.25 * r.contract.x(it)).sum();
        assert!((supply - 2.5).abs() < 1e-9);
        // the cheaper low-valuation row carries the whole floor at y = 6
        assert!((r.contract.x(Item::new(0, 1)) - 6.0).abs() < 1e-9);
        assert_eq!(r.contract.x(Item::new(1, 1)), 0.0);
        assert!(check_theorem1(&grid, &r.contract, 1e-8).unwrap().properties_hold());
    }

    #[test]
    fn matches_single_capacity_program() {
        let grid = TypeGrid::new(vec![1.0, 2.0, 3.0], vec![6.0]).unwrap();
        let probs = Matrix::from_rows(vec![vec![0.2, 0.5, 0.3]]).unwrap();
        for (alpha, m, d) in [(2.5, 0.0, 0.0), (1.5, 4.0, 3.0), (0.5, 1.0, 2.0), (3.5, 2.0, 9.0)] {
            let inst = MarketInstance::new(
                grid.clone(),
                vec![ClientDistribution::new(probs.clone()).unwrap()],
                alpha,
                m,
                d,
            )
            .unwrap();
            let a = solve_multi_reduced(&inst).unwrap();
            let b = solve_single_capacity(&inst).unwrap();
            assert!((a.expected_utility - b.expected_utility).abs() < 1e-9);
            assert!(a.contract.allocation().max_abs_diff(b.contract.allocation()) < 1e-8);
        }
    }

    #[test]
    fn zero_weight_rows_still_greedy() {
        let grid = TypeGrid::new(vec![1.0, 3.0], vec![2.0, 5.0]).unwrap();
        let client = ClientDistribution::point_mass(&grid, Item::new(0, 1)).unwrap();
        let inst = MarketInstance::new(grid.clone(), vec![client], 2.0, 0.0, 0.0).unwrap();
        let r = solve_multi_reduced(&inst).unwrap();
        assert!(check_theorem1(&grid, &r.contract, 1e-8).unwrap().properties_hold());
        assert_eq!(r.contract.x(Item::new(0, 1)), 5.0);
    }
}
