use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Contract, MarketInstance};
use crate::payments::optimal_payment_single;

use super::lp::{LinearProgram, LpOutcome};
use super::{finish, Diagnostics, Method, Objective, SolveResult};

const MAX_PIVOTS: usize = 10_000;

/// One-capacity program as a linear program.
///
/// Variables are `x_1..x_K` and, when the penalty can bind, the shortfall
/// `u = -t >= max(0, D - supply)`:
///
/// ```text
/// max  sum_k a_k x_k - M u
/// s.t. c >= x_1 >= ... >= x_K >= 0
///      u >= D - sum_k w_k x_k,  u >= 0
/// ```
///
/// Optimal ties are broken by re-solving with the objective held at its
/// optimum: first maximizing total allocation, then each `x_k` in order.
pub fn solve_single_capacity(instance: &MarketInstance) -> Result<SolveResult> {
    let grid = instance.grid();
    if grid.num_capacities() != 1 {
        return Err(Error::Usage(format!(
            "single-capacity solver needs L = 1, instance has L = {}",
            grid.num_capacities()
        )));
    }
    let k_count = grid.num_valuations();
    let cap = grid.capacity(0);
    let objective = Objective::new(instance);
    let with_shortfall = objective.penalty_active;
    let n = k_count + usize::from(with_shortfall);

    let mut costs: Vec<f64> = (0..k_count).map(|k| objective.coef[(k, 0)]).collect();
    if with_shortfall {
        costs.push(-objective.penalty);
    }

    let mut lp = LinearProgram::new(costs.clone());
    let mut row = vec![0.0; n];
    row[0] = 1.0;
    lp.add_le(row, cap);
    for k in 0..k_count.saturating_sub(1) {
        let mut row = vec![0.0; n];
        row[k] = -1.0;
        row[k + 1] = 1.0;
        lp.add_le(row, 0.0);
    }
    if with_shortfall {
        let mut row: Vec<f64> = (0..k_count).map(|k| objective.weight[(k, 0)]).collect();
        row.push(1.0);
        lp.add_ge(row, objective.floor);
    }

    let mut pivots = 0;
    let (mut x, best) = run(&lp, &mut pivots)?;

    // lexicographic tie-breaking
    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(k_count + 1);
    let mut total = vec![1.0; k_count];
    total.resize(n, 0.0);
    stages.push(total);
    for k in 0..k_count {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        stages.push(e);
    }
    // held at the optimum exactly; phase one absorbs the roundoff
    lp.add_ge(costs, best);
    for stage in stages {
        lp.set_objective(stage.clone());
        let (sx, value) = run(&lp, &mut pivots)?;
        x = sx;
        lp.add_ge(stage, value - 1e-12 * value.abs().max(1.0));
    }

    // snap roundoff back onto the chain c >= x_1 >= ... >= x_K >= 0
    let mut column = Vec::with_capacity(k_count);
    let mut ceiling = cap;
    let snap = 1e-12 * cap.max(1.0);
    for &xk in x.iter().take(k_count) {
        let mut v = xk.clamp(0.0, ceiling);
        if v < snap {
            v = 0.0;
        } else if ceiling - v < snap {
            v = ceiling;
        }
        column.push(v);
        ceiling = v;
    }
    let payment = optimal_payment_single(grid, &column, 1e-9)?;
    let contract = Contract::new(
        Matrix::from_fn(k_count, 1, |k, _| column[k]),
        Matrix::from_fn(k_count, 1, |k, _| payment[k]),
    )?;
    finish(
        instance,
        contract,
        Method::SingleExact,
        0.0,
        Diagnostics {
            iterations: pivots,
            ..Diagnostics::default()
        },
    )
}

fn run(lp: &LinearProgram, pivots: &mut usize) -> Result<(Vec<f64>, f64)> {
    match lp.solve(MAX_PIVOTS)? {
        LpOutcome::Optimal { x, value, pivots: p } => {
            *pivots += p;
            Ok((x, value))
        }
        LpOutcome::Infeasible => Err(Error::Solver("single-capacity program infeasible".into())),
        LpOutcome::Unbounded => Err(Error::Solver("single-capacity program unbounded".into())),
    }
}
