//! Provider-optimal payments for a given allocation.
//!
//! For every capacity column the top valuation is paid exactly its cost,
//! `p_K = v^K x_K`, and each lower valuation is paid just enough to be
//! indifferent to the item one valuation step up:
//! `p_k = p_{k+1} + v^k (x_k - x_{k+1})`.

use crate::error::{Error, Result};
use crate::feasibility::check_resource_greedy;
use crate::matrix::Matrix;
use crate::model::{Contract, TypeGrid};

/// Optimal payment column for a single-capacity grid.
///
/// Requires `c >= x_1 >= ... >= x_K >= 0`; violations smaller than `tol`
/// are accepted and treated as zero.
pub fn optimal_payment_single(grid: &TypeGrid, allocation: &[f64], tol: f64) -> Result<Vec<f64>> {
    if grid.num_capacities() != 1 {
        return Err(Error::Usage(format!(
            "single-capacity payments need L = 1, grid has L = {}",
            grid.num_capacities()
        )));
    }
    if allocation.len() != grid.num_valuations() {
        return Err(Error::shape(
            "allocation",
            grid.num_valuations(),
            allocation.len(),
        ));
    }
    check_column(grid, 0, allocation, tol)?;
    Ok(column_recursion(grid.valuations(), allocation))
}

/// Optimal payment matrix for an allocation satisfying P1, P2 and P6.
pub fn optimal_payment_multi(grid: &TypeGrid, allocation: &Matrix, tol: f64) -> Result<Matrix> {
    let payment = column_payments(grid, allocation, tol)?;
    let probe = Contract::from_raw(allocation.clone(), Matrix::zeros(allocation.rows(), allocation.cols()))?;
    let greedy = check_resource_greedy(grid, &probe, tol)?;
    if !greedy.passed() {
        return Err(Error::precondition(
            "P6",
            greedy_violation_location(grid, allocation, tol),
            format!(
                "allocation is not resource greedy (monotone margin {}, maximal margin {})",
                greedy.monotone.margin, greedy.maximal.margin
            ),
        ));
    }
    Ok(payment)
}

/// Applies the per-column payment rule after checking only P1 and P2.
///
/// Used for menus from the relaxed program, whose rows are greedy only up to
/// the relaxation.
pub fn column_payments(grid: &TypeGrid, allocation: &Matrix, tol: f64) -> Result<Matrix> {
    let (k_count, l_count) = (grid.num_valuations(), grid.num_capacities());
    if allocation.shape() != (k_count, l_count) {
        return Err(Error::shape(
            "allocation",
            format!("{k_count}x{l_count}"),
            format!("{}x{}", allocation.rows(), allocation.cols()),
        ));
    }
    let mut payment = Matrix::zeros(k_count, l_count);
    for l in 0..l_count {
        let column = allocation.column(l);
        check_column(grid, l, &column, tol)?;
        for (k, p) in column_recursion(grid.valuations(), &column).into_iter().enumerate() {
            payment[(k, l)] = p;
        }
    }
    Ok(payment)
}

/// Allocation paired with its optimal payments.
pub fn optimal_contract(grid: &TypeGrid, allocation: Matrix, tol: f64) -> Result<Contract> {
    let payment = optimal_payment_multi(grid, &allocation, tol)?;
    Contract::new(allocation, payment)
}

fn column_recursion(valuations: &[f64], column: &[f64]) -> Vec<f64> {
    let k_count = column.len();
    let mut p = vec![0.0; k_count];
    let top = k_count - 1;
    p[top] = valuations[top] * column[top].max(0.0);
    for k in (0..top).rev() {
        p[k] = p[k + 1] + valuations[k] * (column[k] - column[k + 1]).max(0.0);
    }
    p
}

fn check_column(grid: &TypeGrid, l: usize, column: &[f64], tol: f64) -> Result<()> {
    let cap = grid.capacity(l);
    for (k, &x) in column.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::precondition("P1", format!("(k={k}, l={l})"), "non-finite allocation"));
        }
        if x > cap + tol {
            return Err(Error::precondition(
                "P1",
                format!("(k={k}, l={l})"),
                format!("allocation {x} exceeds capacity {cap}"),
            ));
        }
        if x < -tol {
            return Err(Error::precondition(
                "P2",
                format!("(k={k}, l={l})"),
                format!("allocation {x} is negative"),
            ));
        }
        if k > 0 && x > column[k - 1] + tol {
            return Err(Error::precondition(
                "P2",
                format!("(k={k}, l={l})"),
                format!(
                    "allocation {x} exceeds {} at the lower valuation k={}",
                    column[k - 1],
                    k - 1
                ),
            ));
        }
    }
    Ok(())
}

fn greedy_violation_location(grid: &TypeGrid, allocation: &Matrix, tol: f64) -> String {
    for k in 0..grid.num_valuations() {
        for lo in 0..grid.num_capacities() {
            for hi in lo + 1..grid.num_capacities() {
                let (x_lo, x_hi) = (allocation[(k, lo)], allocation[(k, hi)]);
                if x_hi < x_lo - tol
                    || (x_hi > x_lo + tol && (x_lo - grid.capacity(lo)).abs() > tol)
                {
                    return format!("(k={k}, l={lo}) vs (k={k}, l={hi})");
                }
            }
        }
    }
    "unknown".to_string()
}
