//! Contract audits: resource feasibility, resource greediness, incentive
//! compatibility (joint and per-dimension), individual rationality, the six
//! structural properties P1-P6 of a feasible menu, and the regret metric.
//!
//! Every check reports a signed slack (`margin`): non-negative means the
//! constraint holds, negative is the size of the worst violation. Margins of
//! IC/IR checks are in money units, margins of feasibility and greediness
//! checks in resource units. A check with nothing to compare (for example
//! capacity IC on a one-capacity grid) reports an infinite margin.
//!
//! All checks enumerate every pair of menu items; grids are expected to be small.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{utility_unchecked, Contract, Item, TypeGrid};

/// Default tolerance for audit verdicts.
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_as_infinite")]
    pub margin: f64,
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn null_as_infinite<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl Check {
    fn from_margin(margin: f64, tol: f64) -> Self {
        Check {
            passed: margin >= -tol,
            margin,
        }
    }

    fn and(self, other: Check) -> Check {
        Check {
            passed: self.passed && other.passed,
            margin: self.margin.min(other.margin),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyCheck {
    pub monotone: Check,
    pub maximal: Check,
}

impl GreedyCheck {
    pub fn passed(&self) -> bool {
        self.monotone.passed && self.maximal.passed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecomposedIc {
    pub valuation: Check,
    pub capacity: Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tolerance: f64,
    pub resource_feasible: Check,
    pub greedy_monotone: Check,
    pub greedy_maximal: Check,
    pub ic_valuation: Check,
    pub ic_capacity: Check,
    pub ic_full: Check,
    pub ir: Check,
    pub p1: Check,
    pub p2: Check,
    pub p3: Check,
    pub p4: Check,
    pub p5: Check,
    pub p6: Check,
    pub worst_violation: Option<Violation>,
    pub regret: f64,
    pub epsilon: f64,
    pub regret_bound: f64,
    /// Regret is above `(v^K - v^1) sqrt(epsilon)`, the constant obtained when
    /// both capacity directions are bounded separately. Informational only.
    pub regret_exceeds_tight_bound: bool,
}

impl AuditReport {
    /// Conjunction of P1-P6.
    pub fn properties_hold(&self) -> bool {
        [self.p1, self.p2, self.p3, self.p4, self.p5, self.p6]
            .iter()
            .all(|c| c.passed)
    }

    /// Feasibility from the definitions: resource feasible, greedy, IC and IR.
    pub fn feasible_by_definition(&self) -> bool {
        self.resource_feasible.passed
            && self.greedy_monotone.passed
            && self.greedy_maximal.passed
            && self.ic_full.passed
            && self.ir.passed
    }

    pub fn named_checks(&self) -> [(&'static str, Check); 13] {
        [
            ("P1", self.p1),
            ("P2", self.p2),
            ("P3", self.p3),
            ("P4", self.p4),
            ("P5", self.p5),
            ("P6", self.p6),
            ("resource_feasible", self.resource_feasible),
            ("greedy_monotone", self.greedy_monotone),
            ("greedy_maximal", self.greedy_maximal),
            ("ic_valuation", self.ic_valuation),
            ("ic_capacity", self.ic_capacity),
            ("ic_full", self.ic_full),
            ("ir", self.ir),
        ]
    }
}

/// Utility of type `item` when it picks its own menu entry.
pub fn truthful_utility(grid: &TypeGrid, contract: &Contract, item: Item) -> f64 {
    utility_unchecked(grid, contract, item.k, item)
}

/// `x_{v^k}^{c^l} <= c^l` for every item.
pub fn check_resource_feasibility(grid: &TypeGrid, contract: &Contract, tol: f64) -> Result<Check> {
    contract.check_shape(grid)?;
    let margin = grid
        .items()
        .map(|it| grid.capacity(it.l) - contract.x(it))
        .fold(f64::INFINITY, f64::min);
    Ok(Check::from_margin(margin, tol))
}

/// Monotonicity in capacity and maximal recycling for dominated types.
pub fn check_resource_greedy(grid: &TypeGrid, contract: &Contract, tol: f64) -> Result<GreedyCheck> {
    contract.check_shape(grid)?;
    let (k_count, l_count) = (grid.num_valuations(), grid.num_capacities());
    let mut monotone = f64::INFINITY;
    let mut maximal = f64::INFINITY;
    for k in 0..k_count {
        for hi in 0..l_count {
            for lo in 0..l_count {
                if hi == lo {
                    continue;
                }
                let x_hi = contract.x(Item::new(k, hi));
                let x_lo = contract.x(Item::new(k, lo));
                if hi > lo {
                    monotone = monotone.min(x_hi - x_lo);
                }
                if x_hi > x_lo + tol {
                    maximal = maximal.min(-(x_lo - grid.capacity(lo)).abs());
                }
            }
        }
    }
    Ok(GreedyCheck {
        monotone: Check::from_margin(monotone, tol),
        maximal: Check::from_margin(maximal, tol),
    })
}

/// Joint incentive compatibility: the menu is resource feasible and no type
/// gains by picking any other item it can afford (`x <= c^l`).
///
/// The margin covers the pairwise utility comparisons only; an infeasible
/// menu fails regardless of its margin.
pub fn check_ic_full(grid: &TypeGrid, contract: &Contract, tol: f64) -> Result<Check> {
    let feasible = check_resource_feasibility(grid, contract, tol)?;
    let mut margin = f64::INFINITY;
    for truth in grid.items() {
        let own = truthful_utility(grid, contract, truth);
        let cap = grid.capacity(truth.l);
        for dev in grid.items() {
            if dev == truth || contract.x(dev) > cap + tol {
                continue;
            }
            margin = margin.min(own - utility_unchecked(grid, contract, truth.k, dev));
        }
    }
    let mut check = Check::from_margin(margin, tol);
    check.passed &= feasible.passed;
    Ok(check)
}

/// Valuation IC inside each capacity column, and capacity IC inside each
/// valuation row restricted to affordable deviations.
pub fn check_ic_decomposed(grid: &TypeGrid, contract: &Contract, tol: f64) -> Result<DecomposedIc> {
    contract.check_shape(grid)?;
    let (k_count, l_count) = (grid.num_valuations(), grid.num_capacities());
    let mut valuation = f64::INFINITY;
    let mut capacity = f64::INFINITY;
    for truth in grid.items() {
        let own = truthful_utility(grid, contract, truth);
        for k2 in (0..k_count).filter(|&k2| k2 != truth.k) {
            let dev = Item::new(k2, truth.l);
            valuation = valuation.min(own - utility_unchecked(grid, contract, truth.k, dev));
        }
        for l2 in (0..l_count).filter(|&l2| l2 != truth.l) {
            let dev = Item::new(truth.k, l2);
            if contract.x(dev) <= grid.capacity(truth.l) + tol {
                capacity = capacity.min(own - utility_unchecked(grid, contract, truth.k, dev));
            }
        }
    }
    Ok(DecomposedIc {
        valuation: Check::from_margin(valuation, tol),
        capacity: Check::from_margin(capacity, tol),
    })
}

/// Non-negative truthful utility for every type.
pub fn check_ir(grid: &TypeGrid, contract: &Contract, tol: f64) -> Result<Check> {
    contract.check_shape(grid)?;
    let margin = grid
        .items()
        .map(|it| truthful_utility(grid, contract, it))
        .fold(f64::INFINITY, f64::min);
    Ok(Check::from_margin(margin, tol))
}

/// P2: each capacity column lies in `[0, c^l]` and is non-increasing in valuation.
fn check_p2(grid: &TypeGrid, contract: &Contract, tol: f64) -> Check {
    let k_count = grid.num_valuations();
    let mut margin = f64::INFINITY;
    for l in 0..grid.num_capacities() {
        let cap = grid.capacity(l);
        for p in 0..k_count {
            let xp = contract.x(Item::new(p, l));
            margin = margin.min(xp).min(cap - xp);
            for q in p + 1..k_count {
                margin = margin.min(xp - contract.x(Item::new(q, l)));
            }
        }
    }
    Check::from_margin(margin, tol)
}

/// P3: `v^p dx <= dp <= v^q dx` for every valuation pair `p < q` of a column.
fn check_p3(grid: &TypeGrid, contract: &Contract, tol: f64) -> Check {
    let k_count = grid.num_valuations();
    let mut margin = f64::INFINITY;
    for l in 0..grid.num_capacities() {
        for p in 0..k_count {
            for q in p + 1..k_count {
                let (a, b) = (Item::new(p, l), Item::new(q, l));
                let dx = contract.x(a) - contract.x(b);
                let dp = contract.p(a) - contract.p(b);
                let lower = dp - grid.valuation(p) * dx;
                let upper = grid.valuation(q) * dx - dp;
                margin = margin.min(lower).min(upper);
            }
        }
    }
    Check::from_margin(margin, tol)
}

/// P5: the highest valuation row has non-negative utility.
fn check_p5(grid: &TypeGrid, contract: &Contract, tol: f64) -> Check {
    let top = grid.num_valuations() - 1;
    let margin = (0..grid.num_capacities())
        .map(|l| truthful_utility(grid, contract, Item::new(top, l)))
        .fold(f64::INFINITY, f64::min);
    Check::from_margin(margin, tol)
}

/// Full audit without a relaxation parameter (regret bound is zero).
pub fn check_theorem1(grid: &TypeGrid, contract: &Contract, tol: f64) -> Result<AuditReport> {
    audit(grid, contract, tol, 0.0)
}

/// Full audit; `epsilon` is the complementarity relaxation the menu was
/// produced with and only affects the reported regret bound.
pub fn audit(grid: &TypeGrid, contract: &Contract, tol: f64, epsilon: f64) -> Result<AuditReport> {
    let resource_feasible = check_resource_feasibility(grid, contract, tol)?;
    let greedy = check_resource_greedy(grid, contract, tol)?;
    let decomposed = check_ic_decomposed(grid, contract, tol)?;
    let ic_full = check_ic_full(grid, contract, tol)?;
    let ir = check_ir(grid, contract, tol)?;
    let regret = compute_regret(grid, contract)?;
    let bound = regret_bound(grid, epsilon)?;
    let tight = tight_regret_bound(grid, epsilon)?;

    let mut report = AuditReport {
        tolerance: tol,
        resource_feasible,
        greedy_monotone: greedy.monotone,
        greedy_maximal: greedy.maximal,
        ic_valuation: decomposed.valuation,
        ic_capacity: decomposed.capacity,
        ic_full,
        ir,
        p1: resource_feasible,
        p2: check_p2(grid, contract, tol),
        p3: check_p3(grid, contract, tol),
        p4: decomposed.capacity,
        p5: check_p5(grid, contract, tol),
        p6: greedy.monotone.and(greedy.maximal),
        worst_violation: None,
        regret,
        epsilon,
        regret_bound: bound,
        regret_exceeds_tight_bound: regret > tight + tol,
    };
    report.worst_violation = report
        .named_checks()
        .iter()
        .filter(|(_, c)| !c.passed && c.margin.is_finite())
        .min_by(|a, b| a.1.margin.total_cmp(&b.1.margin))
        .map(|(name, c)| Violation {
            constraint: name.to_string(),
            magnitude: -c.margin,
        });
    Ok(report)
}

/// Largest utility gain any type obtains by picking an affordable item other
/// than its own, floored at zero. Computed exactly, with no tolerance.
pub fn compute_regret(grid: &TypeGrid, contract: &Contract) -> Result<f64> {
    contract.check_shape(grid)?;
    let mut regret: f64 = 0.0;
    for truth in grid.items() {
        let own = truthful_utility(grid, contract, truth);
        let cap = grid.capacity(truth.l);
        for dev in grid.items() {
            if contract.x(dev) <= cap {
                regret = regret.max(utility_unchecked(grid, contract, truth.k, dev) - own);
            }
        }
    }
    Ok(regret)
}

/// `(sum_k v^k) sqrt(epsilon)`: regret ceiling for menus solving the relaxed program.
pub fn regret_bound(grid: &TypeGrid, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(grid.valuations().iter().sum::<f64>() * epsilon.sqrt())
}

/// `(v^K - v^1) sqrt(epsilon)`.
pub fn tight_regret_bound(grid: &TypeGrid, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok((grid.top_valuation() - grid.valuation(0)) * epsilon.sqrt())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::Usage(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn contract(x: Vec<Vec<f64>>, p: Vec<Vec<f64>>) -> Contract {
        Contract::from_raw(Matrix::from_rows(x).unwrap(), Matrix::from_rows(p).unwrap()).unwrap()
    }

    fn two_valuation_grid() -> TypeGrid {
        TypeGrid::new(vec![1.0, 2.0], vec![10.0]).unwrap()
    }

    /// The K=2, L=1 menu x=(10,4), p=(14,8).
    fn optimal_pair() -> Contract {
        contract(vec![vec![10.0], vec![4.0]], vec![vec![14.0], vec![8.0]])
    }

    fn overpaid_pair() -> Contract {
        contract(vec![vec![10.0], vec![4.0]], vec![vec![14.0], vec![9.0]])
    }

    #[test]
    fn resource_feasibility_examples() {
        let grid = TypeGrid::new(vec![1.0], vec![5.0, 10.0]).unwrap();
        let zero = Contract::zero(&grid);
        assert!(check_resource_feasibility(&grid, &zero, 0.0).unwrap().passed);

        let grid1 = TypeGrid::new(vec![1.0], vec![10.0]).unwrap();
        let c = contract(vec![vec![10.0]], vec![vec![0.0]]);
        let chk = check_resource_feasibility(&grid1, &c, 0.0).unwrap();
        assert!(chk.passed);
        assert_eq!(chk.margin, 0.0);

        let c = contract(vec![vec![6.0, 6.0]], vec![vec![0.0, 0.0]]);
        let chk = check_resource_feasibility(&grid, &c, 1e-9).unwrap();
        assert!(!chk.passed);
        // exceeds c^1 = 5 by one unit
        assert_eq!(chk.margin, -1.0);
    }

    #[test]
    fn greedy_examples() {
        let grid1 = TypeGrid::new(vec![1.0, 2.0], vec![3.0]).unwrap();
        let c = contract(vec![vec![3.0], vec![1.0]], vec![vec![0.0], vec![0.0]]);
        assert!(check_resource_greedy(&grid1, &c, 0.0).unwrap().passed());

        let grid = TypeGrid::new(vec![1.0], vec![5.0, 10.0]).unwrap();
        let full = contract(vec![vec![5.0, 8.0]], vec![vec![0.0, 0.0]]);
        let g = check_resource_greedy(&grid, &full, 1e-9).unwrap();
        assert!(g.monotone.passed && g.maximal.passed);

        let partial = contract(vec![vec![3.0, 8.0]], vec![vec![0.0, 0.0]]);
        let g = check_resource_greedy(&grid, &partial, 1e-9).unwrap();
        assert!(g.monotone.passed);
        assert!(!g.maximal.passed);
        assert_eq!(g.maximal.margin, -2.0);
    }

    #[test]
    fn ic_full_examples() {
        let grid = TypeGrid::new(vec![1.0, 2.0], vec![5.0]).unwrap();
        let zero = Contract::zero(&grid);
        assert!(check_ic_full(&grid, &zero, 0.0).unwrap().passed);

        let grid = two_valuation_grid();
        let chk = check_ic_full(&grid, &optimal_pair(), 0.0).unwrap();
        assert!(chk.passed);
        // v^1 gets 14-10 = 4 from its own item and 8-4 = 4 from item 2
        assert_eq!(chk.margin, 0.0);

        let chk = check_ic_full(&grid, &overpaid_pair(), 1e-9).unwrap();
        assert!(!chk.passed);
        assert_eq!(chk.margin, -1.0);
    }

    #[test]
    fn decomposed_ic_examples() {
        let grid = TypeGrid::new(vec![1.0, 3.0], vec![2.0, 4.0, 6.0]).unwrap();
        let same_cols = contract(
            vec![vec![2.0, 2.0, 2.0], vec![1.0, 1.0, 1.0]],
            vec![vec![5.0, 5.0, 5.0], vec![3.0, 3.0, 3.0]],
        );
        assert!(check_ic_decomposed(&grid, &same_cols, 0.0).unwrap().capacity.passed);

        let grid = two_valuation_grid();
        let d = check_ic_decomposed(&grid, &optimal_pair(), 0.0).unwrap();
        assert!(d.valuation.passed);
        assert_eq!(d.valuation.margin, 0.0);
        assert_eq!(d.capacity.margin, f64::INFINITY);
    }

    #[test]
    fn ir_examples() {
        let grid = two_valuation_grid();
        assert!(check_ir(&grid, &Contract::zero(&grid), 0.0).unwrap().passed);
        let chk = check_ir(&grid, &optimal_pair(), 0.0).unwrap();
        assert!(chk.passed);
        // utilities are (4, 0); the top valuation binds
        assert_eq!(chk.margin, 0.0);
        assert_eq!(truthful_utility(&grid, &optimal_pair(), Item::new(0, 0)), 4.0);
    }

    #[test]
    fn property_audit_examples() {
        let grid = TypeGrid::new(vec![1.0, 2.0], vec![5.0, 10.0]).unwrap();
        let r = check_theorem1(&grid, &Contract::zero(&grid), 1e-9).unwrap();
        assert!(r.properties_hold());
        assert!(r.feasible_by_definition());
        assert!(r.worst_violation.is_none());

        let grid = two_valuation_grid();
        let r = check_theorem1(&grid, &optimal_pair(), 1e-9).unwrap();
        assert!(r.properties_hold());
        // dp = 6 sits exactly on the lower bound v^1 * dx = 6 (upper bound 12)
        assert_eq!(r.p3.margin, 0.0);

        let increasing = contract(vec![vec![4.0], vec![10.0]], vec![vec![4.0], vec![20.0]]);
        let r = check_theorem1(&grid, &increasing, 1e-9).unwrap();
        assert!(!r.p2.passed);
        assert!(!r.properties_hold());
    }

    #[test]
    fn worst_violation_names_the_binding_constraint() {
        let grid = two_valuation_grid();
        let lowered = contract(vec![vec![10.0], vec![4.0]], vec![vec![13.0], vec![8.0]]);
        let r = check_theorem1(&grid, &lowered, 1e-9).unwrap();
        assert!(!r.ic_full.passed);
        assert_eq!(r.ic_full.margin, -1.0);
        let w = r.worst_violation.unwrap();
        assert_eq!(w.magnitude, 1.0);
    }

    #[test]
    fn regret_examples() {
        let grid = two_valuation_grid();
        assert_eq!(compute_regret(&grid, &optimal_pair()).unwrap(), 0.0);
        assert_eq!(compute_regret(&grid, &overpaid_pair()).unwrap(), 1.0);
    }

    #[test]
    fn regret_bound_examples() {
        let g = TypeGrid::new(vec![1.0, 2.0, 3.0], vec![1.0]).unwrap();
        assert_eq!(regret_bound(&g, 0.0).unwrap(), 0.0);
        assert!((regret_bound(&g, 0.01).unwrap() - 0.6).abs() < 1e-12);
        let g = TypeGrid::new(vec![5.0], vec![1.0]).unwrap();
        assert_eq!(regret_bound(&g, 4.0).unwrap(), 10.0);
        assert!(regret_bound(&g, -1.0).is_err());
    }

    #[test]
    fn ic_without_greed_is_possible() {
        // Items of a single valuation with zero rent are interchangeable, so a
        // menu can be IC while recycling less at the larger capacity.
        let grid = TypeGrid::new(vec![1.0], vec![5.0, 10.0]).unwrap();
        let c = contract(vec![vec![5.0, 3.0]], vec![vec![5.0, 3.0]]);
        assert!(check_ic_full(&grid, &c, 0.0).unwrap().passed);
        assert!(!check_resource_greedy(&grid, &c, 0.0).unwrap().passed());
    }
}
