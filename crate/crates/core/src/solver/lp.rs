//! Dense two-phase tableau simplex for `max c.x  s.t.  A x <= b, x >= 0`.
//!
//! Right-hand sides may be negative; such rows get an artificial variable and
//! are driven feasible in phase one. Pivoting follows Bland's rule, so the
//! method terminates on degenerate programs.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64, pivots: usize },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram {
            num_vars: objective.len(),
            objective,
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Adds `coeffs . x <= bound`.
    pub fn add_le(&mut self, coeffs: Vec<f64>, bound: f64) {
        assert_eq!(coeffs.len(), self.num_vars, "constraint width mismatch");
        self.rows.push(coeffs);
        self.rhs.push(bound);
    }

    /// Adds `coeffs . x >= bound`.
    pub fn add_ge(&mut self, coeffs: Vec<f64>, bound: f64) {
        self.add_le(coeffs.into_iter().map(|c| -c).collect(), -bound);
    }

    pub fn set_objective(&mut self, objective: Vec<f64>) {
        assert_eq!(objective.len(), self.num_vars, "objective width mismatch");
        self.objective = objective;
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn solve(&self, max_pivots: usize) -> Result<LpOutcome> {
        Tableau::build(self).run(&self.objective, max_pivots)
    }
}

struct Tableau {
    n: usize,
    /// Constraint rows; the last entry of each row is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// First artificial column; columns at or beyond it are artificial.
    art_start: usize,
    width: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars;
        let m = lp.rows.len();
        let n_art = lp.rhs.iter().filter(|&&b| b < 0.0).count();
        let art_start = n + m;
        let width = n + m + n_art;
        let mut t = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut next_art = art_start;
        for (i, (row, &b)) in lp.rows.iter().zip(&lp.rhs).enumerate() {
            let mut r = vec![0.0; width + 1];
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            for (j, &a) in row.iter().enumerate() {
                r[j] = sign * a;
            }
            r[n + i] = sign;
            r[width] = sign * b;
            if b < 0.0 {
                r[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            } else {
                basis.push(n + i);
            }
            t.push(r);
        }
        Tableau {
            n,
            t,
            basis,
            art_start,
            width,
        }
    }

    fn run(mut self, objective: &[f64], max_pivots: usize) -> Result<LpOutcome> {
        let mut pivots = 0;
        if self.art_start < self.width {
            let mut phase1 = vec![0.0; self.width];
            for c in phase1.iter_mut().skip(self.art_start) {
                *c = -1.0;
            }
            match self.optimize(&phase1, self.width, max_pivots, &mut pivots)? {
                Some(value) if value < -1e-9 => return Ok(LpOutcome::Infeasible),
                Some(_) => {}
                None => return Err(Error::Solver("phase one reported unbounded".into())),
            }
            self.expel_artificials();
        }
        let mut costs = vec![0.0; self.width];
        costs[..self.n].copy_from_slice(objective);
        match self.optimize(&costs, self.art_start, max_pivots, &mut pivots)? {
            None => Ok(LpOutcome::Unbounded),
            Some(value) => {
                let mut x = vec![0.0; self.n];
                for (i, &b) in self.basis.iter().enumerate() {
                    if b < self.n {
                        x[b] = self.t[i][self.width];
                    }
                }
                Ok(LpOutcome::Optimal { x, value, pivots })
            }
        }
    }

    /// Maximizes `costs` over columns `< allowed`; `None` when unbounded.
    fn optimize(
        &mut self,
        costs: &[f64],
        allowed: usize,
        max_pivots: usize,
        pivots: &mut usize,
    ) -> Result<Option<f64>> {
        loop {
            let reduced = |j: usize, t: &Tableau| -> f64 {
                costs[j]
                    - t.basis
                        .iter()
                        .zip(&t.t)
                        .map(|(&b, row)| costs[b] * row[j])
                        .sum::<f64>()
            };
            let entering = (0..allowed)
                .filter(|j| !self.basis.contains(j))
                .find(|&j| reduced(j, self) > PIVOT_EPS);
            let Some(col) = entering else {
                let value = self
                    .basis
                    .iter()
                    .zip(&self.t)
                    .map(|(&b, row)| costs[b] * row[self.width])
                    .sum();
                return Ok(Some(value));
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[col] > PIVOT_EPS {
                    let ratio = row[self.width] / row[col];
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-14 || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Ok(None);
            };
            self.pivot(row, col);
            *pivots += 1;
            if *pivots > max_pivots {
                return Err(Error::Solver(format!("simplex exceeded {max_pivots} pivots")));
            }
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Pivots zero-level artificials out of the basis; drops redundant rows.
    fn expel_artificials(&mut self) {
        let mut i = 0;
        while i < self.t.len() {
            if self.basis[i] >= self.art_start {
                let col = (0..self.art_start)
                    .filter(|j| !self.basis.contains(j))
                    .find(|&j| self.t[i][j].abs() > PIVOT_EPS);
                match col {
                    Some(j) => self.pivot(i, j),
                    None => {
                        self.t.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(outcome: LpOutcome) -> (Vec<f64>, f64) {
        match outcome {
            LpOutcome::Optimal { x, value, .. } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(vec![3.0, 5.0]);
        lp.add_le(vec![1.0, 0.0], 4.0);
        lp.add_le(vec![0.0, 2.0], 12.0);
        lp.add_le(vec![3.0, 2.0], 18.0);
        let (x, v) = optimal(lp.solve(100).unwrap());
        assert!((v - 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_uses_phase_one() {
        // max -x - y, x + y >= 3, x <= 2 -> value -3
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.add_ge(vec![1.0, 1.0], 3.0);
        lp.add_le(vec![1.0, 0.0], 2.0);
        let (x, v) = optimal(lp.solve(100).unwrap());
        assert!((v + 3.0).abs() < 1e-9);
        assert!((x[0] + x[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![1.0], 1.0);
        lp.add_ge(vec![1.0], 2.0);
        assert_eq!(lp.solve(100).unwrap(), LpOutcome::Infeasible);

        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_le(vec![0.0, 1.0], 1.0);
        assert_eq!(lp.solve(100).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_chain_terminates() {
        // max x1 + x2 + x3 with x1 <= 1 and a decreasing chain, many ties at zero
        let mut lp = LinearProgram::new(vec![1.0, 1.0, 1.0]);
        lp.add_le(vec![1.0, 0.0, 0.0], 1.0);
        lp.add_le(vec![-1.0, 1.0, 0.0], 0.0);
        lp.add_le(vec![0.0, -1.0, 1.0], 0.0);
        lp.add_ge(vec![1.0, 1.0, 1.0], 0.0);
        let (x, v) = optimal(lp.solve(100).unwrap());
        assert!((v - 3.0).abs() < 1e-9, "{x:?}");
    }
}
