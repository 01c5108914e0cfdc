//! Machine-readable reports and their human renderings.

use std::fmt::Write;

use repurchase_core::feasibility::{truthful_utility, AuditReport, Check};
use repurchase_core::simulation::{SimulationSummary, TieBreak};
use repurchase_core::solver::{Diagnostics, Method};
use repurchase_core::{Contract, Item, TypeGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenuRow {
    pub k: usize,
    pub l: usize,
    pub valuation: f64,
    pub capacity: f64,
    pub x: f64,
    pub p: f64,
    pub truthful_utility: f64,
}

pub fn menu_rows(grid: &TypeGrid, contract: &Contract) -> Vec<MenuRow> {
    grid.items()
        .map(|it| MenuRow {
            k: it.k,
            l: it.l,
            valuation: grid.valuation(it.k),
            capacity: grid.capacity(it.l),
            x: contract.x(it),
            p: contract.p(it),
            truthful_utility: truthful_utility(grid, contract, it),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    pub expected_utility: f64,
    /// `min(0, expected supply - D)`.
    pub shortfall: f64,
    pub contract: Contract,
    pub menu: Vec<MenuRow>,
    pub audit: AuditReport,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub feasible: bool,
    pub properties_hold: bool,
    pub expected_utility: f64,
    pub menu: Vec<MenuRow>,
    pub audit: AuditReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub regret: f64,
    pub epsilon: f64,
    pub bound: f64,
    pub tight_bound: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub tie_break: TieBreak,
    /// Analytic expectation with the shortfall charged on expected supply.
    pub expected_utility: f64,
    /// Exact mean of the realized utility, when the supply distribution is
    /// small enough to enumerate.
    pub realized_expectation: Option<f64>,
    pub misreport_gain: f64,
    pub summary: SimulationSummary,
}

/// Six significant digits, trailing zeros dropped.
pub fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    let magnitude = rounded.abs();
    if rounded == 0.0 {
        "0".into()
    } else if !(1e-4..1e15).contains(&magnitude) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::SingleExact => "single (exact)",
        Method::MultiReducedExact => "reduced (exact)",
        Method::MultiRelaxed => "relaxed",
        Method::Oracle => "oracle grid search",
    }
}

fn menu_table(out: &mut String, rows: &[MenuRow]) {
    let _ = writeln!(
        out,
        "{:>3} {:>3} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "k", "l", "valuation", "capacity", "x", "p", "utility"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>3} {:>3} {:>12} {:>12} {:>12} {:>12} {:>12}",
            r.k + 1,
            r.l + 1,
            sig6(r.valuation),
            sig6(r.capacity),
            sig6(r.x),
            sig6(r.p),
            sig6(r.truthful_utility)
        );
    }
}

fn check_line(out: &mut String, name: &str, label: &str, c: Check) {
    let verdict = if c.passed { "pass" } else { "FAIL" };
    let margin = if c.margin.is_finite() { sig6(c.margin) } else { "-".into() };
    let _ = writeln!(out, "  {name:<4} {label:<28} {verdict:<5} margin {margin}");
}

fn audit_block(out: &mut String, a: &AuditReport) {
    let _ = writeln!(out, "audit (tol {})", sig6(a.tolerance));
    check_line(out, "P1", "resource feasibility", a.p1);
    check_line(out, "P2", "allocation falls with value", a.p2);
    check_line(out, "P3", "payment squeeze", a.p3);
    check_line(out, "P4", "capacity incentive", a.p4);
    check_line(out, "P5", "top valuation participates", a.p5);
    check_line(out, "P6", "resource greedy", a.p6);
    check_line(out, "", "incentive compatible", a.ic_full);
    check_line(out, "", "individually rational", a.ir);
    if let Some(v) = &a.worst_violation {
        let _ = writeln!(out, "  worst violation: {} by {}", v.constraint, sig6(v.magnitude));
    }
    let _ = writeln!(
        out,
        "regret {}  bound {} (epsilon {})",
        sig6(a.regret),
        sig6(a.regret_bound),
        sig6(a.epsilon)
    );
}

pub fn render_solve(r: &SolveReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "method            {}", method_name(r.method));
    if r.method == Method::MultiRelaxed {
        let _ = writeln!(out, "epsilon           {}", sig6(r.epsilon));
    }
    if let Some(seed) = r.seed {
        let _ = writeln!(out, "seed              {seed}");
    }
    if let Some(step) = r.grid_step {
        let _ = writeln!(out, "grid step         {}", sig6(step));
    }
    let _ = writeln!(out, "expected utility  {}", sig6(r.expected_utility));
    let _ = writeln!(out, "shortfall term    {}", sig6(r.shortfall));
    out.push('\n');
    menu_table(&mut out, &r.menu);
    out.push('\n');
    audit_block(&mut out, &r.audit);
    let d = &r.diagnostics;
    let _ = writeln!(
        out,
        "diagnostics: iterations {}, candidates {}, pruned {}, restarts {}",
        d.iterations, d.candidates, d.pruned, d.restarts
    );
    out
}

pub fn render_verify(r: &VerifyReport) -> String {
    let mut out = String::new();
    menu_table(&mut out, &r.menu);
    out.push('\n');
    audit_block(&mut out, &r.audit);
    let _ = writeln!(out, "expected utility {}", sig6(r.expected_utility));
    let _ = writeln!(out, "verdict: {}", if r.feasible { "feasible" } else { "infeasible" });
    out
}

pub fn render_regret(r: &RegretReport) -> String {
    format!(
        "regret       {}\nepsilon      {}\nbound        {}\ntight bound  {}\nwithin bound {}\n",
        sig6(r.regret),
        sig6(r.epsilon),
        sig6(r.bound),
        sig6(r.tight_bound),
        if r.within_bound { "yes" } else { "no" }
    )
}

pub fn render_simulation(r: &SimulationReport, grid: &TypeGrid) -> String {
    let s = &r.summary;
    let mut out = String::new();
    let _ = writeln!(out, "replications         {}", s.replications);
    let _ = writeln!(out, "seed                 {}", r.seed);
    let _ = writeln!(out, "mean utility         {}", sig6(s.mean_utility));
    let _ = writeln!(out, "std error            {}", sig6(s.std_error));
    let _ = writeln!(out, "expected utility     {}", sig6(r.expected_utility));
    if let Some(e) = r.realized_expectation {
        let _ = writeln!(out, "realized expectation {}", sig6(e));
    }
    let _ = writeln!(out, "mean repurchase      {}", sig6(s.mean_total_repurchase));
    let _ = writeln!(out, "shortfall frequency  {}", sig6(s.shortfall_frequency));
    let _ = writeln!(out, "misreport gain       {}", sig6(r.misreport_gain));
    let _ = writeln!(out, "\nselections");
    for it in grid.items() {
        let Item { k, l } = it;
        let _ = writeln!(out, "  ({}, {}) {}", k + 1, l + 1, s.item_selection_histogram.items[k][l]);
    }
    let _ = writeln!(out, "  opt-out {}", s.item_selection_histogram.opt_out);
    out
}
