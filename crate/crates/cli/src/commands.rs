//! The subcommands. Each returns the text for stdout and an exit code; JSON
//! reports go to `--out` when given.

use std::path::{Path, PathBuf};

use repurchase_core::feasibility::{audit, compute_regret, regret_bound, tight_regret_bound};
use repurchase_core::model::provider_expected_utility;
use repurchase_core::simulation::{
    estimate_misreport_gain, expected_realized_utility, simulate as run_simulation, SimulationConfig, TieBreak,
};
use repurchase_core::solver::{
    oracle_grid_search, solve_multi_reduced, solve_multi_relaxed, solve_single_capacity, SolveResult,
    DEFAULT_EPSILON,
};
use repurchase_core::{Contract, Error, MarketInstance};

use crate::io::{load_contract, load_instance, to_json, write_file, InstanceFile, LoadedContract};
use crate::report::{
    menu_rows, render_regret, render_simulation, render_solve, render_verify, RegretReport, SimulationReport,
    SolveReport, VerifyReport,
};
use crate::{CliError, MethodFlag, Outcome, EXIT_INFEASIBLE, EXIT_OK};

#[derive(Debug, Clone)]
pub struct SolveArgs {
    pub instance: PathBuf,
    pub method: MethodFlag,
    pub epsilon: Option<f64>,
    pub restarts: usize,
    pub seed: Option<u64>,
    pub tol: f64,
    pub out: Option<PathBuf>,
}

fn check_tol(tol: f64) -> Result<(), CliError> {
    if tol.is_finite() && tol >= 0.0 {
        Ok(())
    } else {
        Err(CliError::input(format!("--tol: {tol} must be finite and non-negative")))
    }
}

fn emit(out: Option<&Path>, json: String) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, &json),
        None => Ok(()),
    }
}

fn instance_and_contract(
    instance: &Path,
    contract: &Path,
) -> Result<(InstanceFile, MarketInstance, LoadedContract), CliError> {
    let (file, inst) = load_instance(instance)?;
    let loaded = load_contract(contract)?;
    loaded
        .contract
        .check_shape(inst.grid())
        .map_err(|e| CliError::input(format!("{}: {e}", contract.display())))?;
    Ok((file, inst, loaded))
}

fn solve_report(
    inst: &MarketInstance,
    r: SolveResult,
    tol: f64,
    seed: Option<u64>,
    grid_step: Option<f64>,
) -> Result<SolveReport, CliError> {
    let audit = audit(inst.grid(), &r.contract, tol, r.epsilon)?;
    Ok(SolveReport {
        method: r.method,
        epsilon: r.epsilon,
        seed,
        grid_step,
        expected_utility: r.expected_utility,
        shortfall: r.aux_t,
        menu: menu_rows(inst.grid(), &r.contract),
        contract: r.contract,
        audit,
        diagnostics: r.diagnostics,
    })
}

pub fn solve(args: &SolveArgs) -> Result<Outcome, CliError> {
    check_tol(args.tol)?;
    let (file, inst) = load_instance(&args.instance)?;
    let one_capacity = inst.grid().num_capacities() == 1;
    let (result, seed) = match args.method {
        MethodFlag::Auto if one_capacity => (solve_single_capacity(&inst)?, None),
        MethodFlag::Single => (solve_single_capacity(&inst)?, None),
        MethodFlag::Auto | MethodFlag::Reduced => (solve_multi_reduced(&inst)?, None),
        MethodFlag::Relaxed => {
            let eps = args.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON);
            let seed = args.seed.or(file.seed).unwrap_or(0);
            (solve_multi_relaxed(&inst, eps, args.restarts, seed)?, Some(seed))
        }
    };
    let report = solve_report(&inst, result, args.tol, seed, None)?;
    emit(args.out.as_deref(), to_json(&report))?;
    Ok(Outcome {
        stdout: render_solve(&report),
        code: EXIT_OK,
    })
}

pub fn verify(
    instance: &Path,
    contract: &Path,
    tol: f64,
    epsilon: Option<f64>,
    out: Option<&Path>,
) -> Result<Outcome, CliError> {
    check_tol(tol)?;
    let (_, inst, loaded) = instance_and_contract(instance, contract)?;
    let eps = epsilon.or(loaded.epsilon).unwrap_or(0.0);
    let c: &Contract = &loaded.contract;
    let audit = audit(inst.grid(), c, tol, eps)?;
    let properties_hold = audit.properties_hold();
    let report = VerifyReport {
        feasible: properties_hold && audit.feasible_by_definition(),
        properties_hold,
        expected_utility: provider_expected_utility(&inst, c)?,
        menu: menu_rows(inst.grid(), c),
        audit,
    };
    emit(out, to_json(&report))?;
    Ok(Outcome {
        stdout: render_verify(&report),
        code: if report.feasible { EXIT_OK } else { EXIT_INFEASIBLE },
    })
}

pub fn simulate(
    instance: &Path,
    contract: &Path,
    replications: usize,
    seed: Option<u64>,
    tie_break: TieBreak,
    out: Option<&Path>,
) -> Result<Outcome, CliError> {
    let (file, inst, loaded) = instance_and_contract(instance, contract)?;
    let seed = seed.or(file.seed).unwrap_or(0);
    let config = SimulationConfig::new(replications, seed)
        .map_err(|e| CliError::input(format!("--replications: {e}")))?
        .with_tie_break(tie_break);
    let c = &loaded.contract;
    let realized_expectation = match expected_realized_utility(&inst, c, tie_break) {
        Ok(v) => Some(v),
        Err(Error::TooLarge { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let report = SimulationReport {
        seed,
        tie_break,
        expected_utility: provider_expected_utility(&inst, c)?,
        realized_expectation,
        misreport_gain: estimate_misreport_gain(&inst, c, &config)?,
        summary: run_simulation(&inst, c, &config)?,
    };
    emit(out, to_json(&report))?;
    Ok(Outcome {
        stdout: render_simulation(&report, inst.grid()),
        code: EXIT_OK,
    })
}

pub fn regret(instance: &Path, contract: &Path, epsilon: Option<f64>, out: Option<&Path>) -> Result<Outcome, CliError> {
    let (_, inst, loaded) = instance_and_contract(instance, contract)?;
    let eps = epsilon.or(loaded.epsilon).unwrap_or(0.0);
    let regret = compute_regret(inst.grid(), &loaded.contract)?;
    let bound = regret_bound(inst.grid(), eps)?;
    let report = RegretReport {
        regret,
        epsilon: eps,
        bound,
        tight_bound: tight_regret_bound(inst.grid(), eps)?,
        within_bound: regret <= bound,
    };
    emit(out, to_json(&report))?;
    Ok(Outcome {
        stdout: render_regret(&report),
        code: EXIT_OK,
    })
}

pub fn oracle(instance: &Path, grid_step: f64, tol: f64, out: Option<&Path>) -> Result<Outcome, CliError> {
    check_tol(tol)?;
    let (_, inst) = load_instance(instance)?;
    let result = oracle_grid_search(&inst, grid_step)?;
    let report = solve_report(&inst, result, tol, None, Some(grid_step))?;
    emit(out, to_json(&report))?;
    Ok(Outcome {
        stdout: render_solve(&report),
        code: EXIT_OK,
    })
}
