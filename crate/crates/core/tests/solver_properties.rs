mod common;

use proptest::prelude::*;
use repurchase_core::feasibility::{check_resource_feasibility, check_theorem1, compute_regret, regret_bound};
use repurchase_core::model::provider_expected_utility;
use repurchase_core::solver::{
    oracle_grid_search, relaxed_feasible, solve_exact, solve_multi_reduced, solve_multi_relaxed,
    solve_multi_relaxed_with, solve_single_capacity, Method, RelaxedOptions, SolveResult,
};
use repurchase_core::{Contract, MarketInstance};

fn check_invariants(instance: &MarketInstance, r: &SolveResult) {
    let direct = provider_expected_utility(instance, &r.contract).unwrap();
    assert!((r.expected_utility - direct).abs() < 1e-8);
    let alloc = r.contract.allocation();
    let supply: f64 = instance
        .grid()
        .items()
        .map(|it| instance.aggregate_weights().weight(it) * alloc[(it.k, it.l)])
        .sum();
    assert!((r.aux_t - (supply - instance.demand_floor()).min(0.0)).abs() < 1e-8);
    assert!(check_resource_feasibility(instance.grid(), &r.contract, 1e-8).unwrap().passed);
    assert!(relaxed_feasible(instance.grid(), alloc, r.epsilon, 1e-8).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduced_is_sandwiched_by_oracle(inst in common::instance(3, 3, 4)) {
        let step = 0.25;
        let exact = solve_multi_reduced(&inst).unwrap();
        let oracle = oracle_grid_search(&inst, step).unwrap();
        let n = inst.num_clients() as f64;
        let slack = n * (inst.alpha() + inst.grid().top_valuation()) * step;
        prop_assert!(oracle.expected_utility <= exact.expected_utility + 1e-6,
            "oracle {} above exact {}", oracle.expected_utility, exact.expected_utility);
        prop_assert!(oracle.expected_utility >= exact.expected_utility - slack - 1e-9);
        prop_assert_eq!(oracle.method, Method::Oracle);
    }

    #[test]
    fn exact_outputs_satisfy_properties(inst in common::instance(3, 3, 6)) {
        let r = solve_exact(&inst).unwrap();
        check_invariants(&inst, &r);
        prop_assert!(r.method.is_exact());
        prop_assert_eq!(r.epsilon, 0.0);
        let report = check_theorem1(inst.grid(), &r.contract, 1e-8).unwrap();
        prop_assert!(report.properties_hold(), "{:?}", report.worst_violation);
        prop_assert!(report.feasible_by_definition());
        prop_assert!(r.expected_utility >= provider_expected_utility(&inst, &Contract::zero(inst.grid())).unwrap() - 1e-9);
    }

    #[test]
    fn one_capacity_program_agrees_with_reduced(inst in common::instance(3, 1, 6)) {
        let a = solve_single_capacity(&inst).unwrap();
        let b = solve_multi_reduced(&inst).unwrap();
        prop_assert!((a.expected_utility - b.expected_utility).abs() < 1e-8);
        prop_assert!(a.contract.allocation().max_abs_diff(b.contract.allocation()) < 1e-8,
            "{:?} vs {:?}", a.contract.allocation(), b.contract.allocation());
    }

    #[test]
    fn relaxed_outputs_are_feasible_and_bounded(inst in common::instance(3, 3, 6), seed in any::<u64>()) {
        let exact = solve_multi_reduced(&inst).unwrap();
        for eps in [1e-2, 1e-4] {
            let r = solve_multi_relaxed(&inst, eps, 2, seed).unwrap();
            check_invariants(&inst, &r);
            let regret = compute_regret(inst.grid(), &r.contract).unwrap();
            prop_assert!(regret <= regret_bound(inst.grid(), eps).unwrap() + 1e-12);
            prop_assert!(r.expected_utility >= exact.expected_utility - 1e-9);
        }
    }

    #[test]
    fn relaxation_value_grows_with_epsilon(inst in common::instance(3, 3, 6)) {
        let mut prev: Option<SolveResult> = None;
        for eps in [1e-8, 1e-4, 1e-2] {
            let mut opts = RelaxedOptions::new(eps, 1, 11);
            if let Some(p) = &prev {
                opts.warm_starts.push(p.contract.allocation().clone());
            }
            let r = solve_multi_relaxed_with(&inst, &opts).unwrap();
            if let Some(p) = &prev {
                prop_assert!(r.expected_utility >= p.expected_utility - 1e-9);
            }
            prev = Some(r);
        }
    }

    #[test]
    fn solvers_are_deterministic(inst in common::instance(2, 3, 6), seed in any::<u64>()) {
        prop_assert_eq!(solve_multi_reduced(&inst).unwrap(), solve_multi_reduced(&inst).unwrap());
        prop_assert_eq!(
            solve_multi_relaxed(&inst, 1e-3, 3, seed).unwrap(),
            solve_multi_relaxed(&inst, 1e-3, 3, seed).unwrap()
        );
    }
}
