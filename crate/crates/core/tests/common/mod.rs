#![allow(dead_code)]

use proptest::prelude::*;
use repurchase_core::{ClientDistribution, Matrix, MarketInstance, TypeGrid};

/// Distinct integers from `1..=max`, sorted ascending.
pub fn distinct_sorted(len: usize, max: u32) -> impl Strategy<Value = Vec<f64>> {
    proptest::sample::subsequence((1..=max).collect::<Vec<_>>(), len)
        .prop_map(|v| v.into_iter().map(f64::from).collect())
}

/// `L x K` distribution from small integer weights, at least one positive.
pub fn distribution(k: usize, l: usize) -> impl Strategy<Value = ClientDistribution> {
    proptest::collection::vec(0u32..=4, k * l)
        .prop_filter("all-zero weights", |w| w.iter().any(|&x| x > 0))
        .prop_map(move |w| {
            let total: u32 = w.iter().sum();
            let probs = Matrix::from_fn(l, k, |r, c| f64::from(w[r * k + c]) / f64::from(total));
            ClientDistribution::new(probs).unwrap()
        })
}

pub fn grid(max_k: usize, max_l: usize, max_cap: u32) -> impl Strategy<Value = TypeGrid> {
    (1..=max_k, 1..=max_l).prop_flat_map(move |(k, l)| {
        (distinct_sorted(k, 6), distinct_sorted(l, max_cap))
            .prop_map(|(v, c)| TypeGrid::new(v, c).unwrap())
    })
}

/// Small instances: integer valuations and capacities, `n <= 3` clients,
/// integer `alpha` and `M`, half-integer `D`.
pub fn instance(max_k: usize, max_l: usize, max_cap: u32) -> impl Strategy<Value = MarketInstance> {
    grid(max_k, max_l, max_cap).prop_flat_map(|g| {
        let (k, l) = (g.num_valuations(), g.num_capacities());
        (
            Just(g),
            proptest::collection::vec(distribution(k, l), 1..=3),
            1u32..=8,
            0u32..=5,
            0u32..=20,
        )
            .prop_map(|(g, clients, alpha, m, d)| {
                MarketInstance::new(g, clients, f64::from(alpha), f64::from(m), f64::from(d) * 0.5)
                    .unwrap()
            })
    })
}


/// Greedy allocation `min(c^l, y_k)` for integer `y_1 >= ... >= y_K` in `0..=c^L`.
pub fn greedy_allocation(g: TypeGrid) -> impl Strategy<Value = (TypeGrid, Matrix)> {
    let top = g.max_capacity() as u32;
    let k = g.num_valuations();
    proptest::collection::vec(0..=top, k).prop_map(move |mut y| {
        y.sort_unstable_by(|a, b| b.cmp(a));
        let x = Matrix::from_fn(k, g.num_capacities(), |r, c| g.capacity(c).min(f64::from(y[r])));
        (g.clone(), x)
    })
}

/// Integer matrix with entries in `0..=max`.
pub fn integer_matrix(rows: usize, cols: usize, max: u32) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(0..=max, rows * cols)
        .prop_map(move |v| Matrix::from_fn(rows, cols, |r, c| f64::from(v[r * cols + c])))
}
