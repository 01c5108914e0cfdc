//! Monte Carlo market: clients draw private types, pick their best menu item,
//! and the provider's realized utility is averaged over replications.
//!
//! Replication `r` draws from its own ChaCha stream `(seed, r)`, clients in
//! index order, so results do not depend on how replications are scheduled.
//! Summaries are reduced in replication order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    realized_from_totals, utility_unchecked, ClientDistribution, Contract, Item, MarketInstance,
    Selection, TypeGrid,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// The true type's item, then the lowest `(k, l)`, then opting out.
    #[default]
    TruthfulFirst,
    /// The highest payment among the maximizers, then as `TruthfulFirst`.
    MaxPayment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl SimulationConfig {
    pub fn new(replications: usize, seed: u64) -> Result<Self> {
        let config = SimulationConfig {
            replications,
            seed,
            tie_break: TieBreak::TruthfulFirst,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        Ok(())
    }
}

/// Selection counts over all clients and replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionHistogram {
    /// `K x L` counts, indexed like the contract.
    pub items: Vec<Vec<u64>>,
    pub opt_out: u64,
}

impl SelectionHistogram {
    fn new(grid: &TypeGrid) -> Self {
        SelectionHistogram {
            items: vec![vec![0; grid.num_capacities()]; grid.num_valuations()],
            opt_out: 0,
        }
    }

    fn record(&mut self, selection: Selection) {
        match selection {
            Selection::Item(Item { k, l }) => self.items[k][l] += 1,
            Selection::OptOut => self.opt_out += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.items.iter().flatten().sum::<u64>() + self.opt_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub replications: usize,
    pub mean_utility: f64,
    /// Sample standard deviation of the per-replication utility over `sqrt(R)`.
    pub std_error: f64,
    pub mean_total_repurchase: f64,
    /// Fraction of replications whose realized supply fell short of the floor.
    pub shortfall_frequency: f64,
    pub item_selection_histogram: SelectionHistogram,
}

/// Utility-maximizing choice of a client of type `true_type` among the items
/// she can afford (`x <= c^l`) and opting out.
pub fn best_response(
    grid: &TypeGrid,
    contract: &Contract,
    true_type: Item,
    tie_break: TieBreak,
) -> Result<Selection> {
    contract.check_shape(grid)?;
    grid.check_item(true_type)?;
    Ok(respond(grid, contract, true_type, tie_break))
}

fn respond(grid: &TypeGrid, contract: &Contract, truth: Item, tie_break: TieBreak) -> Selection {
    let cap = grid.capacity(truth.l);
    let affordable = grid.items().filter(|&it| contract.x(it) <= cap);
    let scored: Vec<(Selection, f64)> = std::iter::once(truth)
        .filter(|&it| contract.x(it) <= cap)
        .chain(affordable.filter(|&it| it != truth))
        .map(|it| (Selection::Item(it), utility_unchecked(grid, contract, truth.k, it)))
        .chain(std::iter::once((Selection::OptOut, 0.0)))
        .collect();
    let top = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * top.abs().max(1.0);
    let mut tied = scored.into_iter().filter(|s| s.1 >= top - tol).map(|s| s.0);
    match tie_break {
        TieBreak::TruthfulFirst => tied.next().expect("opt-out is always a candidate"),
        TieBreak::MaxPayment => {
            let mut best: Option<(Selection, f64)> = None;
            for sel in tied {
                let pay = contract.terms(sel).1;
                if best.is_none_or(|(_, p)| pay > p) {
                    best = Some((sel, pay));
                }
            }
            best.expect("opt-out is always a candidate").0
        }
    }
}

/// Flattened inverse-CDF sampler over one client's `L x K` table.
struct Sampler {
    cumulative: Vec<f64>,
    last_positive: usize,
    num_valuations: usize,
}

impl Sampler {
    fn new(dist: &ClientDistribution) -> Self {
        let mut acc = 0.0;
        let probs = dist.probs().as_slice();
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Sampler {
            cumulative,
            last_positive,
            num_valuations: dist.probs().cols(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Item {
        let u: f64 = rng.random();
        let idx = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.last_positive);
        Item::new(idx % self.num_valuations, idx / self.num_valuations)
    }
}

fn stream(seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

fn check_inputs(instance: &MarketInstance, contract: &Contract, config: &SimulationConfig) -> Result<()> {
    config.validate()?;
    contract.check_shape(instance.grid())
}

/// Simulates `config.replications` independent markets under best responses.
pub fn simulate(
    instance: &MarketInstance,
    contract: &Contract,
    config: &SimulationConfig,
) -> Result<SimulationSummary> {
    check_inputs(instance, contract, config)?;
    let grid = instance.grid();
    let l_count = grid.num_capacities();
    let responses: Vec<Selection> = grid
        .items()
        .map(|it| respond(grid, contract, it, config.tie_break))
        .collect();
    let samplers: Vec<Sampler> = instance.clients().iter().map(Sampler::new).collect();

    let runs: Vec<(f64, f64, Vec<Selection>)> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(config.seed, r);
            let (mut supply, mut paid) = (0.0, 0.0);
            let picks: Vec<Selection> = samplers
                .iter()
                .map(|s| {
                    let t = s.draw(&mut rng);
                    let sel = responses[t.k * l_count + t.l];
                    let (x, p) = contract.terms(sel);
                    supply += x;
                    paid += p;
                    sel
                })
                .collect();
            (realized_from_totals(instance, supply, paid), supply, picks)
        })
        .collect();

    let mut histogram = SelectionHistogram::new(grid);
    let (mut mean, mut m2, mut supply_sum) = (0.0, 0.0, 0.0);
    let mut shortfalls = 0usize;
    for (i, (utility, supply, picks)) in runs.into_iter().enumerate() {
        let delta = utility - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (utility - mean);
        supply_sum += supply;
        if supply < instance.demand_floor() {
            shortfalls += 1;
        }
        for sel in picks {
            histogram.record(sel);
        }
    }
    let reps = config.replications as f64;
    let std_error = if config.replications > 1 {
        (m2 / (reps - 1.0)).max(0.0).sqrt() / reps.sqrt()
    } else {
        0.0
    };
    Ok(SimulationSummary {
        replications: config.replications,
        mean_utility: mean,
        std_error,
        mean_total_repurchase: supply_sum / reps,
        shortfall_frequency: shortfalls as f64 / reps,
        item_selection_histogram: histogram,
    })
}

/// Largest support the supply distribution may reach in
/// [`expected_realized_utility`].
pub const SUPPLY_SUPPORT_LIMIT: usize = 1 << 20;

/// Exact expectation of the realized provider utility when every client
/// best-responds to her drawn type.
///
/// Differs from `provider_expected_utility` when the penalty is active:
/// there the shortfall is charged on expected supply, here on each realized
/// supply, so this value is never larger. The supply distribution is built
/// by convolving the clients' selection distributions.
pub fn expected_realized_utility(
    instance: &MarketInstance,
    contract: &Contract,
    tie_break: TieBreak,
) -> Result<f64> {
    contract.check_shape(instance.grid())?;
    let grid = instance.grid();
    let responses: Vec<(f64, f64)> = grid
        .items()
        .map(|it| contract.terms(respond(grid, contract, it, tie_break)))
        .collect();
    let mut margin = 0.0;
    let mut support: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for client in instance.clients() {
        let mut outcomes: Vec<(f64, f64)> = Vec::new();
        for (i, it) in grid.items().enumerate() {
            let pr = client.prob(it);
            if pr > 0.0 {
                let (x, p) = responses[i];
                margin += pr * (instance.alpha() * x - p);
                outcomes.push((x, pr));
            }
        }
        let mut next: Vec<(f64, f64)> = Vec::with_capacity(support.len() * outcomes.len());
        for &(s, ps) in &support {
            for &(x, px) in &outcomes {
                next.push((s + x, ps * px));
            }
        }
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        next.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        if next.len() > SUPPLY_SUPPORT_LIMIT {
            return Err(Error::TooLarge {
                count: next.len() as u128,
                limit: SUPPLY_SUPPORT_LIMIT as u128,
            });
        }
        support = next;
    }
    let floor = instance.demand_floor();
    let shortfall: f64 = support.iter().map(|&(s, pr)| pr * (s - floor).min(0.0)).sum();
    Ok(margin + instance.penalty() * shortfall)
}

/// Largest gain from misreporting seen among the sampled client types.
///
/// Deviations range over affordable menu items, as in the regret definition;
/// the result is never negative.
pub fn estimate_misreport_gain(
    instance: &MarketInstance,
    contract: &Contract,
    config: &SimulationConfig,
) -> Result<f64> {
    check_inputs(instance, contract, config)?;
    let grid = instance.grid();
    let l_count = grid.num_capacities();
    let gains: Vec<f64> = grid
        .items()
        .map(|truth| {
            let own = utility_unchecked(grid, contract, truth.k, truth);
            let cap = grid.capacity(truth.l);
            grid.items()
                .filter(|&it| contract.x(it) <= cap)
                .map(|it| utility_unchecked(grid, contract, truth.k, it) - own)
                .fold(0.0, f64::max)
        })
        .collect();
    let samplers: Vec<Sampler> = instance.clients().iter().map(Sampler::new).collect();
    let per_rep: Vec<f64> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(config.seed, r);
            samplers
                .iter()
                .map(|s| {
                    let t = s.draw(&mut rng);
                    gains[t.k * l_count + t.l]
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(per_rep.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::compute_regret;
    use crate::matrix::Matrix;
    use crate::model::provider_expected_utility;

    fn false_ic() -> (TypeGrid, Contract) {
        let grid = TypeGrid::new(vec![1.0, 2.0], vec![10.0]).unwrap();
        let c = Contract::new(
            Matrix::from_rows(vec![vec![10.0], vec![4.0]]).unwrap(),
            Matrix::from_rows(vec![vec![14.0], vec![9.0]]).unwrap(),
        )
        .unwrap();
        (grid, c)
    }

    #[test]
    fn false_ic_low_type_takes_high_item() {
        let (grid, c) = false_ic();
        let sel = best_response(&grid, &c, Item::new(0, 0), TieBreak::TruthfulFirst).unwrap();
        assert_eq!(sel, Selection::Item(Item::new(1, 0)));
    }

    #[test]
    fn zero_contract_signs_truthfully() {
        let grid = TypeGrid::new(vec![1.0, 2.0], vec![3.0, 5.0]).unwrap();
        let zero = Contract::zero(&grid);
        for t in grid.items() {
            assert_eq!(
                best_response(&grid, &zero, t, TieBreak::TruthfulFirst).unwrap(),
                Selection::Item(t)
            );
        }
    }

    #[test]
    fn max_payment_prefers_bigger_cheque() {
        // the low type is indifferent between both items and opting out
        let grid = TypeGrid::new(vec![1.0, 2.0], vec![10.0]).unwrap();
        let c = Contract::new(
            Matrix::from_rows(vec![vec![2.0], vec![4.0]]).unwrap(),
            Matrix::from_rows(vec![vec![2.0], vec![4.0]]).unwrap(),
        )
        .unwrap();
        let t = Item::new(0, 0);
        assert_eq!(best_response(&grid, &c, t, TieBreak::TruthfulFirst).unwrap(), Selection::Item(t));
        assert_eq!(
            best_response(&grid, &c, t, TieBreak::MaxPayment).unwrap(),
            Selection::Item(Item::new(1, 0))
        );
        // high type: own item 4 - 8, low item 2 - 4, opting out 0
        let t = Item::new(1, 0);
        assert_eq!(best_response(&grid, &c, t, TieBreak::MaxPayment).unwrap(), Selection::OptOut);
    }

    #[test]
    fn unaffordable_items_never_chosen() {
        let grid = TypeGrid::new(vec![1.0], vec![2.0, 8.0]).unwrap();
        let c = Contract::new(
            Matrix::from_rows(vec![vec![2.0, 8.0]]).unwrap(),
            Matrix::from_rows(vec![vec![2.0, 100.0]]).unwrap(),
        )
        .unwrap();
        let sel = best_response(&grid, &c, Item::new(0, 0), TieBreak::MaxPayment).unwrap();
        assert_eq!(sel, Selection::Item(Item::new(0, 0)));
    }

    #[test]
    fn point_masses_give_exact_mean() {
        let grid = TypeGrid::new(vec![1.0, 2.0], vec![10.0]).unwrap();
        let c = Contract::new(
            Matrix::from_rows(vec![vec![10.0], vec![4.0]]).unwrap(),
            Matrix::from_rows(vec![vec![14.0], vec![8.0]]).unwrap(),
        )
        .unwrap();
        let clients = vec![
            ClientDistribution::point_mass(&grid, Item::new(0, 0)).unwrap(),
            ClientDistribution::point_mass(&grid, Item::new(1, 0)).unwrap(),
        ];
        let inst = MarketInstance::new(grid, clients, 3.0, 1.0, 20.0).unwrap();
        let s = simulate(&inst, &c, &SimulationConfig::new(257, 9).unwrap()).unwrap();
        assert_eq!(s.mean_utility, provider_expected_utility(&inst, &c).unwrap());
        assert_eq!(s.std_error, 0.0);
        assert_eq!(s.mean_total_repurchase, 14.0);
        assert_eq!(s.shortfall_frequency, 1.0);
        assert_eq!(s.item_selection_histogram.total(), 2 * 257);
        assert_eq!(s.item_selection_histogram.items[0][0], 257);
    }

    #[test]
    fn realized_expectation_charges_each_shortfall() {
        let grid = TypeGrid::new(vec![1.0], vec![2.0, 6.0]).unwrap();
        let c = Contract::new(
            Matrix::from_rows(vec![vec![2.0, 6.0]]).unwrap(),
            Matrix::from_rows(vec![vec![2.0, 6.0]]).unwrap(),
        )
        .unwrap();
        let probs = Matrix::from_rows(vec![vec![0.5], vec![0.5]]).unwrap();
        let clients = vec![ClientDistribution::new(probs).unwrap()];
        let inst = MarketInstance::new(grid, clients, 2.0, 1.0, 4.0).unwrap();
        assert_eq!(provider_expected_utility(&inst, &c).unwrap(), 4.0);
        assert_eq!(expected_realized_utility(&inst, &c, TieBreak::TruthfulFirst).unwrap(), 3.0);
        let s = simulate(&inst, &c, &SimulationConfig::new(20_000, 5).unwrap()).unwrap();
        assert!((s.mean_utility - 3.0).abs() <= 4.0 * s.std_error);
    }

    #[test]
    fn misreport_gain_matches_regret_with_full_support() {
        let (grid, c) = false_ic();
        let probs = Matrix::from_rows(vec![vec![0.5, 0.5]]).unwrap();
        let inst = MarketInstance::new(grid.clone(), vec![ClientDistribution::new(probs).unwrap()], 2.0, 0.0, 0.0)
            .unwrap();
        let cfg = SimulationConfig::new(200, 1).unwrap();
        let gain = estimate_misreport_gain(&inst, &c, &cfg).unwrap();
        assert_eq!(gain, 1.0);
        assert_eq!(gain, compute_regret(&grid, &c).unwrap());
    }

    #[test]
    fn reproducible_and_validated() {
        let (grid, c) = false_ic();
        let probs = Matrix::from_rows(vec![vec![0.3, 0.7]]).unwrap();
        let inst = MarketInstance::new(grid, vec![ClientDistribution::new(probs).unwrap()], 2.0, 1.0, 5.0)
            .unwrap();
        let cfg = SimulationConfig::new(1000, 5).unwrap().with_tie_break(TieBreak::MaxPayment);
        assert_eq!(simulate(&inst, &c, &cfg).unwrap(), simulate(&inst, &c, &cfg).unwrap());
        assert!(SimulationConfig::new(0, 1).is_err());
    }
}
