//! Type grids, client distributions, market instances and contracts, together
//! with the client and provider utility formulas.
//!
//! Index conventions used throughout the crate:
//! * `k` indexes valuations `v^1 < ... < v^K` (0-based),
//! * `l` indexes capacities `c^1 < ... < c^L` (0-based),
//! * contract matrices are `K x L` (row = valuation, column = capacity),
//! * probability and weight matrices are `L x K` (row = capacity, column = valuation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default absolute tolerance for numeric comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Absolute tolerance on the total mass of a client distribution.
pub const PROBABILITY_SUM_TOL: f64 = 1e-9;

/// A contract item, i.e. a type `(v^k, c^l)` of the lattice `V x C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Item {
    pub k: usize,
    pub l: usize,
}

impl Item {
    pub fn new(k: usize, l: usize) -> Self {
        Item { k, l }
    }
}

/// What a client signs: one menu item, or nothing.
///
/// Opting out behaves exactly like an item with `x = 0, p = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selection {
    Item(Item),
    OptOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeGrid {
    valuations: Vec<f64>,
    capacities: Vec<f64>,
}

impl TypeGrid {
    pub fn new(valuations: Vec<f64>, capacities: Vec<f64>) -> Result<Self> {
        check_strictly_increasing("valuations", &valuations)?;
        check_strictly_increasing("capacities", &capacities)?;
        Ok(TypeGrid {
            valuations,
            capacities,
        })
    }

    /// Number of valuation levels `K`.
    pub fn num_valuations(&self) -> usize {
        self.valuations.len()
    }

    /// Number of capacity levels `L`.
    pub fn num_capacities(&self) -> usize {
        self.capacities.len()
    }

    pub fn valuations(&self) -> &[f64] {
        &self.valuations
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn valuation(&self, k: usize) -> f64 {
        self.valuations[k]
    }

    pub fn capacity(&self, l: usize) -> f64 {
        self.capacities[l]
    }

    pub fn top_valuation(&self) -> f64 {
        *self.valuations.last().expect("grid has K >= 1")
    }

    pub fn max_capacity(&self) -> f64 {
        *self.capacities.last().expect("grid has L >= 1")
    }

    /// All items in `(k, l)` lexicographic order.
    pub fn items(&self) -> impl Iterator<Item = Item> + '_ {
        let l_count = self.num_capacities();
        (0..self.num_valuations()).flat_map(move |k| (0..l_count).map(move |l| Item::new(k, l)))
    }

    pub fn contains(&self, item: Item) -> bool {
        item.k < self.num_valuations() && item.l < self.num_capacities()
    }

    pub(crate) fn check_item(&self, item: Item) -> Result<()> {
        if self.contains(item) {
            Ok(())
        } else {
            Err(Error::Index(format!(
                "item (k={}, l={}) outside a {}x{} grid",
                item.k,
                item.l,
                self.num_valuations(),
                self.num_capacities()
            )))
        }
    }
}

fn check_strictly_increasing(what: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(what, "must contain at least one value"));
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::invalid(
                format!("{what}[{i}]"),
                format!("{v} is not a finite positive number"),
            ));
        }
        if i > 0 && values[i - 1] >= v {
            return Err(Error::invalid(
                format!("{what}[{i}]"),
                format!("{v} does not exceed the previous entry {}", values[i - 1]),
            ));
        }
    }
    Ok(())
}

/// A client's joint type distribution; `probs[(l, k)]` is the probability of
/// type `(v^k, c^l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDistribution {
    probs: Matrix,
}

impl ClientDistribution {
    pub fn new(probs: Matrix) -> Result<Self> {
        for (idx, &p) in probs.as_slice().iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                let (l, k) = (idx / probs.cols().max(1), idx % probs.cols().max(1));
                return Err(Error::invalid(
                    format!("probs[{l}][{k}]"),
                    format!("{p} is not a probability"),
                ));
            }
        }
        let total = probs.sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(Error::invalid(
                "probs",
                format!("entries sum to {total}, expected 1"),
            ));
        }
        Ok(ClientDistribution { probs })
    }

    /// A distribution putting all mass on a single type.
    pub fn point_mass(grid: &TypeGrid, item: Item) -> Result<Self> {
        grid.check_item(item)?;
        let mut probs = Matrix::zeros(grid.num_capacities(), grid.num_valuations());
        probs[(item.l, item.k)] = 1.0;
        Ok(ClientDistribution { probs })
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    /// Probability of type `(v^k, c^l)`.
    pub fn prob(&self, item: Item) -> f64 {
        self.probs[(item.l, item.k)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    grid: TypeGrid,
    clients: Vec<ClientDistribution>,
    alpha: f64,
    penalty: f64,
    demand_floor: f64,
}

impl MarketInstance {
    pub fn new(
        grid: TypeGrid,
        clients: Vec<ClientDistribution>,
        alpha: f64,
        penalty: f64,
        demand_floor: f64,
    ) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::invalid("clients", "at least one client is required"));
        }
        let expected = (grid.num_capacities(), grid.num_valuations());
        for (i, client) in clients.iter().enumerate() {
            if client.probs.shape() != expected {
                return Err(Error::shape(
                    format!("clients[{i}].probs"),
                    format!("{}x{}", expected.0, expected.1),
                    format!("{}x{}", client.probs.rows(), client.probs.cols()),
                ));
            }
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::invalid("alpha", format!("{alpha} must be finite and positive")));
        }
        if !penalty.is_finite() || penalty < 0.0 {
            return Err(Error::invalid(
                "penalty",
                format!("{penalty} must be finite and non-negative"),
            ));
        }
        if !demand_floor.is_finite() || demand_floor < 0.0 {
            return Err(Error::invalid(
                "demand_floor",
                format!("{demand_floor} must be finite and non-negative"),
            ));
        }
        Ok(MarketInstance {
            grid,
            clients,
            alpha,
            penalty,
            demand_floor,
        })
    }

    pub fn grid(&self) -> &TypeGrid {
        &self.grid
    }

    pub fn clients(&self) -> &[ClientDistribution] {
        &self.clients
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    /// Rental price per resource unit.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Penalty per unit of shortfall below the demand floor.
    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn demand_floor(&self) -> f64 {
        self.demand_floor
    }

    /// True when the shortfall term can never be non-zero.
    pub fn penalty_inactive(&self) -> bool {
        self.penalty == 0.0 || self.demand_floor == 0.0
    }

    pub fn aggregate_weights(&self) -> AggregateWeights {
        AggregateWeights::from_instance(self)
    }
}

/// Expected number of clients of each type, `w^{l,k} = sum_i lambda_i^{l,k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateWeights {
    weights: Matrix,
}

impl AggregateWeights {
    pub fn from_instance(instance: &MarketInstance) -> Self {
        let grid = instance.grid();
        let mut weights = Matrix::zeros(grid.num_capacities(), grid.num_valuations());
        for client in instance.clients() {
            for (w, p) in weights
                .as_mut_slice()
                .iter_mut()
                .zip(client.probs().as_slice())
            {
                *w += p;
            }
        }
        AggregateWeights { weights }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.weights
    }

    pub fn weight(&self, item: Item) -> f64 {
        self.weights[(item.l, item.k)]
    }

    pub fn total(&self) -> f64 {
        self.weights.sum()
    }
}

/// A contract menu `(x, p)`; both matrices are `K x L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    allocation: Matrix,
    payment: Matrix,
}

impl Contract {
    /// Builds a contract, requiring finite non-negative entries.
    pub fn new(allocation: Matrix, payment: Matrix) -> Result<Self> {
        let contract = Contract::from_raw(allocation, payment)?;
        for (name, m) in [("allocation", &contract.allocation), ("payment", &contract.payment)] {
            for (idx, &value) in m.as_slice().iter().enumerate() {
                if value < 0.0 {
                    return Err(Error::invalid(
                        format!("{name}[{}][{}]", idx / m.cols(), idx % m.cols()),
                        format!("{value} is negative"),
                    ));
                }
            }
        }
        Ok(contract)
    }

    /// Builds a menu that may carry negative entries. The audit functions accept
    /// any menu; this constructor exists so perturbed or hand-edited menus can be
    /// diagnosed rather than rejected.
    pub fn from_raw(allocation: Matrix, payment: Matrix) -> Result<Self> {
        if allocation.shape() != payment.shape() {
            return Err(Error::shape(
                "payment",
                format!("{}x{}", allocation.rows(), allocation.cols()),
                format!("{}x{}", payment.rows(), payment.cols()),
            ));
        }
        if allocation.rows() == 0 || allocation.cols() == 0 {
            return Err(Error::invalid("contract", "menu must have at least one item"));
        }
        for (name, m) in [("allocation", &allocation), ("payment", &payment)] {
            if let Some(idx) = m.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    format!("{name}[{}][{}]", idx / m.cols(), idx % m.cols()),
                    "entry is not finite",
                ));
            }
        }
        Ok(Contract {
            allocation,
            payment,
        })
    }

    pub fn zero(grid: &TypeGrid) -> Self {
        let shape = (grid.num_valuations(), grid.num_capacities());
        Contract {
            allocation: Matrix::zeros(shape.0, shape.1),
            payment: Matrix::zeros(shape.0, shape.1),
        }
    }

    pub fn allocation(&self) -> &Matrix {
        &self.allocation
    }

    pub fn payment(&self) -> &Matrix {
        &self.payment
    }

    pub fn x(&self, item: Item) -> f64 {
        self.allocation[(item.k, item.l)]
    }

    pub fn p(&self, item: Item) -> f64 {
        self.payment[(item.k, item.l)]
    }

    pub fn into_parts(self) -> (Matrix, Matrix) {
        (self.allocation, self.payment)
    }

    pub fn check_shape(&self, grid: &TypeGrid) -> Result<()> {
        let expected = (grid.num_valuations(), grid.num_capacities());
        if self.allocation.shape() != expected {
            return Err(Error::shape(
                "contract",
                format!("{}x{}", expected.0, expected.1),
                format!("{}x{}", self.allocation.rows(), self.allocation.cols()),
            ));
        }
        Ok(())
    }

    /// Repurchase amount and payment of a selection; opting out yields `(0, 0)`.
    pub fn terms(&self, selection: Selection) -> (f64, f64) {
        match selection {
            Selection::Item(item) => (self.x(item), self.p(item)),
            Selection::OptOut => (0.0, 0.0),
        }
    }
}

/// Utility `p(chosen) - v^k x(chosen)` of a client whose true valuation is `v^k`.
pub fn client_utility(
    grid: &TypeGrid,
    contract: &Contract,
    true_valuation: usize,
    chosen: Item,
) -> Result<f64> {
    contract.check_shape(grid)?;
    if true_valuation >= grid.num_valuations() {
        return Err(Error::Index(format!(
            "valuation index {true_valuation} outside 0..{}",
            grid.num_valuations()
        )));
    }
    grid.check_item(chosen)?;
    Ok(utility_unchecked(grid, contract, true_valuation, chosen))
}

#[inline]
pub(crate) fn utility_unchecked(
    grid: &TypeGrid,
    contract: &Contract,
    true_valuation: usize,
    chosen: Item,
) -> f64 {
    contract.p(chosen) - grid.valuation(true_valuation) * contract.x(chosen)
}

/// Expected provider utility when every client reports truthfully.
pub fn provider_expected_utility(instance: &MarketInstance, contract: &Contract) -> Result<f64> {
    contract.check_shape(instance.grid())?;
    let alpha = instance.alpha();
    let mut margin = 0.0;
    let mut supply = 0.0;
    for client in instance.clients() {
        for item in instance.grid().items() {
            let lambda = client.prob(item);
            margin += lambda * (alpha * contract.x(item) - contract.p(item));
            supply += lambda * contract.x(item);
        }
    }
    Ok(margin + instance.penalty() * (supply - instance.demand_floor()).min(0.0))
}

/// Same quantity as [`provider_expected_utility`], evaluated through the
/// precomputed per-type weights.
pub fn provider_expected_utility_weighted(
    instance: &MarketInstance,
    weights: &AggregateWeights,
    contract: &Contract,
) -> Result<f64> {
    contract.check_shape(instance.grid())?;
    let expected = (
        instance.grid().num_capacities(),
        instance.grid().num_valuations(),
    );
    if weights.matrix().shape() != expected {
        return Err(Error::shape(
            "weights",
            format!("{}x{}", expected.0, expected.1),
            format!("{}x{}", weights.matrix().rows(), weights.matrix().cols()),
        ));
    }
    let alpha = instance.alpha();
    let (mut margin, mut supply) = (0.0, 0.0);
    for item in instance.grid().items() {
        let w = weights.weight(item);
        margin += w * (alpha * contract.x(item) - contract.p(item));
        supply += w * contract.x(item);
    }
    Ok(margin + instance.penalty() * (supply - instance.demand_floor()).min(0.0))
}

/// Provider utility for a realized profile of selections, one per client.
pub fn realized_provider_utility(
    instance: &MarketInstance,
    contract: &Contract,
    selections: &[Selection],
) -> Result<f64> {
    contract.check_shape(instance.grid())?;
    let mut supply = 0.0;
    let mut paid = 0.0;
    for selection in selections {
        if let Selection::Item(item) = selection {
            instance.grid().check_item(*item)?;
        }
        let (x, p) = contract.terms(*selection);
        supply += x;
        paid += p;
    }
    Ok(realized_from_totals(instance, supply, paid))
}

#[inline]
pub(crate) fn realized_from_totals(instance: &MarketInstance, supply: f64, paid: f64) -> f64 {
    instance.alpha() * supply - paid
        + instance.penalty() * (supply - instance.demand_floor()).min(0.0)
}
