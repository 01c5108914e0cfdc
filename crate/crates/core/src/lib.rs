//! Provider-optimal repurchasing contracts for idle computing resources.
//!
//! Clients hold private types `(v, c)`: a per-unit valuation of their spare
//! resources and a capacity. The provider posts a menu of `(x, p)` items, one
//! per type, and each client signs the item that maximizes `p - v x` among
//! those asking for at most `c` units.
//!
//! * [`model`]: types, distributions, instances, contracts, utilities,
//! * [`feasibility`]: audits for feasibility, greed, incentive compatibility
//!   and participation, plus regret,
//! * [`payments`]: cheapest payments making an allocation incentive compatible,
//! * [`solver`]: exact and relaxed optimal menus and a brute-force oracle,
//! * [`simulation`]: Monte Carlo markets under best responses.

pub mod error;
pub mod feasibility;
pub mod matrix;
pub mod model;
pub mod payments;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{
    client_utility, provider_expected_utility, realized_provider_utility, AggregateWeights,
    ClientDistribution, Contract, Item, MarketInstance, Selection, TypeGrid,
};
