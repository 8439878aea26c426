//! Bayesian learning of modular dependency structures.
//!
//! Nodes carry condition-wise variables `X` (N × C) and candidate parents
//! emit directed edges `B` (R × N). A state assigns nodes to modules, gives
//! each module a parent set, and carries the continuous parameters of a
//! structured Gaussian model for `X` and a Bernoulli block model for `B`.
//! States are sampled with Metropolis–Hastings updates for the continuous
//! parameters and reversible-jump moves for module assignments and parent
//! sets.
//!
//! The `parallel` feature (on by default) lets independent work (conditions,
//! modules, chains, replicates) run on a rayon pool. Every task draws from
//! its own seeded stream, so results are identical with or without it.

pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod exec;
pub mod io;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod synthetic;

pub use error::{ModnetError, Result};
pub use model::{
    Dataset, KPrior, LikelihoodMode, LinkParams, Model, ModelParameters, ModularStructure,
    PriorConfig,
};
