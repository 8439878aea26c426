//! Within-model Metropolis-Hastings updates, trans-dimensional moves over
//! assignments and parent sets, the full sweep and chain initialisation.

pub mod init;
mod mh;
mod rjmcmc;
mod sweep;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModnetError, Result};
use crate::model::{Model, ModelParameters, ModularStructure, StateCache};

pub use init::{
    choose_k_bic, init_assignments_kmeans, initial_state, kmeans, kmeans_restarts, repair_small_modules, KInit,
};
pub use mh::{
    update_edge_probabilities, update_edge_probability, update_gamma, update_module_weight,
    update_parent_means, update_parent_means_all, update_split_point,
};
pub use rjmcmc::{
    merge_map, module_vector, propose_add_parent, propose_add_parent_with, propose_merge,
    propose_merge_with, propose_node_move, propose_node_move_with, propose_remove_parent,
    propose_remove_parent_with, propose_split, propose_split_with, sample_assignment_move,
    sample_structure_move, split_log_jacobian, split_map, MoveConfig, ParentFate, PinnedParameters,
    RatioOrientation, SplitPlan,
};
pub use sweep::{gibbs_sweep, run_chain, run_chains, RunOptions};

/// Every proposal type the sampler counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    ModuleWeight,
    SplitPoint,
    EdgeProbability,
    ParentMeans,
    Gamma,
    Split,
    Merge,
    NodeMove,
    AddParent,
    RemoveParent,
}

impl MoveKind {
    pub const ALL: [MoveKind; 10] = [
        MoveKind::ModuleWeight,
        MoveKind::SplitPoint,
        MoveKind::EdgeProbability,
        MoveKind::ParentMeans,
        MoveKind::Gamma,
        MoveKind::Split,
        MoveKind::Merge,
        MoveKind::NodeMove,
        MoveKind::AddParent,
        MoveKind::RemoveParent,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MoveKind::ModuleWeight => "module_weight",
            MoveKind::SplitPoint => "split_point",
            MoveKind::EdgeProbability => "edge_probability",
            MoveKind::ParentMeans => "parent_means",
            MoveKind::Gamma => "gamma",
            MoveKind::Split => "split",
            MoveKind::Merge => "merge",
            MoveKind::NodeMove => "node_move",
            MoveKind::AddParent => "add_parent",
            MoveKind::RemoveParent => "remove_parent",
        }
    }
}

/// Proposal and acceptance counts per move type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MoveStats {
    proposed: [u64; 10],
    accepted: [u64; 10],
}

impl MoveStats {
    pub fn record(&mut self, kind: MoveKind, accepted: bool) {
        self.proposed[kind.index()] += 1;
        if accepted {
            self.accepted[kind.index()] += 1;
        }
    }

    pub fn proposed(&self, kind: MoveKind) -> u64 {
        self.proposed[kind.index()]
    }

    pub fn accepted(&self, kind: MoveKind) -> u64 {
        self.accepted[kind.index()]
    }

    /// `None` before the first proposal.
    pub fn acceptance_rate(&self, kind: MoveKind) -> Option<f64> {
        let p = self.proposed(kind);
        (p > 0).then(|| self.accepted(kind) as f64 / p as f64)
    }

    pub fn total_proposed(&self) -> u64 {
        self.proposed.iter().sum()
    }

    pub fn merge(&mut self, other: &MoveStats) {
        for i in 0..10 {
            self.proposed[i] += other.proposed[i];
            self.accepted[i] += other.accepted[i];
        }
    }
}

/// True with probability `min(1, exp(new - old))`.
pub fn mh_accept<R: Rng + ?Sized>(log_post_new: f64, log_post_old: f64, rng: &mut R) -> bool {
    log_ratio_accept(log_post_new - log_post_old, rng)
}

/// MH test on a precomputed log acceptance ratio. NaN and `-∞` reject.
pub(crate) fn log_ratio_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
        // Still consume a draw so the stream position does not depend on the guard.
        let _: f64 = rng.random();
        return false;
    }
    let u: f64 = rng.random();
    log_ratio >= 0.0 || u.ln() < log_ratio
}

/// One chain's current state together with its cached posterior terms.
///
/// `seed` and `iteration` locate the random stream: sweep `i` draws from
/// substreams keyed by `(seed, i)` only, so a state can be resumed exactly.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub structure: ModularStructure,
    pub params: ModelParameters,
    pub cache: StateCache,
    pub iteration: u64,
    pub seed: u64,
}

impl ChainState {
    /// Errors when the state has zero posterior density.
    pub fn new(model: &Model, structure: ModularStructure, params: ModelParameters, seed: u64) -> Result<Self> {
        params.check_consistency(&structure, model.dataset)?;
        let cache = model.evaluate(&structure, &params).ok_or_else(|| {
            ModnetError::Numerical("initial state has zero posterior density".into())
        })?;
        Ok(ChainState {
            structure,
            params,
            cache,
            iteration: 0,
            seed,
        })
    }

    pub fn log_post(&self) -> f64 {
        self.cache.eval.total()
    }

    pub fn n_modules(&self) -> usize {
        self.structure.n_modules()
    }

    /// Rebuilds the cache from scratch.
    pub fn recompute(&mut self, model: &Model) -> Result<()> {
        self.cache = model.evaluate(&self.structure, &self.params).ok_or_else(|| {
            ModnetError::Numerical("state has zero posterior density".into())
        })?;
        Ok(())
    }

    /// Replaces the continuous parameters when the new cache is given.
    pub(crate) fn accept_params(&mut self, params: ModelParameters, cache: StateCache) {
        self.params = params;
        self.cache = cache;
    }
}
