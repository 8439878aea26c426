use super::mh::{
    update_edge_probabilities, update_gamma, update_module_weight, update_parent_means_all, update_split_point,
};
use super::rjmcmc::{sample_assignment_move, sample_structure_move, MoveConfig};
use super::{ChainState, MoveStats};
use crate::error::Result;
use crate::exec;
use crate::model::Model;
use crate::rng::{substream, Stream};

/// Sweep count and thinning of one chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub iterations: u64,
    /// Keep the states of iterations divisible by this.
    pub thinning: u64,
    pub moves: MoveConfig,
    /// Sweeps at the start of the chain (by absolute iteration) that keep
    /// the assignment and parent sets fixed while the continuous parameters
    /// settle. Only sensible inside the burn-in.
    pub warm_up: u64,
}

/// One full sweep: assignment move, one structure proposal per module,
/// per-module weight and split-point updates, the π block, the
/// parent-mean block and finally the γ pairs. With `trans_dimensional`
/// off the first two steps are skipped.
pub fn gibbs_sweep(state: &mut ChainState, model: &Model, cfg: &MoveConfig, trans_dimensional: bool, stats: &mut MoveStats) {
    let it = state.iteration + 1;
    let mut rng = substream(state.seed, it, Stream::Sweep, 0);
    if trans_dimensional {
        sample_assignment_move(state, model, cfg, &mut rng, stats);
        sample_structure_move(state, model, cfg, &mut rng, stats);
    }
    for k in 0..state.n_modules() {
        update_module_weight(state, model, k, &mut rng, stats);
        for r in state.structure.parents(k).to_vec() {
            update_split_point(state, model, k, r, &mut rng, stats);
        }
    }
    update_edge_probabilities(state, model, stats);
    update_parent_means_all(state, model, stats);
    for k in 0..state.n_modules() {
        for r in state.structure.parents(k).to_vec() {
            update_gamma(state, model, k, r, &mut rng, stats);
        }
    }
    state.iteration = it;
}

/// Runs `opts.iterations` sweeps, handing every retained state to `sink`.
pub fn run_chain<S>(state: &mut ChainState, model: &Model, opts: &RunOptions, mut sink: S) -> Result<MoveStats>
where
    S: FnMut(&ChainState) -> Result<()>,
{
    let mut stats = MoveStats::default();
    let thin = opts.thinning.max(1);
    for _ in 0..opts.iterations {
        let trans_dimensional = state.iteration >= opts.warm_up;
        gibbs_sweep(state, model, &opts.moves, trans_dimensional, &mut stats);
        if state.iteration % thin == 0 {
            sink(state)?;
        }
    }
    Ok(stats)
}

/// Runs independent chains, concurrently when `parallel` is set.
/// `make_sink(i)` builds the sample sink of chain `i`.
pub fn run_chains<F, S>(
    states: Vec<ChainState>,
    model: &Model,
    opts: &RunOptions,
    parallel: bool,
    make_sink: F,
) -> Vec<Result<(ChainState, MoveStats)>>
where
    F: Fn(usize) -> S + Sync + Send,
    S: FnMut(&ChainState) -> Result<()>,
{
    exec::map_vec(states, parallel, |i, mut state| {
        let stats = run_chain(&mut state, model, opts, make_sink(i))?;
        Ok((state, stats))
    })
}
