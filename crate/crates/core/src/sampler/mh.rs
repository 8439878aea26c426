use rand::Rng;
use rand_distr::StandardNormal;

use super::{log_ratio_accept, ChainState, MoveKind, MoveStats};
use crate::exec;
use crate::model::likelihood::{bernoulli_block, condition_log_density};
use crate::model::prior::{beta_log_density, column_log_prior};
use crate::model::{log_likelihood_network_from_counts, structural_log_prior, MeanPlan, Model, ModelParameters};
use crate::rng::{substream, Stream};

fn normal<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    let e: f64 = rng.sample(StandardNormal);
    sd * e
}

/// Full re-evaluation of a fixed-structure parameter proposal.
fn try_params<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    params: ModelParameters,
    kind: MoveKind,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let cand = model.evaluate_with_counts(&state.structure, &params, state.cache.counts.clone());
    let new = cand.as_ref().map_or(f64::NEG_INFINITY, |c| c.eval.total());
    let accepted = log_ratio_accept(new - state.log_post(), rng);
    if accepted {
        if let Some(cache) = cand {
            state.accept_params(params, cache);
        }
    }
    stats.record(kind, accepted);
    accepted
}

/// Random-walk update of the shared weight of module `k`.
pub fn update_module_weight<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    k: usize,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let mut params = state.params.clone();
    params.weights[k] += normal(rng, model.prior.sigma_w);
    try_params(state, model, params, MoveKind::ModuleWeight, rng, stats)
}

/// Random-walk update of the split point of parent `r` in module `k`.
pub fn update_split_point<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    k: usize,
    r: usize,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let mut params = state.params.clone();
    let step = normal(rng, model.prior.sigma_z);
    if let Some(l) = params.links[k].get_mut(&r) {
        l.split += step;
    }
    try_params(state, model, params, MoveKind::SplitPoint, rng, stats)
}

/// Joint random walk on the `(γ_Lo, γ_Hi)` pair of parent `r` in module `k`.
pub fn update_gamma<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    k: usize,
    r: usize,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let mut params = state.params.clone();
    let lo = normal(rng, model.prior.sigma_gamma);
    let hi = normal(rng, model.prior.sigma_gamma);
    if let Some(l) = params.links[k].get_mut(&r) {
        l.gamma_lo += lo;
        l.gamma_hi += hi;
    }
    try_params(state, model, params, MoveKind::Gamma, rng, stats)
}

/// One π step for `(k, r)` using only the terms π enters: its Beta prior
/// and the module's Bernoulli block for `r`.
fn edge_probability_step<R: Rng + ?Sized>(
    pi: &mut f64,
    successes: u32,
    trials: usize,
    model: &Model,
    rng: &mut R,
) -> bool {
    let prop = *pi + normal(rng, model.prior.sigma_pi);
    let log_ratio = if prop > 0.0 && prop < 1.0 {
        let prior = model.prior;
        let mut d = beta_log_density(prop, prior.a_pi, prior.b_pi) - beta_log_density(*pi, prior.a_pi, prior.b_pi);
        if model.mode.uses_network() {
            d += bernoulli_block(successes, trials, prop.ln(), (-prop).ln_1p())
                - bernoulli_block(successes, trials, pi.ln(), (-*pi).ln_1p());
        }
        d
    } else {
        f64::NEG_INFINITY
    };
    let accepted = log_ratio_accept(log_ratio, rng);
    if accepted {
        *pi = prop;
    }
    accepted
}

/// Refreshes the terms that depend on π after link probabilities changed.
fn refresh_link_terms(state: &mut ChainState, model: &Model) {
    let eval = &mut state.cache.eval;
    eval.structural_prior = structural_log_prior(&state.structure, &state.params, model.prior);
    eval.network = if model.mode.uses_network() {
        log_likelihood_network_from_counts(&state.cache.counts, &state.structure, &state.params)
    } else {
        0.0
    };
    state.cache.plan = MeanPlan::new(&state.structure, &state.params, model.dataset);
}

/// Random-walk update of `π_k^r`; proposals outside (0, 1) are rejected.
pub fn update_edge_probability<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    k: usize,
    r: usize,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let successes = state.cache.counts.counts[k][r];
    let trials = state.cache.counts.sizes[k];
    let Some(link) = state.params.links[k].get_mut(&r) else {
        stats.record(MoveKind::EdgeProbability, false);
        return false;
    };
    let accepted = edge_probability_step(&mut link.pi, successes, trials, model, rng);
    if accepted {
        refresh_link_terms(state, model);
    }
    stats.record(MoveKind::EdgeProbability, accepted);
    accepted
}

/// π updates for every module. Modules are independent given the
/// assignment, so each runs on its own substream and may run in parallel.
pub fn update_edge_probabilities(state: &mut ChainState, model: &Model, stats: &mut MoveStats) {
    let (seed, it) = (state.seed, state.iteration + 1);
    let structure = &state.structure;
    let params = &state.params;
    let counts = &state.cache.counts;
    let results = exec::map_indexed(structure.n_modules(), model.parallel, |k| {
        let mut rng = substream(seed, it, Stream::EdgeProbability, k as u64);
        let mut links = params.links[k].clone();
        let mut flags = Vec::with_capacity(links.len());
        for (&r, link) in links.iter_mut() {
            flags.push(edge_probability_step(&mut link.pi, counts.counts[k][r], counts.sizes[k], model, &mut rng));
        }
        (links, flags)
    });
    let mut any = false;
    for (k, (links, flags)) in results.into_iter().enumerate() {
        for f in flags {
            stats.record(MoveKind::EdgeProbability, f);
            any |= f;
        }
        state.params.links[k] = links;
    }
    if any {
        refresh_link_terms(state, model);
    }
}

struct ColumnUpdate {
    accepted: bool,
    column: Vec<f64>,
    variables: Option<f64>,
    prior: f64,
}

fn parent_means_step<R: Rng + ?Sized>(state: &ChainState, model: &Model, c: usize, rng: &mut R) -> ColumnUpdate {
    let current = state.params.parent_means.column(c);
    let column: Vec<f64> = current
        .iter()
        .map(|&m| m + normal(rng, model.prior.sigma_mu))
        .collect();
    let prior = column_log_prior(column.iter().copied(), model.prior);
    let mut log_ratio = prior - state.cache.eval.mean_prior[c];
    let variables = model.mode.uses_variables().then(|| {
        condition_log_density(&state.cache.plan, &state.cache.op, model.dataset, &column, c)
    });
    if let Some(v) = variables {
        log_ratio += v - state.cache.eval.variables[c];
    }
    let accepted = log_ratio_accept(log_ratio, rng);
    ColumnUpdate {
        accepted,
        column,
        variables,
        prior,
    }
}

fn apply_column(state: &mut ChainState, c: usize, upd: ColumnUpdate) {
    if !upd.accepted {
        return;
    }
    state.params.parent_means.column_mut(c).copy_from_slice(&upd.column);
    state.cache.eval.mean_prior[c] = upd.prior;
    if let Some(v) = upd.variables {
        state.cache.eval.variables[c] = v;
    }
}

/// Joint random walk on the parent means of condition `c`. Only that
/// condition's likelihood term and prior column are touched.
pub fn update_parent_means<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    c: usize,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let upd = parent_means_step(state, model, c, rng);
    let accepted = upd.accepted;
    apply_column(state, c, upd);
    stats.record(MoveKind::ParentMeans, accepted);
    accepted
}

/// Parent-mean updates for every condition, each on its own substream.
pub fn update_parent_means_all(state: &mut ChainState, model: &Model, stats: &mut MoveStats) {
    let (seed, it) = (state.seed, state.iteration + 1);
    let snapshot: &ChainState = state;
    let updates = exec::map_indexed(model.dataset.n_conditions(), model.parallel, |c| {
        let mut rng = substream(seed, it, Stream::ParentMeans, c as u64);
        parent_means_step(snapshot, model, c, &mut rng)
    });
    for (c, upd) in updates.into_iter().enumerate() {
        stats.record(MoveKind::ParentMeans, upd.accepted);
        apply_column(state, c, upd);
    }
}
