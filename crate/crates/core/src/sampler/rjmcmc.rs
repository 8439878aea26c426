use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{log_ratio_accept, ChainState, MoveKind, MoveStats};
use crate::error::{ModnetError, Result};
use crate::model::{beta_log_density, context_coefficient, normal_log_density, LinkParams, Model, ModelParameters, ModularStructure};

/// Which way round the move-type probabilities enter the acceptance ratio.
///
/// `ReverseOverForward` multiplies by `p(reverse move) / p(forward move)`,
/// the standard reversible-jump factor. `AsPrinted` uses the inverse,
/// which does not leave the posterior invariant unless the two
/// probabilities are equal; it is kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioOrientation {
    AsPrinted,
    #[default]
    ReverseOverForward,
}

impl RatioOrientation {
    fn log_factor(self, p_forward: f64, p_reverse: f64) -> f64 {
        match self {
            RatioOrientation::ReverseOverForward => p_reverse.ln() - p_forward.ln(),
            RatioOrientation::AsPrinted => p_forward.ln() - p_reverse.ln(),
        }
    }
}

impl std::str::FromStr for RatioOrientation {
    type Err = ModnetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(RatioOrientation::AsPrinted),
            "reverse-over-forward" => Ok(RatioOrientation::ReverseOverForward),
            other => Err(ModnetError::Config(format!("unknown ratio orientation `{other}`"))),
        }
    }
}

/// Continuous parameters held fixed as a function of the structure: every
/// module has weight `weight` and parent `r` always carries `links[r]`.
/// Trans-dimensional moves then draw no auxiliaries, which makes the
/// discrete posterior enumerable.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedParameters {
    pub weight: f64,
    pub links: Vec<LinkParams>,
}

impl PinnedParameters {
    /// Parameters of `structure` under the pinning.
    pub fn parameters(&self, structure: &ModularStructure, parent_means: DMatrix<f64>, pi0: f64) -> ModelParameters {
        let mut p = ModelParameters::empty(structure.n_modules(), parent_means, pi0);
        for k in 0..structure.n_modules() {
            p.weights[k] = self.weight;
            for &r in structure.parents(k) {
                p.links[k].insert(r, self.links[r]);
            }
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoveConfig {
    /// Probability of a split (module count +1).
    pub p_plus: f64,
    /// Probability of a merge (module count −1).
    pub p_minus: f64,
    /// Probability of moving one node between existing modules.
    pub p_zero: f64,
    /// Probability of proposing a parent addition rather than a removal.
    pub p_s: f64,
    pub orientation: RatioOrientation,
    /// Standard deviation of the split auxiliaries.
    pub split_aux_sd: f64,
    /// Standard deviation of the γ draws around their fitted centre in
    /// parent additions.
    pub add_aux_sd: f64,
    pub pinned: Option<PinnedParameters>,
}

impl Default for MoveConfig {
    fn default() -> Self {
        MoveConfig {
            p_plus: 0.25,
            p_minus: 0.25,
            p_zero: 0.5,
            p_s: 0.5,
            orientation: RatioOrientation::default(),
            split_aux_sd: 1.0,
            add_aux_sd: 0.25,
            pinned: None,
        }
    }
}

impl MoveConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.p_plus, self.p_minus, self.p_zero, self.p_s];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ModnetError::Config("move probabilities must lie in [0, 1]".into()));
        }
        if (self.p_plus + self.p_minus + self.p_zero - 1.0).abs() > 1e-9 {
            return Err(ModnetError::Config(format!(
                "p_plus + p_minus + p_zero = {}, expected 1",
                self.p_plus + self.p_minus + self.p_zero
            )));
        }
        if !(self.split_aux_sd > 0.0 && self.add_aux_sd > 0.0) {
            return Err(ModnetError::Config("auxiliary standard deviations must be positive".into()));
        }
        Ok(())
    }
}

/// Scalars of module `k` in a fixed order: `w_k`, then `(π, γ_Lo, γ_Hi, z)`
/// for each parent in ascending candidate order.
pub fn module_vector(params: &ModelParameters, k: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(1 + 4 * params.links[k].len());
    v.push(params.weights[k]);
    for l in params.links[k].values() {
        v.extend([l.pi, l.gamma_lo, l.gamma_hi, l.split]);
    }
    v
}

/// `(θ, u) ↦ (θ − u, θ + u)` per scalar.
pub fn split_map(theta: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = theta.iter().zip(u).map(|(t, v)| t - v).collect();
    let b = theta.iter().zip(u).map(|(t, v)| t + v).collect();
    (a, b)
}

/// Inverse of [`split_map`]: `(a, b) ↦ ((a + b)/2, (b − a)/2)`.
pub fn merge_map(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let theta = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let u = a.iter().zip(b).map(|(x, y)| 0.5 * (y - x)).collect();
    (theta, u)
}

/// `log |J|` of [`split_map`] on `d` scalars: `d log 2`.
pub fn split_log_jacobian(d: usize) -> f64 {
    d as f64 * LN_2
}

fn ln_choose2(k: usize) -> f64 {
    ((k * (k - 1)) as f64 / 2.0).ln()
}

fn normal_sample<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    let e: f64 = rng.sample(StandardNormal);
    sd * e
}

/// Evaluates a proposed state and applies the MH test with the given
/// log proposal correction.
#[allow(clippy::too_many_arguments)]
fn finish<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    structure: ModularStructure,
    params: ModelParameters,
    assignment_changed: bool,
    log_hastings: f64,
    kind: MoveKind,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let cand = if assignment_changed {
        model.evaluate(&structure, &params)
    } else {
        let mut counts = state.cache.counts.clone();
        counts.sizes = structure.module_sizes();
        model.evaluate_with_counts(&structure, &params, counts)
    };
    let new = cand.as_ref().map_or(f64::NEG_INFINITY, |c| c.eval.total());
    let accepted = log_ratio_accept(new - state.log_post() + log_hastings, rng);
    if accepted {
        if let Some(cache) = cand {
            state.structure = structure;
            state.params = params;
            state.cache = cache;
        }
    }
    stats.record(kind, accepted);
    accepted
}

fn reject<R: Rng + ?Sized>(kind: MoveKind, rng: &mut R, stats: &mut MoveStats) -> bool {
    log_ratio_accept(f64::NEG_INFINITY, rng);
    stats.record(kind, false);
    false
}

/// Where a parent of a split module goes. `First` is the part holding the
/// module's lowest-index node, `Second` the other part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentFate {
    Both,
    First,
    Second,
}

impl ParentFate {
    fn log_prob(self) -> f64 {
        match self {
            ParentFate::Both => -LN_2,
            ParentFate::First | ParentFate::Second => -2.0 * LN_2,
        }
    }

    fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u: f64 = rng.random();
        if u < 0.5 {
            ParentFate::Both
        } else if u < 0.75 {
            ParentFate::First
        } else {
            ParentFate::Second
        }
    }
}

/// A fully specified split of one module.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub module: usize,
    /// One node of each part, in ascending order.
    pub anchors: (usize, usize),
    /// Nodes moving to the new module: the part without the lowest-index member.
    pub second: Vec<usize>,
    /// Fate of every parent, in ascending candidate order.
    pub fates: Vec<ParentFate>,
    /// Auxiliaries for `w` and the four scalars of every shared parent.
    pub aux: Vec<f64>,
}

/// Mass every allocation step keeps on the less likely side.
const ALLOCATION_FLOOR: f64 = 0.02;

/// Sequential allocation of `members` (ascending) to the parts seeded by
/// the two anchors. Each node joins a part with probability driven by its
/// size and the node's squared distance to the part's running centroid.
/// `choose(node, p)` returns whether the node joins the second anchor's
/// part, where `p` is the probability of doing so. Returns that part and
/// the log-probability of all choices.
fn allocate(
    x: &DMatrix<f64>,
    members: &[usize],
    anchors: (usize, usize),
    mut choose: impl FnMut(usize, f64) -> bool,
) -> (Vec<usize>, f64) {
    let row = |n: usize| -> Vec<f64> { x.row(n).iter().copied().collect() };
    let mut sums = [row(anchors.0), row(anchors.1)];
    let mut counts = [1.0f64, 1.0];
    let mut second = vec![anchors.1];
    let mut log_p = 0.0;
    for &n in members {
        if n == anchors.0 || n == anchors.1 {
            continue;
        }
        let logit = |s: usize| {
            let d: f64 = x
                .row(n)
                .iter()
                .zip(&sums[s])
                .map(|(v, t)| {
                    let e = v - t / counts[s];
                    e * e
                })
                .sum();
            counts[s].ln() - 0.5 * d
        };
        let p_second = 1.0 / (1.0 + (logit(0) - logit(1)).exp());
        let p = (1.0 - ALLOCATION_FLOOR) * p_second + 0.5 * ALLOCATION_FLOOR;
        let to_second = choose(n, p);
        let s = usize::from(to_second);
        log_p += if to_second { p.ln() } else { (-p).ln_1p() };
        counts[s] += 1.0;
        for (t, v) in sums[s].iter_mut().zip(x.row(n).iter()) {
            *t += v;
        }
        if to_second {
            second.push(n);
        }
    }
    second.sort_unstable();
    (second, log_p)
}

/// Log-probability that [`allocate`] reproduces the given partition.
fn allocation_log_prob(x: &DMatrix<f64>, members: &[usize], anchors: (usize, usize), in_second: impl Fn(usize) -> bool) -> f64 {
    allocate(x, members, anchors, |n, _| in_second(n)).1
}

/// Scalars that are split or averaged: `w`, then the four scalars of every
/// shared parent.
fn shared_vector(params: &ModelParameters, k: usize, shared: &[usize]) -> Vec<f64> {
    let mut v = Vec::with_capacity(1 + 4 * shared.len());
    v.push(params.weights[k]);
    for r in shared {
        let l = params.links[k][r];
        v.extend([l.pi, l.gamma_lo, l.gamma_hi, l.split]);
    }
    v
}

fn link_from(v: &[f64], i: usize) -> LinkParams {
    let s = &v[1 + 4 * i..5 + 4 * i];
    LinkParams {
        pi: s[0],
        gamma_lo: s[1],
        gamma_hi: s[2],
        split: s[3],
    }
}

/// Parameters of one offspring: shared scalars from `v`, exclusive links copied.
fn offspring_links(
    v: &[f64],
    shared: &[usize],
    exclusive: impl Iterator<Item = (usize, LinkParams)>,
) -> BTreeMap<usize, LinkParams> {
    let mut links: BTreeMap<usize, LinkParams> = shared.iter().enumerate().map(|(i, &r)| (r, link_from(v, i))).collect();
    links.extend(exclusive);
    links
}

/// Applies a split plan: `plan.second` moves to a new module and each
/// parent goes to one or both parts.
pub fn propose_split_with<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &MoveConfig,
    plan: &SplitPlan,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let k = plan.module;
    let n_modules = state.n_modules();
    if k >= n_modules {
        return reject(MoveKind::Split, rng, stats);
    }
    let members = state.structure.members(k);
    let m = members.len();
    let (i, j) = plan.anchors;
    let parents = state.structure.parents(k).to_vec();
    let in_second = |n: usize| plan.second.binary_search(&n).is_ok();
    let valid = m >= 2
        && i < j
        && members.binary_search(&i).is_ok()
        && members.binary_search(&j).is_ok()
        && in_second(i) != in_second(j)
        && !plan.second.is_empty()
        && plan.second.windows(2).all(|w| w[0] < w[1])
        && !in_second(members[0])
        && plan.second.iter().all(|n| members.binary_search(n).is_ok())
        && plan.fates.len() == parents.len();
    if !valid {
        return reject(MoveKind::Split, rng, stats);
    }
    let shared: Vec<usize> = parents
        .iter()
        .zip(&plan.fates)
        .filter(|(_, f)| **f == ParentFate::Both)
        .map(|(&r, _)| r)
        .collect();
    let only = |fate: ParentFate| -> Vec<usize> {
        parents.iter().zip(&plan.fates).filter(|(_, f)| **f == fate).map(|(&r, _)| r).collect()
    };
    let (only_first, only_second) = (only(ParentFate::First), only(ParentFate::Second));

    let mut structure = state.structure.clone();
    structure.set_parents(k, shared.iter().chain(&only_first).copied().collect());
    let new = structure.push_module(shared.iter().chain(&only_second).copied().collect());
    for &n in &plan.second {
        structure.set_module(n, new);
    }

    let mut params = state.params.clone();
    params.weights.push(0.0);
    params.links.push(BTreeMap::new());
    let mut log_q_aux = 0.0;
    let mut log_jac = 0.0;
    if let Some(pin) = &cfg.pinned {
        for module in [k, new] {
            params.weights[module] = pin.weight;
            params.links[module] = structure.parents(module).iter().map(|&r| (r, pin.links[r])).collect();
        }
    } else {
        let theta = shared_vector(&state.params, k, &shared);
        if plan.aux.len() != theta.len() {
            return reject(MoveKind::Split, rng, stats);
        }
        let (a, b) = split_map(&theta, &plan.aux);
        let old = &state.params.links[k];
        params.weights[k] = a[0];
        params.links[k] = offspring_links(&a, &shared, only_first.iter().map(|r| (*r, old[r])));
        params.weights[new] = b[0];
        params.links[new] = offspring_links(&b, &shared, only_second.iter().map(|r| (*r, old[r])));
        log_q_aux = plan.aux.iter().map(|&u| normal_log_density(u, 0.0, cfg.split_aux_sd)).sum();
        log_jac = split_log_jacobian(theta.len());
    }

    // `allocate` puts the larger anchor's part second.
    let j_second = in_second(j);
    let log_alloc = allocation_log_prob(model.dataset.variables(), &members, plan.anchors, |n| in_second(n) == j_second);
    let fates: f64 = plan.fates.iter().map(|f| f.log_prob()).sum();
    let n_second = plan.second.len();
    let log_forward = -(n_modules as f64).ln() - ln_choose2(m) + log_alloc + fates + log_q_aux;
    let log_reverse = -ln_choose2(n_modules + 1) - (((m - n_second) * n_second) as f64).ln();
    let log_hastings = log_reverse - log_forward + log_jac + cfg.orientation.log_factor(cfg.p_plus, cfg.p_minus);
    finish(state, model, structure, params, true, log_hastings, MoveKind::Split, rng, stats)
}

/// Split of a uniformly chosen module, seeded by two uniformly chosen
/// anchor nodes and completed by sequential allocation.
pub fn propose_split<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &MoveConfig,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let k = rng.random_range(0..state.n_modules());
    let members = state.structure.members(k);
    let m = members.len();
    if m < 2 {
        return reject(MoveKind::Split, rng, stats);
    }
    let a = rng.random_range(0..m);
    let mut b = rng.random_range(0..m - 1);
    if b >= a {
        b += 1;
    }
    let anchors = (members[a.min(b)], members[a.max(b)]);
    let (with_j, _) = allocate(model.dataset.variables(), &members, anchors, |_, p| rng.random::<f64>() < p);
    let second = if with_j.binary_search(&members[0]).is_ok() {
        members.iter().copied().filter(|n| with_j.binary_search(n).is_err()).collect()
    } else {
        with_j
    };
    let fates: Vec<ParentFate> = (0..state.structure.parents(k).len()).map(|_| ParentFate::draw(rng)).collect();
    let n_shared = fates.iter().filter(|f| **f == ParentFate::Both).count();
    let aux: Vec<f64> = if cfg.pinned.is_some() {
        Vec::new()
    } else {
        (0..1 + 4 * n_shared).map(|_| normal_sample(rng, cfg.split_aux_sd)).collect()
    };
    let plan = SplitPlan {
        module: k,
        anchors,
        second,
        fates,
        aux,
    };
    propose_split_with(state, model, cfg, &plan, rng, stats)
}

/// Merges modules `a` and `b` into the lower label. Shared parents have
/// their scalars averaged; a parent of only one module keeps its link.
/// `anchors` holds one node of each module, as drawn by [`propose_merge`].
#[allow(clippy::too_many_arguments)]
pub fn propose_merge_with<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &MoveConfig,
    a: usize,
    b: usize,
    anchors: (usize, usize),
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let n_modules = state.n_modules();
    if a == b || a >= n_modules || b >= n_modules {
        return reject(MoveKind::Merge, rng, stats);
    }
    let (keep, absorbed) = (a.min(b), a.max(b));
    let anchor_modules = (state.structure.module_of(anchors.0), state.structure.module_of(anchors.1));
    if !(anchor_modules == (a, b) || anchor_modules == (b, a)) {
        return reject(MoveKind::Merge, rng, stats);
    }
    let sizes = state.structure.module_sizes();
    let union: Vec<usize> = (0..state.structure.n_nodes())
        .filter(|&n| {
            let k = state.structure.module_of(n);
            k == keep || k == absorbed
        })
        .collect();
    let m = union.len();
    let first = state.structure.module_of(union[0]);
    let second = if first == keep { absorbed } else { keep };
    let pa_first = state.structure.parents(first);
    let pa_second = state.structure.parents(second);
    let shared: Vec<usize> = pa_first.iter().copied().filter(|r| pa_second.binary_search(r).is_ok()).collect();
    let mut all: Vec<usize> = pa_first.iter().chain(pa_second).copied().collect();
    all.sort_unstable();
    all.dedup();
    let fates: f64 = all
        .iter()
        .map(|r| {
            let fate = match (pa_first.binary_search(r).is_ok(), pa_second.binary_search(r).is_ok()) {
                (true, true) => ParentFate::Both,
                (true, false) => ParentFate::First,
                _ => ParentFate::Second,
            };
            fate.log_prob()
        })
        .sum();

    let mut structure = state.structure.clone();
    structure.merge_modules(keep, absorbed);

    let mut params = state.params.clone();
    let mut log_q_aux = 0.0;
    let mut log_jac = 0.0;
    if let Some(pin) = &cfg.pinned {
        params.weights[keep] = pin.weight;
        params.links[keep] = all.iter().map(|&r| (r, pin.links[r])).collect();
    } else {
        let (theta, u) = merge_map(
            &shared_vector(&state.params, first, &shared),
            &shared_vector(&state.params, second, &shared),
        );
        let exclusive = all
            .iter()
            .filter(|r| shared.binary_search(r).is_err())
            .map(|&r| (r, *state.params.link(first, r).or_else(|| state.params.link(second, r)).expect("parent has a link")));
        params.weights[keep] = theta[0];
        params.links[keep] = offspring_links(&theta, &shared, exclusive);
        log_q_aux = u.iter().map(|&v| normal_log_density(v, 0.0, cfg.split_aux_sd)).sum();
        log_jac = -split_log_jacobian(theta.len());
    }
    params.weights.remove(absorbed);
    params.links.remove(absorbed);

    let (lo, hi) = (anchors.0.min(anchors.1), anchors.0.max(anchors.1));
    let hi_module = state.structure.module_of(hi);
    let log_alloc = allocation_log_prob(model.dataset.variables(), &union, (lo, hi), |n| {
        state.structure.module_of(n) == hi_module
    });
    let log_forward = -ln_choose2(n_modules) - ((sizes[a] * sizes[b]) as f64).ln();
    let log_reverse = -((n_modules - 1) as f64).ln() - ln_choose2(m) + log_alloc + fates + log_q_aux;
    let log_hastings = log_reverse - log_forward + log_jac + cfg.orientation.log_factor(cfg.p_minus, cfg.p_plus);
    finish(state, model, structure, params, true, log_hastings, MoveKind::Merge, rng, stats)
}

/// Merge of a uniformly chosen pair of modules with one uniformly chosen
/// anchor node in each.
pub fn propose_merge<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &MoveConfig,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let k = state.n_modules();
    if k < 2 {
        return reject(MoveKind::Merge, rng, stats);
    }
    let a = rng.random_range(0..k);
    let mut b = rng.random_range(0..k - 1);
    if b >= a {
        b += 1;
    }
    let ma = state.structure.members(a);
    let mb = state.structure.members(b);
    let anchors = (ma[rng.random_range(0..ma.len())], mb[rng.random_range(0..mb.len())]);
    propose_merge_with(state, model, cfg, a, b, anchors, rng, stats)
}

/// Moves `node` into module `target`.
pub fn propose_node_move_with<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    node: usize,
    target: usize,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let source = state.structure.module_of(node);
    let sizes = state.structure.module_sizes();
    if target == source || target >= sizes.len() || sizes[source] < 2 {
        return reject(MoveKind::NodeMove, rng, stats);
    }
    let mut structure = state.structure.clone();
    structure.set_module(node, target);
    // Node chosen uniformly within its module: forward 1/|M_src|, reverse 1/(|M_tgt| + 1).
    let log_hastings = (sizes[source] as f64).ln() - ((sizes[target] + 1) as f64).ln();
    let params = state.params.clone();
    finish(state, model, structure, params, true, log_hastings, MoveKind::NodeMove, rng, stats)
}

/// Moves a uniform node of a uniform source module to a uniform other module.
pub fn propose_node_move<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let k = state.n_modules();
    if k < 2 {
        return reject(MoveKind::NodeMove, rng, stats);
    }
    let source = rng.random_range(0..k);
    let mut target = rng.random_range(0..k - 1);
    if target >= source {
        target += 1;
    }
    let members = state.structure.members(source);
    let node = members[rng.random_range(0..members.len())];
    propose_node_move_with(state, model, node, target, rng, stats)
}

/// Draws split (+1), merge (−1) or node move (0) and applies it.
pub fn sample_assignment_move<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &MoveConfig,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let u: f64 = rng.random();
    if u < cfg.p_plus {
        propose_split(state, model, cfg, rng, stats)
    } else if u < cfg.p_plus + cfg.p_minus {
        propose_merge(state, model, cfg, rng, stats)
    } else {
        propose_node_move(state, model, rng, stats)
    }
}

/// Data-informed proposal for the parameters of a new link `(k, r)`,
/// computed from the state without that link. Removing the link from the
/// resulting state recovers the same proposal, so both directions use the
/// same density.
struct LinkProposal {
    /// Residual mean of module `k`'s free members per condition after the
    /// other parents' contributions.
    target: Vec<f64>,
    /// Parent means of `r` per condition.
    mu: Vec<f64>,
    z_mean: f64,
    z_sd: f64,
    pi_a: f64,
    pi_b: f64,
}

impl LinkProposal {
    fn new(structure: &ModularStructure, params: &ModelParameters, model: &Model, k: usize, r: usize) -> Self {
        let dataset = model.dataset;
        let x = dataset.variables();
        let in_use = structure.candidates_in_use(dataset.n_candidates());
        let free: Vec<usize> = structure
            .members(k)
            .into_iter()
            .filter(|&n| !dataset.candidate_of(n).is_some_and(|c| in_use[c]))
            .collect();
        let n_cond = dataset.n_conditions();
        let mu: Vec<f64> = (0..n_cond).map(|c| params.parent_means[(r, c)]).collect();
        let target = (0..n_cond)
            .map(|c| {
                let xbar = if free.is_empty() {
                    0.0
                } else {
                    free.iter().map(|&n| x[(n, c)]).sum::<f64>() / free.len() as f64
                };
                let others: f64 = params.links[k]
                    .iter()
                    .filter(|(&q, _)| q != r)
                    .map(|(&q, l)| {
                        let m = params.parent_means[(q, c)];
                        context_coefficient(l.gamma_lo, l.gamma_hi, l.split, m) * m
                    })
                    .sum();
                xbar - others
            })
            .collect();
        let z_mean = mu.iter().sum::<f64>() / n_cond as f64;
        let var = mu.iter().map(|m| (m - z_mean) * (m - z_mean)).sum::<f64>() / n_cond as f64;
        let size = structure.module_sizes()[k];
        let hits = (0..dataset.n_nodes())
            .filter(|&n| structure.module_of(n) == k && dataset.edge(r, n))
            .count();
        LinkProposal {
            target,
            mu,
            z_mean,
            z_sd: var.sqrt().max(0.1),
            pi_a: hits as f64 + 1.0,
            pi_b: (size - hits) as f64 + 1.0,
        }
    }

    /// Least-squares `(γ_Lo, γ_Hi)` of the residual target on the parent
    /// mean, fitted separately on each side of `z`.
    fn gamma_centre(&self, z: f64) -> (f64, f64) {
        let mut acc = [(0.0, 0.0); 2];
        for (&m, &y) in self.mu.iter().zip(&self.target) {
            let side = usize::from(m >= z);
            acc[side].0 += m * y;
            acc[side].1 += m * m;
        }
        let fit = |(xy, xx): (f64, f64)| if xx > 1e-12 { xy / xx } else { 0.0 };
        (fit(acc[0]), fit(acc[1]))
    }

    /// Centre of the proposal: split at the mean parent mean, fitted γ
    /// pair and the posterior-mean π under a flat prior.
    fn centre(&self) -> LinkParams {
        let (gamma_lo, gamma_hi) = self.gamma_centre(self.z_mean);
        LinkParams {
            gamma_lo,
            gamma_hi,
            split: self.z_mean,
            pi: self.pi_a / (self.pi_a + self.pi_b),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, sd: f64, rng: &mut R) -> LinkParams {
        let split = self.z_mean + normal_sample(rng, self.z_sd);
        let (lo, hi) = self.gamma_centre(split);
        let gamma_lo = lo + normal_sample(rng, sd);
        let gamma_hi = hi + normal_sample(rng, sd);
        let pi = Beta::new(self.pi_a, self.pi_b).map_or(0.5, |b| b.sample(rng));
        LinkParams {
            gamma_lo,
            gamma_hi,
            split,
            pi,
        }
    }

    fn log_density(&self, link: &LinkParams, sd: f64) -> f64 {
        let pi = beta_log_density(link.pi, self.pi_a, self.pi_b);
        if pi == f64::NEG_INFINITY {
            return pi;
        }
        let (lo, hi) = self.gamma_centre(link.split);
        pi + normal_log_density(link.split, self.z_mean, self.z_sd)
            + normal_log_density(link.gamma_lo, lo, sd)
            + normal_log_density(link.gamma_hi, hi, sd)
    }
}

/// Typical parameters for a new link `(k, r)` given the rest of the state.
pub(crate) fn fitted_link(structure: &ModularStructure, params: &ModelParameters, model: &Model, k: usize, r: usize) -> LinkParams {
    LinkProposal::new(structure, params, model, k, r).centre()
}

/// Adds candidate `r` to `Pa_k` with the given link parameters.
#[allow(clippy::too_many_arguments)]
pub fn propose_add_parent_with<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &MoveConfig,
    k: usize,
    r: usize,
    link: LinkParams,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let n_cand = model.dataset.n_candidates();
    let r_k = state.structure.parents(k).len();
    if r >= n_cand || state.structure.has_parent(k, r) {
        return reject(MoveKind::AddParent, rng, stats);
    }
    let log_q_aux = if cfg.pinned.is_some() {
        0.0
    } else {
        LinkProposal::new(&state.structure, &state.params, model, k, r).log_density(&link, cfg.add_aux_sd)
    };
    let mut structure = state.structure.clone();
    structure.insert_parent(k, r);
    let mut params = state.params.clone();
    params.links[k].insert(r, link);

    let log_forward = -((n_cand - r_k) as f64).ln() + log_q_aux;
    let log_reverse = -((r_k + 1) as f64).ln();
    let log_hastings = log_reverse - log_forward + cfg.orientation.log_factor(cfg.p_s, 1.0 - cfg.p_s);
    finish(state, model, structure, params, false, log_hastings, MoveKind::AddParent, rng, stats)
}

/// Adds a uniformly chosen non-parent to `Pa_k`.
pub fn propose_add_parent<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &MoveConfig,
    k: usize,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let n_cand = model.dataset.n_candidates();
    let free: Vec<usize> = (0..n_cand).filter(|&r| !state.structure.has_parent(k, r)).collect();
    if free.is_empty() {
        return reject(MoveKind::AddParent, rng, stats);
    }
    let r = free[rng.random_range(0..free.len())];
    let link = match &cfg.pinned {
        Some(pin) => pin.links[r],
        None => LinkProposal::new(&state.structure, &state.params, model, k, r).draw(cfg.add_aux_sd, rng),
    };
    propose_add_parent_with(state, model, cfg, k, r, link, rng, stats)
}

/// Removes candidate `r` from `Pa_k`, dropping its link parameters.
pub fn propose_remove_parent_with<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &MoveConfig,
    k: usize,
    r: usize,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let n_cand = model.dataset.n_candidates();
    let r_k = state.structure.parents(k).len();
    let Some(&link) = state.params.link(k, r) else {
        return reject(MoveKind::RemoveParent, rng, stats);
    };
    let mut structure = state.structure.clone();
    structure.remove_parent(k, r);
    let mut params = state.params.clone();
    params.links[k].remove(&r);
    let log_q_aux = if cfg.pinned.is_some() {
        0.0
    } else {
        LinkProposal::new(&structure, &params, model, k, r).log_density(&link, cfg.add_aux_sd)
    };

    let log_forward = -(r_k as f64).ln();
    let log_reverse = -((n_cand - r_k + 1) as f64).ln() + log_q_aux;
    let log_hastings = log_reverse - log_forward + cfg.orientation.log_factor(1.0 - cfg.p_s, cfg.p_s);
    finish(state, model, structure, params, false, log_hastings, MoveKind::RemoveParent, rng, stats)
}

/// Removes a uniformly chosen parent of module `k`.
pub fn propose_remove_parent<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &MoveConfig,
    k: usize,
    rng: &mut R,
    stats: &mut MoveStats,
) -> bool {
    let pa = state.structure.parents(k);
    if pa.is_empty() {
        return reject(MoveKind::RemoveParent, rng, stats);
    }
    let r = pa[rng.random_range(0..pa.len())];
    propose_remove_parent_with(state, model, cfg, k, r, rng, stats)
}

/// One add-or-remove proposal per module, in module order.
pub fn sample_structure_move<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &MoveConfig,
    rng: &mut R,
    stats: &mut MoveStats,
) {
    for k in 0..state.n_modules() {
        let u: f64 = rng.random();
        if u < cfg.p_s {
            propose_add_parent(state, model, cfg, k, rng, stats);
        } else {
            propose_remove_parent(state, model, cfg, k, rng, stats);
        }
    }
}
