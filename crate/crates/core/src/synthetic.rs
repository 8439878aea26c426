//! Forward sampling of structures, parameters and datasets with known truth.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{ModnetError, Result};
use crate::model::{check_identifiability, condition_means, Dataset, LinkParams, ModelParameters, ModularStructure, RegressionOperator};

const MAX_WEIGHT_ATTEMPTS: usize = 100;

/// Ranges the generating parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRanges {
    pub weight: (f64, f64),
    pub pi: (f64, f64),
    pub gamma: (f64, f64),
    /// Minimum `|γ_Hi − γ_Lo|`.
    pub min_gamma_gap: f64,
    pub split_sd: f64,
    pub parent_mean_sd: f64,
    pub pi0: f64,
    pub cond_threshold: f64,
}

impl Default for ParameterRanges {
    fn default() -> Self {
        ParameterRanges {
            weight: (-0.5, 0.5),
            pi: (0.6, 0.95),
            gamma: (-2.0, 2.0),
            min_gamma_gap: 0.5,
            split_sd: 1.0,
            parent_mean_sd: 2.0,
            pi0: 0.05,
            cond_threshold: 1e8,
        }
    }
}

/// Generating structure and parameters together with the induced links.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub structure: ModularStructure,
    pub params: ModelParameters,
    /// `(candidate r, node n)` with `r ∈ Pa_{A(n)}`.
    pub link_set: BTreeSet<(usize, usize)>,
}

impl GroundTruth {
    pub fn new(structure: ModularStructure, params: ModelParameters) -> Self {
        let link_set = links_of(&structure);
        GroundTruth {
            structure,
            params,
            link_set,
        }
    }
}

/// Links induced by a structure.
pub fn links_of(structure: &ModularStructure) -> BTreeSet<(usize, usize)> {
    (0..structure.n_nodes())
        .flat_map(|n| structure.parents(structure.module_of(n)).iter().map(move |&r| (r, n)))
        .collect()
}

/// A random structure together with the node index of every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStructure {
    pub structure: ModularStructure,
    pub candidates: Vec<usize>,
}

/// Truncated geometric on `1..=max` with success probability ½.
fn parent_set_size<R: Rng + ?Sized>(max: usize, rng: &mut R) -> usize {
    let weights: Vec<f64> = (1..=max).map(|s| 0.5f64.powi(s as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut t = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if t < *w {
            return i + 1;
        }
        t -= w;
    }
    max
}

/// Random modular structure over `n` nodes, `k` modules and `r` candidate
/// parents placed at random nodes. Every module receives at least two
/// non-candidate nodes and between 1 and `max_parents` parents.
pub fn generate_structure<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    r: usize,
    max_parents: usize,
    rng: &mut R,
) -> Result<SyntheticStructure> {
    if k == 0 || k > n || r == 0 || r > n || max_parents == 0 {
        return Err(ModnetError::InvalidArgument(format!(
            "need 1 <= K <= N, 1 <= R <= N and max_parents >= 1 (N = {n}, K = {k}, R = {r}, max_parents = {max_parents})"
        )));
    }
    if n - r < 2 * k {
        return Err(ModnetError::InvalidArgument(format!(
            "{} non-candidate nodes cannot give {k} modules two free nodes each",
            n - r
        )));
    }
    let mut candidates = index::sample(rng, n, r).into_vec();
    candidates.sort_unstable();
    let is_candidate: BTreeSet<usize> = candidates.iter().copied().collect();
    let mut free: Vec<usize> = (0..n).filter(|i| !is_candidate.contains(i)).collect();
    free.shuffle(rng);

    let mut assignment = vec![0usize; n];
    for (i, &node) in free.iter().enumerate() {
        assignment[node] = if i < 2 * k { i / 2 } else { rng.random_range(0..k) };
    }
    for &node in &candidates {
        assignment[node] = rng.random_range(0..k);
    }

    let cap = max_parents.min(r);
    for _ in 0..MAX_WEIGHT_ATTEMPTS {
        let parents: Vec<Vec<usize>> = (0..k)
            .map(|_| {
                let size = parent_set_size(cap, rng);
                let mut pa = index::sample(rng, r, size).into_vec();
                pa.sort_unstable();
                pa
            })
            .collect();
        if parents.iter().map(Vec::len).sum::<usize>() < n {
            let structure = ModularStructure::new(assignment, parents)?;
            return Ok(SyntheticStructure { structure, candidates });
        }
    }
    Err(ModnetError::InvalidArgument(format!(
        "could not draw parent sets with fewer than {n} parent slots in total"
    )))
}

fn gamma_pair<R: Rng + ?Sized>(ranges: &ParameterRanges, rng: &mut R) -> Result<(f64, f64)> {
    let g = Uniform::new(ranges.gamma.0, ranges.gamma.1)
        .map_err(|e| ModnetError::InvalidArgument(format!("gamma range: {e}")))?;
    for _ in 0..10_000 {
        let (lo, hi) = (g.sample(rng), g.sample(rng));
        if (hi - lo).abs() >= ranges.min_gamma_gap {
            return Ok((lo, hi));
        }
    }
    Err(ModnetError::InvalidArgument("gamma range too narrow for the required gap".into()))
}

/// Placeholder dataset carrying only the dimensions and candidate layout.
fn layout(n: usize, c: usize, candidates: &[usize]) -> Result<Dataset> {
    Dataset::new(DMatrix::zeros(n, c.max(1)), vec![vec![0; n]; candidates.len()], candidates.to_vec())
}

/// Random parameters for `structure`; one weight per module is shared by
/// all its links. Weights are redrawn until `I − W` passes the guard.
pub fn generate_parameters<R: Rng + ?Sized>(
    structure: &ModularStructure,
    candidates: &[usize],
    n_conditions: usize,
    ranges: &ParameterRanges,
    rng: &mut R,
) -> Result<ModelParameters> {
    let k = structure.n_modules();
    let r = candidates.len();
    let pi = Uniform::new(ranges.pi.0, ranges.pi.1)
        .map_err(|e| ModnetError::InvalidArgument(format!("pi range: {e}")))?;
    let mut links = vec![BTreeMap::new(); k];
    for (m, map) in links.iter_mut().enumerate() {
        for &p in structure.parents(m) {
            let (gamma_lo, gamma_hi) = gamma_pair(ranges, rng)?;
            let z: f64 = rng.sample(StandardNormal);
            map.insert(
                p,
                LinkParams {
                    gamma_lo,
                    gamma_hi,
                    split: ranges.split_sd * z,
                    pi: pi.sample(rng),
                },
            );
        }
    }
    let means = DMatrix::from_fn(r, n_conditions, |_, _| {
        let e: f64 = rng.sample(StandardNormal);
        ranges.parent_mean_sd * e
    });
    let shape = layout(structure.n_nodes(), n_conditions, candidates)?;
    let w = Uniform::new(ranges.weight.0, ranges.weight.1)
        .map_err(|e| ModnetError::InvalidArgument(format!("weight range: {e}")))?;
    let mut params = ModelParameters {
        weights: vec![0.0; k],
        links,
        parent_means: means,
        pi0: ranges.pi0,
    };
    for _ in 0..MAX_WEIGHT_ATTEMPTS {
        params.weights = (0..k).map(|_| w.sample(rng)).collect();
        if check_identifiability(structure, &params, &shape, ranges.cond_threshold) {
            return Ok(params);
        }
    }
    Err(ModnetError::Numerical(format!(
        "no weights passed the conditioning guard in {MAX_WEIGHT_ATTEMPTS} attempts"
    )))
}

/// Draws `X_c = (I − W)^{-1} ε + μ_c` for every condition and every edge
/// `B[r][n] ~ Bernoulli(π)` with `π = π_k^r` for links and `π₀` otherwise.
pub fn generate_dataset<R: Rng + ?Sized>(
    structure: &ModularStructure,
    params: &ModelParameters,
    candidates: &[usize],
    rng: &mut R,
) -> Result<(Dataset, GroundTruth)> {
    let n = structure.n_nodes();
    let c_total = params.parent_means.ncols();
    let shape = layout(n, c_total, candidates)?;
    params.check_consistency(structure, &shape)?;
    let op = RegressionOperator::new(structure, &params.weights, &shape, f64::INFINITY)?;
    let mut x = DMatrix::zeros(n, c_total);
    for c in 0..c_total {
        let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let noise = op.solve(&eps);
        let mu = condition_means(structure, params, &shape, c);
        for i in 0..n {
            x[(i, c)] = noise[i] + mu[i];
        }
    }
    let edges: Vec<Vec<u8>> = (0..candidates.len())
        .map(|r| {
            (0..n)
                .map(|node| {
                    let p = params.link(structure.module_of(node), r).map_or(params.pi0, |l| l.pi);
                    u8::from(rng.random::<f64>() < p)
                })
                .collect()
        })
        .collect();
    let dataset = Dataset::new(x, edges, candidates.to_vec())?;
    Ok((dataset, GroundTruth::new(structure.clone(), params.clone())))
}

/// Sizes of a synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_nodes: usize,
    pub n_modules: usize,
    pub n_conditions: usize,
    pub n_candidates: usize,
    pub max_parents: usize,
    pub ranges: ParameterRanges,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_nodes: 200,
            n_modules: 4,
            n_conditions: 50,
            n_candidates: 10,
            max_parents: 3,
            ranges: ParameterRanges::default(),
        }
    }
}

/// Structure, parameters and data in one call.
pub fn simulate<R: Rng + ?Sized>(cfg: &SyntheticConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    if cfg.n_conditions == 0 {
        return Err(ModnetError::InvalidArgument("need at least one condition".into()));
    }
    let s = generate_structure(cfg.n_nodes, cfg.n_modules, cfg.n_candidates, cfg.max_parents, rng)?;
    let params = generate_parameters(&s.structure, &s.candidates, cfg.n_conditions, &cfg.ranges, rng)?;
    generate_dataset(&s.structure, &params, &s.candidates, rng)
}
