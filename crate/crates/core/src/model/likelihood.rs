use std::f64::consts::PI;

use super::regression::RegressionOperator;
use super::{Dataset, LinkParams, ModelParameters, ModularStructure};
use crate::error::Result;

/// Mixture coefficient of a parent in one condition.
///
/// Below the split point the parent is in its "Lo" state, otherwise "Hi";
/// a tie counts as "Hi".
#[inline]
pub fn context_coefficient(gamma_lo: f64, gamma_hi: f64, z: f64, parent_mean: f64) -> f64 {
    if parent_mean < z {
        gamma_lo
    } else {
        gamma_hi
    }
}

#[derive(Debug, Clone, Copy)]
enum MeanSource {
    /// Node is an in-use parent: its mean is its own parent-mean entry.
    Parent(usize),
    /// Node follows the mixture of its module.
    Module(usize),
}

/// Precomputed mean layout `μ_c = Γ_c μ_c^R` for one state.
#[derive(Debug, Clone)]
pub struct MeanPlan {
    sources: Vec<MeanSource>,
    module_links: Vec<Vec<(usize, LinkParams)>>,
}

impl MeanPlan {
    pub fn new(structure: &ModularStructure, params: &ModelParameters, dataset: &Dataset) -> Self {
        let in_use = structure.candidates_in_use(dataset.n_candidates());
        let sources = (0..dataset.n_nodes())
            .map(|n| match dataset.candidate_of(n) {
                Some(r) if in_use[r] => MeanSource::Parent(r),
                _ => MeanSource::Module(structure.module_of(n)),
            })
            .collect();
        let module_links = params
            .links
            .iter()
            .map(|l| l.iter().map(|(&r, &lp)| (r, lp)).collect())
            .collect();
        MeanPlan {
            sources,
            module_links,
        }
    }

    /// Mixture mean of module `k` given one column of parent means; zero
    /// without parents.
    pub fn module_mean_in(&self, module: usize, column: &[f64]) -> f64 {
        self.module_links[module]
            .iter()
            .map(|&(r, lp)| {
                let mu = column[r];
                context_coefficient(lp.gamma_lo, lp.gamma_hi, lp.split, mu) * mu
            })
            .sum()
    }

    /// Node means given one column of parent means.
    pub fn node_means_in(&self, column: &[f64]) -> Vec<f64> {
        let module_means: Vec<f64> = (0..self.module_links.len())
            .map(|k| self.module_mean_in(k, column))
            .collect();
        self.sources
            .iter()
            .map(|src| match *src {
                MeanSource::Parent(r) => column[r],
                MeanSource::Module(k) => module_means[k],
            })
            .collect()
    }

    pub fn module_mean(&self, module: usize, c: usize, params: &ModelParameters) -> f64 {
        self.module_mean_in(module, params.parent_means.column(c).as_slice())
    }

    pub fn node_means(&self, c: usize, params: &ModelParameters) -> Vec<f64> {
        self.node_means_in(params.parent_means.column(c).as_slice())
    }

    /// Mean of a single node in condition `c`.
    pub fn node_mean(&self, node: usize, c: usize, params: &ModelParameters) -> f64 {
        match self.sources[node] {
            MeanSource::Parent(r) => params.parent_means[(r, c)],
            MeanSource::Module(k) => self.module_mean(k, c, params),
        }
    }
}

/// Mean vector `μ_c` of all nodes in condition `c`.
pub fn condition_means(
    structure: &ModularStructure,
    params: &ModelParameters,
    dataset: &Dataset,
    c: usize,
) -> Vec<f64> {
    MeanPlan::new(structure, params, dataset).node_means(c, params)
}

/// Log-density of condition `c` given an explicit column of parent means:
/// `-(N/2) log 2π - ½ log|Σ| - ½ (x_c - μ_c)ᵀ Σ^{-1} (x_c - μ_c)`.
pub fn condition_log_density(
    plan: &MeanPlan,
    op: &RegressionOperator,
    dataset: &Dataset,
    column: &[f64],
    c: usize,
) -> f64 {
    let n = dataset.n_nodes();
    let means = plan.node_means_in(column);
    let x = dataset.variables().column(c);
    let resid: Vec<f64> = x.iter().zip(&means).map(|(xv, mv)| xv - mv).collect();
    -0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * op.log_det_sigma() - 0.5 * op.quadratic_form(&resid)
}

/// Variables term of condition `c` for the parent means stored in `params`.
pub fn variables_condition_term(
    plan: &MeanPlan,
    op: &RegressionOperator,
    dataset: &Dataset,
    params: &ModelParameters,
    c: usize,
) -> f64 {
    condition_log_density(plan, op, dataset, params.parent_means.column(c).as_slice(), c)
}

/// Sum over conditions of [`variables_condition_term`].
pub fn log_likelihood_variables(
    dataset: &Dataset,
    structure: &ModularStructure,
    params: &ModelParameters,
    cond_threshold: f64,
) -> Result<f64> {
    params.check_consistency(structure, dataset)?;
    let op = RegressionOperator::new(structure, &params.weights, dataset, cond_threshold)?;
    let plan = MeanPlan::new(structure, params, dataset);
    Ok((0..dataset.n_conditions())
        .map(|c| variables_condition_term(&plan, &op, dataset, params, c))
        .sum())
}

/// Edge counts `s_rk` (number of edges from candidate `r` into module `k`)
/// and module sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCounts {
    /// `counts[k][r] = s_rk`.
    pub counts: Vec<Vec<u32>>,
    pub sizes: Vec<usize>,
}

pub fn edge_counts(dataset: &Dataset, structure: &ModularStructure) -> EdgeCounts {
    let k = structure.n_modules();
    let r_total = dataset.n_candidates();
    let mut counts = vec![vec![0u32; r_total]; k];
    for (r, row) in (0..r_total).map(|r| (r, dataset.edge_row(r))) {
        for (n, &b) in row.iter().enumerate() {
            counts[structure.module_of(n)][r] += b as u32;
        }
    }
    EdgeCounts {
        counts,
        sizes: structure.module_sizes(),
    }
}

#[inline]
pub(crate) fn bernoulli_block(successes: u32, trials: usize, ln_p: f64, ln_q: f64) -> f64 {
    let s = successes as f64;
    let f = (trials as f64) - s;
    // Skip zero counts so that p = 0 or 1 with no matching edges stays finite.
    (if s > 0.0 { s * ln_p } else { 0.0 }) + (if f > 0.0 { f * ln_q } else { 0.0 })
}

/// Network log-likelihood contribution of module `k`.
pub fn module_network_term(
    counts: &EdgeCounts,
    structure: &ModularStructure,
    params: &ModelParameters,
    module: usize,
) -> f64 {
    let ln_p0 = params.pi0.ln();
    let ln_q0 = (-params.pi0).ln_1p();
    let size = counts.sizes[module];
    let links = &params.links[module];
    let pa = structure.parents(module);
    counts.counts[module]
        .iter()
        .enumerate()
        .map(|(r, &s)| {
            if pa.binary_search(&r).is_ok() {
                let pi = links[&r].pi;
                bernoulli_block(s, size, pi.ln(), (-pi).ln_1p())
            } else {
                bernoulli_block(s, size, ln_p0, ln_q0)
            }
        })
        .sum()
}

pub fn log_likelihood_network_from_counts(
    counts: &EdgeCounts,
    structure: &ModularStructure,
    params: &ModelParameters,
) -> f64 {
    (0..structure.n_modules())
        .map(|k| module_network_term(counts, structure, params, k))
        .sum()
}

/// Bernoulli log-likelihood of the network, through the statistics `s_rk`.
pub fn log_likelihood_network(
    dataset: &Dataset,
    structure: &ModularStructure,
    params: &ModelParameters,
) -> f64 {
    let counts = edge_counts(dataset, structure);
    log_likelihood_network_from_counts(&counts, structure, params)
}
