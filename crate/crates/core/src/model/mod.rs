//! Domain types and the joint log-posterior.
//!
//! A model state is a [`ModularStructure`] (node → module assignment and the
//! parent set of every module) together with [`ModelParameters`]. Node
//! variables follow a structured multivariate normal whose covariance is
//! induced by the sparse regression matrix `W`; network edges are Bernoulli
//! draws whose rate depends on whether the source candidate is a parent of
//! the target's module.

pub(crate) mod likelihood;
mod posterior;
pub(crate) mod prior;
mod regression;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ModnetError, Result};

pub use likelihood::{
    condition_means, context_coefficient, edge_counts, log_likelihood_network,
    log_likelihood_network_from_counts, log_likelihood_variables, module_network_term,
    condition_log_density, variables_condition_term, EdgeCounts, MeanPlan,
};
pub use posterior::{
    check_identifiability, identifiability_violation, log_posterior, Evaluation,
    IdentifiabilityViolation, Model, StateCache,
};
pub use prior::{
    beta_log_density, k_log_prior, link_log_prior, log_prior, normal_log_density,
    parent_count_log_prior, parent_means_column_log_prior, structural_log_prior, weight_log_prior,
};
pub use regression::{
    build_regression_matrix, dense_condition_number, precision_from_w, RegressionOperator,
};

/// Node variables `X` (N × C), binary network `B` (R × N) and the node index
/// of every candidate parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    edges: Vec<u8>,
    candidates: Vec<usize>,
    candidate_of: Vec<Option<usize>>,
}

impl Dataset {
    /// `edges[r][n]` is `B_{r→n}`; `candidates[r]` is the node index of
    /// candidate `r` (zero-based).
    pub fn new(x: DMatrix<f64>, edges: Vec<Vec<u8>>, candidates: Vec<usize>) -> Result<Self> {
        let n = x.nrows();
        let c = x.ncols();
        let r = candidates.len();
        if n < 2 {
            return Err(ModnetError::InvalidArgument(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        if c < 1 {
            return Err(ModnetError::InvalidArgument("need at least 1 condition".into()));
        }
        if r < 1 || r > n {
            return Err(ModnetError::InvalidArgument(format!(
                "candidate count must be in 1..={n}, got {r}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModnetError::InvalidArgument(
                "node variables contain non-finite values".into(),
            ));
        }
        let mut candidate_of = vec![None; n];
        for (idx, &node) in candidates.iter().enumerate() {
            if node >= n {
                return Err(ModnetError::InvalidArgument(format!(
                    "candidate {idx} refers to node {node}, but there are {n} nodes"
                )));
            }
            if candidate_of[node].replace(idx).is_some() {
                return Err(ModnetError::InvalidArgument(format!(
                    "node {node} listed twice as a candidate"
                )));
            }
        }
        if edges.len() != r {
            return Err(ModnetError::InvalidArgument(format!(
                "network has {} rows, expected {r}",
                edges.len()
            )));
        }
        let mut flat = Vec::with_capacity(r * n);
        for (row_idx, row) in edges.iter().enumerate() {
            if row.len() != n {
                return Err(ModnetError::InvalidArgument(format!(
                    "network row {row_idx} has {} columns, expected {n}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|&&b| b > 1) {
                return Err(ModnetError::InvalidArgument(format!(
                    "network entries must be 0 or 1, found {bad}"
                )));
            }
            flat.extend_from_slice(row);
        }
        Ok(Dataset {
            x,
            edges: flat,
            candidates,
            candidate_of,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_conditions(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn variables(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    /// Candidate index of `node`, if it is a candidate parent.
    pub fn candidate_of(&self, node: usize) -> Option<usize> {
        self.candidate_of[node]
    }

    #[inline]
    pub fn edge(&self, candidate: usize, node: usize) -> bool {
        self.edges[candidate * self.n_nodes() + node] == 1
    }

    pub fn edge_row(&self, candidate: usize) -> &[u8] {
        let n = self.n_nodes();
        &self.edges[candidate * n..(candidate + 1) * n]
    }

    pub fn n_edges(&self) -> usize {
        self.edges.iter().map(|&b| b as usize).sum()
    }
}

/// Hard assignment of nodes to `K` modules and a parent set per module.
///
/// Modules are labelled `0..K`. Parent sets hold candidate indices, sorted
/// and distinct.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModularStructure {
    assignment: Vec<usize>,
    parents: Vec<Vec<usize>>,
}

impl ModularStructure {
    pub fn new(assignment: Vec<usize>, mut parents: Vec<Vec<usize>>) -> Result<Self> {
        let k = parents.len();
        if k == 0 {
            return Err(ModnetError::InvalidArgument("structure needs at least one module".into()));
        }
        let mut sizes = vec![0usize; k];
        for (node, &m) in assignment.iter().enumerate() {
            if m >= k {
                return Err(ModnetError::InvalidArgument(format!(
                    "node {node} assigned to module {m}, but there are {k} modules"
                )));
            }
            sizes[m] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(ModnetError::InvalidArgument(format!("module {empty} has no nodes")));
        }
        for (m, pa) in parents.iter_mut().enumerate() {
            pa.sort_unstable();
            if pa.windows(2).any(|w| w[0] == w[1]) {
                return Err(ModnetError::InvalidArgument(format!(
                    "module {m} lists a parent twice"
                )));
            }
        }
        Ok(ModularStructure { assignment, parents })
    }

    /// Single module holding every node, no parents.
    pub fn single_module(n_nodes: usize) -> Self {
        ModularStructure {
            assignment: vec![0; n_nodes],
            parents: vec![Vec::new()],
        }
    }

    pub fn n_modules(&self) -> usize {
        self.parents.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    #[inline]
    pub fn module_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn parents(&self, module: usize) -> &[usize] {
        &self.parents[module]
    }

    pub fn parent_sets(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn has_parent(&self, module: usize, candidate: usize) -> bool {
        self.parents[module].binary_search(&candidate).is_ok()
    }

    pub fn total_parents(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn module_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_modules()];
        for &m in &self.assignment {
            sizes[m] += 1;
        }
        sizes
    }

    pub fn members(&self, module: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == module)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn members_by_module(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_modules()];
        for (n, &m) in self.assignment.iter().enumerate() {
            out[m].push(n);
        }
        out
    }

    /// `in_use[r]` is true when candidate `r` is a parent of some module.
    pub fn candidates_in_use(&self, n_candidates: usize) -> Vec<bool> {
        let mut in_use = vec![false; n_candidates];
        for pa in &self.parents {
            for &r in pa {
                if r < n_candidates {
                    in_use[r] = true;
                }
            }
        }
        in_use
    }

    pub(crate) fn set_module(&mut self, node: usize, module: usize) {
        self.assignment[node] = module;
    }

    pub(crate) fn push_module(&mut self, parents: Vec<usize>) -> usize {
        self.parents.push(parents);
        self.parents.len() - 1
    }

    /// Moves every node of `absorbed` into `keep` and deletes `absorbed`,
    /// shifting higher labels down by one.
    pub(crate) fn merge_modules(&mut self, keep: usize, absorbed: usize) {
        debug_assert_ne!(keep, absorbed);
        for m in self.assignment.iter_mut() {
            if *m == absorbed {
                *m = keep;
            }
            if *m > absorbed {
                *m -= 1;
            }
        }
        let removed = self.parents.remove(absorbed);
        let target = if keep > absorbed { keep - 1 } else { keep };
        let pa = &mut self.parents[target];
        pa.extend(removed);
        pa.sort_unstable();
        pa.dedup();
    }

    pub(crate) fn set_parents(&mut self, module: usize, mut parents: Vec<usize>) {
        parents.sort_unstable();
        parents.dedup();
        self.parents[module] = parents;
    }

    pub(crate) fn insert_parent(&mut self, module: usize, candidate: usize) {
        let pa = &mut self.parents[module];
        if let Err(pos) = pa.binary_search(&candidate) {
            pa.insert(pos, candidate);
        }
    }

    pub(crate) fn remove_parent(&mut self, module: usize, candidate: usize) {
        let pa = &mut self.parents[module];
        if let Ok(pos) = pa.binary_search(&candidate) {
            pa.remove(pos);
        }
    }

    /// Label-free form: blocks sorted by their smallest node, each paired
    /// with its parent set. Two structures that differ only by module
    /// labels have equal canonical forms.
    pub fn canonical(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let mut blocks: Vec<(Vec<usize>, Vec<usize>)> = self
            .members_by_module()
            .into_iter()
            .zip(self.parents.iter().cloned())
            .collect();
        blocks.sort();
        blocks
    }
}

/// Per-(module, parent) parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub split: f64,
    pub pi: f64,
}

/// Continuous parameters of a model state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    /// Shared regression weight `w_k` per module.
    pub weights: Vec<f64>,
    /// Link parameters per module, keyed by candidate index.
    pub links: Vec<BTreeMap<usize, LinkParams>>,
    /// Parent means `μ^R`, R × C.
    pub parent_means: DMatrix<f64>,
    /// Background edge probability `π₀`.
    pub pi0: f64,
}

impl ModelParameters {
    /// Zero weights, no links, given parent means.
    pub fn empty(n_modules: usize, parent_means: DMatrix<f64>, pi0: f64) -> Self {
        ModelParameters {
            weights: vec![0.0; n_modules],
            links: vec![BTreeMap::new(); n_modules],
            parent_means,
            pi0,
        }
    }

    pub fn link(&self, module: usize, candidate: usize) -> Option<&LinkParams> {
        self.links.get(module)?.get(&candidate)
    }

    /// Errors unless the (module, parent) key sets match `structure` and the
    /// parent-mean matrix matches the dataset dimensions.
    pub fn check_consistency(&self, structure: &ModularStructure, dataset: &Dataset) -> Result<()> {
        let k = structure.n_modules();
        if self.weights.len() != k || self.links.len() != k {
            return Err(ModnetError::StructuralMismatch(format!(
                "structure has {k} modules, parameters have {} weights and {} link maps",
                self.weights.len(),
                self.links.len()
            )));
        }
        for m in 0..k {
            let pa = structure.parents(m);
            if pa.len() != self.links[m].len() || !pa.iter().zip(self.links[m].keys()).all(|(a, b)| a == b) {
                return Err(ModnetError::StructuralMismatch(format!(
                    "module {m}: parents {:?} but link parameters for {:?}",
                    pa,
                    self.links[m].keys().collect::<Vec<_>>()
                )));
            }
            if let Some(&bad) = pa.iter().find(|&&r| r >= dataset.n_candidates()) {
                return Err(ModnetError::StructuralMismatch(format!(
                    "module {m}: parent {bad} is not a candidate index"
                )));
            }
        }
        if structure.n_nodes() != dataset.n_nodes() {
            return Err(ModnetError::StructuralMismatch(format!(
                "structure covers {} nodes, dataset has {}",
                structure.n_nodes(),
                dataset.n_nodes()
            )));
        }
        if self.parent_means.nrows() != dataset.n_candidates()
            || self.parent_means.ncols() != dataset.n_conditions()
        {
            return Err(ModnetError::StructuralMismatch(format!(
                "parent means are {}x{}, expected {}x{}",
                self.parent_means.nrows(),
                self.parent_means.ncols(),
                dataset.n_candidates(),
                dataset.n_conditions()
            )));
        }
        Ok(())
    }

    /// True when every edge probability lies strictly inside (0, 1).
    pub fn probabilities_valid(&self) -> bool {
        let inside = |p: f64| p > 0.0 && p < 1.0;
        inside(self.pi0) && self.links.iter().all(|l| l.values().all(|lp| inside(lp.pi)))
    }
}

/// Prior over the module count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KPrior {
    Uniform { k_max: usize },
    /// `P(K) ∝ (1-p)^(K-1) p` on `1..=k_max`.
    Geometric { p: f64, k_max: usize },
}

impl KPrior {
    pub fn k_max(&self) -> usize {
        match *self {
            KPrior::Uniform { k_max } | KPrior::Geometric { k_max, .. } => k_max,
        }
    }
}

/// Prior hyperparameters, proposal scales and the conditioning guard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Rate of the exponential prior on each `|Pa_k|`.
    pub lambda_parents: f64,
    pub k_prior: KPrior,
    pub sigma_w: f64,
    pub sigma_mu: f64,
    pub sigma_gamma: f64,
    pub sigma_z: f64,
    pub sigma_pi: f64,
    pub a_pi: f64,
    pub b_pi: f64,
    /// Largest admissible 1-norm condition number of `I - W`.
    pub cond_threshold: f64,
    /// Standard deviations of the zero-mean Gaussian priors.
    pub scale_w: f64,
    pub scale_mu: f64,
    pub scale_gamma: f64,
    pub scale_z: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            lambda_parents: 1.0,
            k_prior: KPrior::Uniform { k_max: 20 },
            sigma_w: 0.1,
            sigma_mu: 0.5,
            sigma_gamma: 0.2,
            sigma_z: 0.5,
            sigma_pi: 0.05,
            a_pi: 1.0,
            b_pi: 1.0,
            cond_threshold: 1e8,
            scale_w: 10.0,
            scale_mu: 10.0,
            scale_gamma: 10.0,
            scale_z: 10.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_parents", self.lambda_parents),
            ("sigma_w", self.sigma_w),
            ("sigma_mu", self.sigma_mu),
            ("sigma_gamma", self.sigma_gamma),
            ("sigma_z", self.sigma_z),
            ("sigma_pi", self.sigma_pi),
            ("a_pi", self.a_pi),
            ("b_pi", self.b_pi),
            ("scale_w", self.scale_w),
            ("scale_mu", self.scale_mu),
            ("scale_gamma", self.scale_gamma),
            ("scale_z", self.scale_z),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModnetError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.k_prior.k_max() < 1 {
            return Err(ModnetError::Config("k_max must be at least 1".into()));
        }
        if let KPrior::Geometric { p, .. } = self.k_prior {
            if !(p > 0.0 && p < 1.0) {
                return Err(ModnetError::Config(format!("geometric K prior needs p in (0,1), got {p}")));
            }
        }
        if !(self.cond_threshold > 1.0) {
            return Err(ModnetError::Config(format!(
                "cond_threshold must exceed 1, got {}",
                self.cond_threshold
            )));
        }
        Ok(())
    }
}

/// Which likelihood terms enter the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodMode {
    #[default]
    Integrated,
    VariablesOnly,
    NetworkOnly,
}

impl LikelihoodMode {
    pub fn uses_variables(self) -> bool {
        !matches!(self, LikelihoodMode::NetworkOnly)
    }

    pub fn uses_network(self) -> bool {
        !matches!(self, LikelihoodMode::VariablesOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LikelihoodMode::Integrated => "integrated",
            LikelihoodMode::VariablesOnly => "variables-only",
            LikelihoodMode::NetworkOnly => "network-only",
        }
    }
}

impl std::str::FromStr for LikelihoodMode {
    type Err = ModnetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integrated" => Ok(LikelihoodMode::Integrated),
            "variables-only" => Ok(LikelihoodMode::VariablesOnly),
            "network-only" => Ok(LikelihoodMode::NetworkOnly),
            other => Err(ModnetError::Config(format!(
                "unknown mode {other:?} (expected integrated, variables-only or network-only)"
            ))),
        }
    }
}
