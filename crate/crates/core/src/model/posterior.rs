use super::likelihood::{
    edge_counts, log_likelihood_network_from_counts, variables_condition_term, EdgeCounts, MeanPlan,
};
use super::prior::{parent_means_column_log_prior, structural_log_prior};
use super::regression::RegressionOperator;
use super::{Dataset, LikelihoodMode, ModelParameters, ModularStructure, PriorConfig};
use crate::exec;

/// Why a state is not identifiable.
#[derive(Debug, Clone, PartialEq)]
pub enum IdentifiabilityViolation {
    /// Module has fewer than two nodes that are not in-use parents.
    TooFewNonParents { module: usize, count: usize },
    /// `Σ_k |Pa_k| ≥ N`.
    TooManyParents { total: usize, nodes: usize },
    /// `I - W` singular or above the condition threshold.
    IllConditioned { condition: f64 },
}

fn structural_violation(
    structure: &ModularStructure,
    dataset: &Dataset,
) -> Option<IdentifiabilityViolation> {
    let n = dataset.n_nodes();
    let total = structure.total_parents();
    if total >= n {
        return Some(IdentifiabilityViolation::TooManyParents { total, nodes: n });
    }
    let in_use = structure.candidates_in_use(dataset.n_candidates());
    let mut non_parents = vec![0usize; structure.n_modules()];
    for node in 0..n {
        let is_parent = dataset.candidate_of(node).is_some_and(|r| in_use[r]);
        if !is_parent {
            non_parents[structure.module_of(node)] += 1;
        }
    }
    non_parents
        .iter()
        .position(|&c| c < 2)
        .map(|module| IdentifiabilityViolation::TooFewNonParents {
            module,
            count: non_parents[module],
        })
}

/// First violated identifiability condition, if any.
pub fn identifiability_violation(
    structure: &ModularStructure,
    params: &ModelParameters,
    dataset: &Dataset,
    cond_threshold: f64,
) -> Option<IdentifiabilityViolation> {
    if let Some(v) = structural_violation(structure, dataset) {
        return Some(v);
    }
    match RegressionOperator::new(structure, &params.weights, dataset, cond_threshold) {
        Ok(_) => None,
        Err(crate::ModnetError::Singular { condition }) => {
            Some(IdentifiabilityViolation::IllConditioned { condition })
        }
        Err(_) => Some(IdentifiabilityViolation::IllConditioned {
            condition: f64::INFINITY,
        }),
    }
}

/// True iff every module keeps at least two non-parent nodes, the total
/// number of parent slots is below N, and `I - W` is well conditioned.
pub fn check_identifiability(
    structure: &ModularStructure,
    params: &ModelParameters,
    dataset: &Dataset,
    cond_threshold: f64,
) -> bool {
    identifiability_violation(structure, params, dataset, cond_threshold).is_none()
}

/// Posterior components of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Prior on K, parent counts, weights and links.
    pub structural_prior: f64,
    /// Prior of each column of parent means.
    pub mean_prior: Vec<f64>,
    pub network: f64,
    /// Per-condition variables terms; empty when the mode excludes them.
    pub variables: Vec<f64>,
}

impl Evaluation {
    pub fn variables_total(&self) -> f64 {
        self.variables.iter().sum()
    }

    pub fn prior(&self) -> f64 {
        self.structural_prior + self.mean_prior.iter().sum::<f64>()
    }

    pub fn total(&self) -> f64 {
        self.prior() + self.variables_total() + self.network
    }
}

/// Everything derived from a state that moves reuse: the evaluation plus
/// the regression operator, edge counts and mean layout.
#[derive(Debug, Clone)]
pub struct StateCache {
    pub eval: Evaluation,
    pub op: RegressionOperator,
    pub counts: EdgeCounts,
    pub plan: MeanPlan,
}

/// Dataset, prior and likelihood mode bundled for posterior evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Model<'a> {
    pub dataset: &'a Dataset,
    pub prior: &'a PriorConfig,
    pub mode: LikelihoodMode,
    /// Evaluate per-condition terms on the thread pool.
    pub parallel: bool,
}

impl<'a> Model<'a> {
    pub fn new(dataset: &'a Dataset, prior: &'a PriorConfig, mode: LikelihoodMode) -> Self {
        Model {
            dataset,
            prior,
            mode,
            parallel: false,
        }
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    /// Full evaluation; `None` when the state has zero posterior density.
    pub fn evaluate(&self, structure: &ModularStructure, params: &ModelParameters) -> Option<StateCache> {
        let counts = edge_counts(self.dataset, structure);
        self.evaluate_with_counts(structure, params, counts)
    }

    /// As [`Model::evaluate`], reusing edge counts for an unchanged assignment.
    pub fn evaluate_with_counts(
        &self,
        structure: &ModularStructure,
        params: &ModelParameters,
        counts: EdgeCounts,
    ) -> Option<StateCache> {
        if params.check_consistency(structure, self.dataset).is_err() || !params.probabilities_valid() {
            return None;
        }
        if structural_violation(structure, self.dataset).is_some() {
            return None;
        }
        let op = RegressionOperator::new(structure, &params.weights, self.dataset, self.prior.cond_threshold)
            .ok()?;
        let structural_prior = structural_log_prior(structure, params, self.prior);
        if structural_prior == f64::NEG_INFINITY || structural_prior.is_nan() {
            return None;
        }
        let mean_prior = (0..self.dataset.n_conditions())
            .map(|c| parent_means_column_log_prior(params, c, self.prior))
            .collect();
        let plan = MeanPlan::new(structure, params, self.dataset);
        let variables = if self.mode.uses_variables() {
            exec::map_indexed(self.dataset.n_conditions(), self.parallel, |c| {
                variables_condition_term(&plan, &op, self.dataset, params, c)
            })
        } else {
            Vec::new()
        };
        let network = if self.mode.uses_network() {
            log_likelihood_network_from_counts(&counts, structure, params)
        } else {
            0.0
        };
        let eval = Evaluation {
            structural_prior,
            mean_prior,
            network,
            variables,
        };
        if !eval.total().is_finite() {
            return None;
        }
        Some(StateCache {
            eval,
            op,
            counts,
            plan,
        })
    }

    pub fn log_posterior(&self, structure: &ModularStructure, params: &ModelParameters) -> f64 {
        self.evaluate(structure, params)
            .map_or(f64::NEG_INFINITY, |c| c.eval.total())
    }
}

/// Unnormalised log posterior (integrated mode); `-∞` on any guard failure.
pub fn log_posterior(
    dataset: &Dataset,
    structure: &ModularStructure,
    params: &ModelParameters,
    prior: &PriorConfig,
) -> f64 {
    Model::new(dataset, prior, LikelihoodMode::Integrated).log_posterior(structure, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_likelihood_network, log_likelihood_variables, log_prior, LinkParams};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn setup() -> (Dataset, ModularStructure, ModelParameters) {
        let x = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.4 - 0.8);
        let edges = vec![vec![0, 1, 1, 0, 1, 0], vec![1, 0, 0, 1, 1, 1]];
        let d = Dataset::new(x, edges, vec![0, 1]).unwrap();
        let s = ModularStructure::new(vec![0, 1, 0, 0, 1, 1], vec![vec![0], vec![]]).unwrap();
        let mut p = ModelParameters::empty(2, DMatrix::from_row_slice(2, 3, &[0.5, -0.3, 1.0, 0.2, 0.0, -0.7]), 0.1);
        p.weights = vec![0.3, -0.2];
        p.links[0].insert(
            0,
            LinkParams {
                gamma_lo: -1.0,
                gamma_hi: 1.5,
                split: 0.1,
                pi: 0.7,
            },
        );
        (d, s, p)
    }

    #[test]
    fn posterior_is_sum_of_components() {
        let (d, s, p) = setup();
        let prior = PriorConfig::default();
        let lp = log_posterior(&d, &s, &p, &prior);
        let sum = log_prior(&s, &p, &prior)
            + log_likelihood_variables(&d, &s, &p, prior.cond_threshold).unwrap()
            + log_likelihood_network(&d, &s, &p);
        assert_abs_diff_eq!(lp, sum, epsilon = 1e-10);

        let vo = Model::new(&d, &prior, LikelihoodMode::VariablesOnly).log_posterior(&s, &p);
        assert_abs_diff_eq!(vo, sum - log_likelihood_network(&d, &s, &p), epsilon = 1e-10);
        let no = Model::new(&d, &prior, LikelihoodMode::NetworkOnly).log_posterior(&s, &p);
        assert_abs_diff_eq!(
            no,
            sum - log_likelihood_variables(&d, &s, &p, 1e8).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn identifiability_cases() {
        let prior = PriorConfig::default();
        // K = 1, N = 5, no parents.
        let d5 = Dataset::new(DMatrix::zeros(5, 1), vec![vec![0; 5]], vec![0]).unwrap();
        let s = ModularStructure::single_module(5);
        let p = ModelParameters::empty(1, DMatrix::zeros(1, 1), 0.05);
        assert!(check_identifiability(&s, &p, &d5, prior.cond_threshold));

        // Module 1 = {0, 1}: both are candidates in use.
        let (d, _, _) = setup();
        let s2 = ModularStructure::new(vec![1, 1, 0, 0, 0, 0], vec![vec![0, 1], vec![]]).unwrap();
        let mut p2 = ModelParameters::empty(2, DMatrix::zeros(2, 3), 0.1);
        for r in 0..2 {
            p2.links[0].insert(r, LinkParams { gamma_lo: 1.0, gamma_hi: 1.0, split: 0.0, pi: 0.5 });
        }
        assert!(matches!(
            identifiability_violation(&s2, &p2, &d, 1e8),
            Some(IdentifiabilityViolation::TooFewNonParents { module: 1, count: 0 })
        ));
        assert_eq!(log_posterior(&d, &s2, &p2, &prior), f64::NEG_INFINITY);
    }

    #[test]
    fn total_parents_boundary() {
        // N = 4, R = 2, two modules each with both parents: Σ|Pa| = 4 = N.
        let d = Dataset::new(DMatrix::zeros(4, 1), vec![vec![0; 4], vec![0; 4]], vec![0, 1]).unwrap();
        let s = ModularStructure::new(vec![0, 0, 1, 1], vec![vec![0, 1], vec![0, 1]]).unwrap();
        let p = ModelParameters::empty(2, DMatrix::zeros(2, 1), 0.05);
        assert!(matches!(
            identifiability_violation(&s, &p, &d, 1e8),
            Some(IdentifiabilityViolation::TooManyParents { total: 4, nodes: 4 })
        ));
    }
}
