//! Chain traces and autocorrelation.

use crate::error::{ModnetError, Result};
use crate::model::{ModelParameters, ModularStructure};
use crate::sampler::ChainState;

/// One retained state of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub iteration: u64,
    pub log_post: f64,
    pub structure: ModularStructure,
    pub params: ModelParameters,
}

impl Sample {
    pub fn from_state(state: &ChainState) -> Self {
        Sample {
            iteration: state.iteration,
            log_post: state.log_post(),
            structure: state.structure.clone(),
            params: state.params.clone(),
        }
    }

    pub fn n_modules(&self) -> usize {
        self.structure.n_modules()
    }
}

/// Retained samples of one chain in iteration order.
///
/// A fresh trace holds the samples of iterations `thinning, 2·thinning, …`
/// up to `total_iterations`. `burned` counts the leading iterations that
/// [`ChainTrace::drop_burn_in`] has removed so far.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainTrace {
    pub samples: Vec<Sample>,
    pub thinning: u64,
    pub total_iterations: u64,
    pub burned: u64,
}

impl ChainTrace {
    pub fn new(thinning: u64) -> Self {
        ChainTrace {
            samples: Vec::new(),
            thinning: thinning.max(1),
            total_iterations: 0,
            burned: 0,
        }
    }

    /// Appends a state; `total_iterations` follows the latest iteration.
    pub fn push(&mut self, sample: Sample) {
        self.total_iterations = self.total_iterations.max(sample.iteration);
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn log_post_series(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.log_post).collect()
    }

    pub fn k_series(&self) -> Vec<usize> {
        self.samples.iter().map(Sample::n_modules).collect()
    }

    /// `μ^R` of candidate `r` in condition `c` across samples.
    pub fn parent_mean_series(&self, r: usize, c: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.params.parent_means[(r, c)]).collect()
    }

    /// Keeps the samples strictly after the next `n_burn` iterations.
    /// Repeated calls compose: dropping `a` then `b` equals dropping `a + b`.
    pub fn drop_burn_in(&self, n_burn: u64) -> Result<ChainTrace> {
        let cut = self.burned + n_burn;
        if n_burn > 0 && cut >= self.total_iterations {
            return Err(ModnetError::InvalidArgument(format!(
                "burn-in of {n_burn} leaves nothing of a trace covering iterations {}..={}",
                self.burned + 1,
                self.total_iterations
            )));
        }
        Ok(ChainTrace {
            samples: self.samples.iter().filter(|s| s.iteration > cut).cloned().collect(),
            thinning: self.thinning,
            total_iterations: self.total_iterations,
            burned: cut,
        })
    }
}

/// Normalised autocorrelation `ρ(ℓ)` for `ℓ = 0..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(ModnetError::InvalidArgument(format!(
            "autocorrelation up to lag {max_lag} needs more than {max_lag} values, got {n}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom <= 0.0 || !denom.is_finite() {
        return Err(ModnetError::DegenerateTest(
            "autocorrelation of a constant series is undefined".into(),
        ));
    }
    Ok((0..=max_lag)
        .map(|lag| {
            if lag == 0 {
                1.0
            } else {
                dev.iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / denom
            }
        })
        .collect())
}
