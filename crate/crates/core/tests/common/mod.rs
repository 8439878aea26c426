#![allow(dead_code)]

use modnet::synthetic::{simulate, GroundTruth, SyntheticConfig};
use modnet::{Dataset, LinkParams};

/// Synthetic dataset with known truth.
pub fn problem(seed: u64, n: usize, k: usize, c: usize, r: usize, max_parents: usize) -> (Dataset, GroundTruth) {
    let cfg = SyntheticConfig {
        n_nodes: n,
        n_modules: k,
        n_conditions: c,
        n_candidates: r,
        max_parents,
        ..SyntheticConfig::default()
    };
    simulate(&cfg, &mut modnet::rng::seeded(seed)).unwrap()
}

pub fn link(gamma_lo: f64, gamma_hi: f64, split: f64, pi: f64) -> LinkParams {
    LinkParams {
        gamma_lo,
        gamma_hi,
        split,
        pi,
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Monte-Carlo standard error of the mean by non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    let m = mean(&means);
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}
