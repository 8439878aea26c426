use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use super::{KPrior, LinkParams, ModelParameters, ModularStructure, PriorConfig};

#[inline]
pub fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

/// Beta(a, b) log-density; `-∞` outside (0, 1).
pub fn beta_log_density(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    let norm = if a == 1.0 && b == 1.0 {
        0.0
    } else {
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
    };
    let mut out = norm;
    if a != 1.0 {
        out += (a - 1.0) * x.ln();
    }
    if b != 1.0 {
        out += (b - 1.0) * (-x).ln_1p();
    }
    out
}

/// Exponential log-density of a parent-set size.
#[inline]
pub fn parent_count_log_prior(count: usize, lambda: f64) -> f64 {
    lambda.ln() - lambda * count as f64
}

/// Log-mass of the module count; `-∞` outside the support.
pub fn k_log_prior(k: usize, prior: &KPrior) -> f64 {
    match *prior {
        KPrior::Uniform { k_max } => {
            if (1..=k_max).contains(&k) {
                -(k_max as f64).ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        KPrior::Geometric { p, k_max } => {
            if (1..=k_max).contains(&k) {
                let norm = 1.0 - (1.0 - p).powi(k_max as i32);
                (k as f64 - 1.0) * (-p).ln_1p() + p.ln() - norm.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// Prior of one link: Beta on π, Gaussians on both γ and the split point.
pub fn link_log_prior(link: &LinkParams, prior: &PriorConfig) -> f64 {
    beta_log_density(link.pi, prior.a_pi, prior.b_pi)
        + normal_log_density(link.gamma_lo, 0.0, prior.scale_gamma)
        + normal_log_density(link.gamma_hi, 0.0, prior.scale_gamma)
        + normal_log_density(link.split, 0.0, prior.scale_z)
}

#[inline]
pub fn weight_log_prior(w: f64, prior: &PriorConfig) -> f64 {
    normal_log_density(w, 0.0, prior.scale_w)
}

/// Prior of the parent means of one condition.
pub fn parent_means_column_log_prior(params: &ModelParameters, c: usize, prior: &PriorConfig) -> f64 {
    column_log_prior(params.parent_means.column(c).iter().copied(), prior)
}

pub(crate) fn column_log_prior(values: impl Iterator<Item = f64>, prior: &PriorConfig) -> f64 {
    values.map(|m| normal_log_density(m, 0.0, prior.scale_mu)).sum()
}

/// Prior terms that depend on the structure: K, parent counts, weights and
/// link parameters. Everything except the parent means.
pub fn structural_log_prior(
    structure: &ModularStructure,
    params: &ModelParameters,
    prior: &PriorConfig,
) -> f64 {
    let k = structure.n_modules();
    let mut total = k_log_prior(k, &prior.k_prior);
    if total == f64::NEG_INFINITY {
        return total;
    }
    for m in 0..k {
        total += parent_count_log_prior(structure.parents(m).len(), prior.lambda_parents);
        total += params.weights.get(m).map_or(0.0, |&w| weight_log_prior(w, prior));
        if let Some(links) = params.links.get(m) {
            total += links.values().map(|l| link_log_prior(l, prior)).sum::<f64>();
        }
    }
    total
}

/// Log prior of a full state.
pub fn log_prior(structure: &ModularStructure, params: &ModelParameters, prior: &PriorConfig) -> f64 {
    let structural = structural_log_prior(structure, params, prior);
    if structural == f64::NEG_INFINITY {
        return structural;
    }
    structural
        + (0..params.parent_means.ncols())
            .map(|c| parent_means_column_log_prior(params, c, prior))
            .sum::<f64>()
}
