//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{ModnetError, Result};
use crate::model::{KPrior, LikelihoodMode, PriorConfig};
use crate::sampler::{KInit, MoveConfig};
use crate::synthetic::SyntheticConfig;

/// Everything `simulate` and `fit` read from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
    pub n_chains: usize,
    /// Maximum number of threads; 1 runs everything on the calling thread.
    pub parallelism: usize,
    /// Leading sweeps with fixed assignment and parent sets.
    pub warm_up: u64,
    pub mode: LikelihoodMode,
    pub k_init: KInit,
    /// Background edge probability.
    pub pi0: f64,
    pub prior: PriorConfig,
    pub moves: MoveConfig,
    pub synthetic: SyntheticConfig,
    pub variables: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            iterations: 20_000,
            burn_in: 10_000,
            thinning: 1,
            seed: 1,
            n_chains: 1,
            parallelism: 1,
            warm_up: 200,
            mode: LikelihoodMode::Integrated,
            k_init: KInit::default(),
            pi0: 0.05,
            prior: PriorConfig::default(),
            moves: MoveConfig::default(),
            synthetic: SyntheticConfig::default(),
            variables: None,
            network: None,
            out: None,
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> std::result::Result<T, String> {
    raw.parse().map_err(|_| format!("invalid value {raw:?} for {key}"))
}

impl RunConfig {
    /// Reads and validates a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ModnetError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses config text over the defaults; `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut k_max = cfg.prior.k_prior.k_max();
        let mut k_geometric_p: Option<f64> = None;
        let mut k_prior_kind = "uniform".to_string();
        let mut k_auto_max = match cfg.k_init {
            KInit::Auto { max } => max,
            KInit::Fixed(_) => 10,
        };
        let mut k_init_raw = "auto".to_string();
        for (i, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ModnetError::parse(path, i + 1, msg);
            let (key, raw) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            if raw.is_empty() {
                return Err(err(format!("missing value for {key}")));
            }
            let p = &mut cfg.prior;
            let m = &mut cfg.moves;
            let s = &mut cfg.synthetic;
            let result: std::result::Result<(), String> = (|| {
                match key {
                    "iterations" => cfg.iterations = value(key, raw)?,
                    "burn_in" => cfg.burn_in = value(key, raw)?,
                    "thinning" => cfg.thinning = value(key, raw)?,
                    "seed" => cfg.seed = value(key, raw)?,
                    "n_chains" => cfg.n_chains = value(key, raw)?,
                    "parallelism" => cfg.parallelism = value(key, raw)?,
                    "warm_up" => cfg.warm_up = value(key, raw)?,
                    "mode" => cfg.mode = raw.parse().map_err(|e: ModnetError| e.to_string())?,
                    "k_init" => k_init_raw = raw.to_string(),
                    "k_auto_max" => k_auto_max = value(key, raw)?,
                    "pi0" => cfg.pi0 = value(key, raw)?,
                    "variables" => cfg.variables = Some(PathBuf::from(raw)),
                    "network" => cfg.network = Some(PathBuf::from(raw)),
                    "out" => cfg.out = Some(PathBuf::from(raw)),

                    "lambda_parents" => p.lambda_parents = value(key, raw)?,
                    "k_prior" => k_prior_kind = raw.to_string(),
                    "k_max" => k_max = value(key, raw)?,
                    "k_geometric_p" => k_geometric_p = Some(value(key, raw)?),
                    "sigma_w" => p.sigma_w = value(key, raw)?,
                    "sigma_mu" => p.sigma_mu = value(key, raw)?,
                    "sigma_gamma" => p.sigma_gamma = value(key, raw)?,
                    "sigma_z" => p.sigma_z = value(key, raw)?,
                    "sigma_pi" => p.sigma_pi = value(key, raw)?,
                    "a_pi" => p.a_pi = value(key, raw)?,
                    "b_pi" => p.b_pi = value(key, raw)?,
                    "cond_threshold" => p.cond_threshold = value(key, raw)?,
                    "scale_w" => p.scale_w = value(key, raw)?,
                    "scale_mu" => p.scale_mu = value(key, raw)?,
                    "scale_gamma" => p.scale_gamma = value(key, raw)?,
                    "scale_z" => p.scale_z = value(key, raw)?,

                    "p_plus" => m.p_plus = value(key, raw)?,
                    "p_minus" => m.p_minus = value(key, raw)?,
                    "p_zero" => m.p_zero = value(key, raw)?,
                    "p_s" => m.p_s = value(key, raw)?,
                    "ratio_orientation" => m.orientation = raw.parse().map_err(|e: ModnetError| e.to_string())?,
                    "split_aux_sd" => m.split_aux_sd = value(key, raw)?,
                    "add_aux_sd" => m.add_aux_sd = value(key, raw)?,

                    "n_nodes" => s.n_nodes = value(key, raw)?,
                    "n_modules" => s.n_modules = value(key, raw)?,
                    "n_conditions" => s.n_conditions = value(key, raw)?,
                    "n_candidates" => s.n_candidates = value(key, raw)?,
                    "max_parents" => s.max_parents = value(key, raw)?,
                    "weight_min" => s.ranges.weight.0 = value(key, raw)?,
                    "weight_max" => s.ranges.weight.1 = value(key, raw)?,
                    "pi_min" => s.ranges.pi.0 = value(key, raw)?,
                    "pi_max" => s.ranges.pi.1 = value(key, raw)?,
                    "gamma_min" => s.ranges.gamma.0 = value(key, raw)?,
                    "gamma_max" => s.ranges.gamma.1 = value(key, raw)?,
                    "min_gamma_gap" => s.ranges.min_gamma_gap = value(key, raw)?,
                    "split_sd" => s.ranges.split_sd = value(key, raw)?,
                    "parent_mean_sd" => s.ranges.parent_mean_sd = value(key, raw)?,
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            })();
            result.map_err(err)?;
        }
        cfg.prior.k_prior = match (k_prior_kind.as_str(), k_geometric_p) {
            ("uniform", _) => KPrior::Uniform { k_max },
            ("geometric", Some(p)) => KPrior::Geometric { p, k_max },
            ("geometric", None) => return Err(ModnetError::Config("k_prior = geometric needs k_geometric_p".into())),
            (other, _) => {
                return Err(ModnetError::Config(format!(
                    "unknown k_prior {other:?} (expected uniform or geometric)"
                )))
            }
        };
        cfg.k_init = match k_init_raw.as_str() {
            "auto" => KInit::Auto { max: k_auto_max },
            n => KInit::Fixed(
                n.parse()
                    .map_err(|_| ModnetError::Config(format!("k_init must be `auto` or a positive integer, got {n:?}")))?,
            ),
        };
        cfg.synthetic.ranges.pi0 = cfg.pi0;
        cfg.synthetic.ranges.cond_threshold = cfg.prior.cond_threshold;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModnetError::Config(msg));
        if self.thinning < 1 {
            return bad("thinning must be at least 1".into());
        }
        if self.n_chains < 1 {
            return bad("n_chains must be at least 1".into());
        }
        if self.parallelism < 1 {
            return bad("parallelism must be at least 1".into());
        }
        if !(self.burn_in < self.iterations || (self.iterations == 0 && self.burn_in == 0)) {
            return bad(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if !(self.pi0 > 0.0 && self.pi0 < 1.0) {
            return bad(format!("pi0 must lie in (0, 1), got {}", self.pi0));
        }
        match self.k_init {
            KInit::Fixed(0) | KInit::Auto { max: 0 } => return bad("k_init / k_auto_max must be at least 1".into()),
            KInit::Fixed(k) if k > self.prior.k_prior.k_max() => {
                return bad(format!("k_init = {k} exceeds k_max = {}", self.prior.k_prior.k_max()))
            }
            _ => {}
        }
        self.prior.validate()?;
        self.moves.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::RatioOrientation;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("test.conf"))
    }

    #[test]
    fn defaults() {
        let cfg = parse("").unwrap();
        assert_eq!((cfg.iterations, cfg.burn_in, cfg.thinning, cfg.n_chains), (20_000, 10_000, 1, 1));
        assert_eq!(cfg.k_init, KInit::Auto { max: 10 });
        assert_eq!(cfg.mode, LikelihoodMode::Integrated);
        assert_eq!(cfg.synthetic, SyntheticConfig::default());
    }

    #[test]
    fn keys_and_comments() {
        let cfg = parse(
            "# run\niterations = 500   # short\nburn_in=100\nmode = variables-only\nk_init = 3\n\
             k_prior = geometric\nk_geometric_p = 0.3\nk_max = 8\nratio_orientation = as-printed\nn_nodes = 60\n",
        )
        .unwrap();
        assert_eq!(cfg.iterations, 500);
        assert_eq!(cfg.burn_in, 100);
        assert_eq!(cfg.mode, LikelihoodMode::VariablesOnly);
        assert_eq!(cfg.k_init, KInit::Fixed(3));
        assert_eq!(cfg.prior.k_prior, KPrior::Geometric { p: 0.3, k_max: 8 });
        assert_eq!(cfg.moves.orientation, RatioOrientation::AsPrinted);
        assert_eq!(cfg.synthetic.n_nodes, 60);
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse("iterations = 10\nbogus = 1\n").unwrap_err();
        assert!(matches!(e, ModnetError::Parse { line: 2, .. }), "{e}");
        let e = parse("iterations = ten\n").unwrap_err();
        assert!(matches!(e, ModnetError::Parse { line: 1, .. }), "{e}");
        assert!(matches!(parse("no equals sign\n").unwrap_err(), ModnetError::Parse { line: 1, .. }));
    }

    #[test]
    fn invariants() {
        assert!(parse("iterations = 100\nburn_in = 100\n").is_err());
        assert!(parse("iterations = 0\nburn_in = 0\n").is_ok());
        assert!(parse("thinning = 0\n").is_err());
        assert!(parse("n_chains = 0\n").is_err());
        assert!(parse("mode = both\n").is_err());
        assert!(parse("p_plus = 0.5\n").is_err());
        assert!(parse("k_init = 30\n").is_err());
    }
}
