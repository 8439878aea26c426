use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modnet::io::{run_diagnose, run_evaluate, run_fit, run_simulate, RunConfig};
use modnet::{LikelihoodMode, ModnetError};

/// Bayesian learning of modular dependency structures from node variables
/// and network data.
#[derive(Debug, Parser)]
#[command(name = "modnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known structure.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample the posterior over modules, parent sets and parameters.
    Fit {
        #[arg(long)]
        variables: Option<PathBuf>,
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = ["integrated", "variables-only", "network-only"])]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a fitted trace against known links.
    Evaluate {
        /// Trace file; repeat to pool chains.
        #[arg(long, required = true)]
        trace: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Autocorrelation, K and log-posterior traces of a fit.
    Diagnose {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// 2 usage or configuration, 3 data, 4 runtime or numerical.
fn exit_code(e: &ModnetError) -> u8 {
    match e {
        ModnetError::Config(_) | ModnetError::InvalidArgument(_) => 2,
        ModnetError::Parse { .. } | ModnetError::Data(_) | ModnetError::Io { .. } | ModnetError::StructuralMismatch(_) => 3,
        ModnetError::Singular { .. } | ModnetError::Numerical(_) | ModnetError::DegenerateTest(_) => 4,
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, ModnetError> {
    match path {
        Some(p) => RunConfig::from_file(p).map_err(|e| match e {
            // A config file that cannot be read or parsed is a usage error.
            ModnetError::Io { .. } | ModnetError::Parse { .. } => ModnetError::Config(e.to_string()),
            other => other,
        }),
        None => Ok(RunConfig::default()),
    }
}

fn required(flag: Option<PathBuf>, from_config: &Option<PathBuf>, name: &str) -> Result<PathBuf, ModnetError> {
    flag.or_else(|| from_config.clone())
        .ok_or_else(|| ModnetError::Config(format!("--{name} is required (or set `{name}` in the config)")))
}

fn run(cli: Cli) -> Result<(), ModnetError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let files = run_simulate(&cfg, &out)?;
            println!("wrote {} and {}", files.variables.display(), files.network.display());
        }
        Command::Fit {
            variables,
            network,
            config,
            out,
            mode,
            seed,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(m) = mode {
                cfg.mode = m.parse::<LikelihoodMode>()?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let variables = required(variables, &cfg.variables, "variables")?;
            let network = required(network, &cfg.network, "network")?;
            let out = required(out, &cfg.out, "out")?;
            for o in run_fit(&cfg, &variables, &network, &out)? {
                println!(
                    "chain {}: K = {}, log posterior {:.3}, {:.1} s -> {}",
                    o.chain,
                    o.final_state.n_modules(),
                    o.final_state.log_post(),
                    o.seconds,
                    o.trace.display()
                );
            }
        }
        Command::Evaluate { trace, truth, out } => {
            let r = run_evaluate(&trace, &truth, &out)?;
            println!(
                "auc {:.4}  aupr {:.4}  precision {:.4}  recall {:.4}  modal K {}",
                r.auc, r.aupr, r.precision, r.recall, r.mode.k
            );
        }
        Command::Diagnose { trace, out } => {
            let d = run_diagnose(&trace, &out)?;
            println!("autocorrelation up to lag {} written to {}", d.max_lag, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
