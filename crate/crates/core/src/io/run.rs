//! The four commands: simulate, fit, evaluate and diagnose.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::config::RunConfig;
use super::trace::{read_trace, TraceHeader, TraceRecord, TraceWriter, TRACE_FORMAT, TRACE_VERSION};
use super::tsv::{load_dataset, load_links, write_links, write_network, write_table, write_variables};
use crate::diagnostics::{autocorrelation, ChainTrace, Sample};
use crate::error::{ModnetError, Result};
use crate::eval::{evaluate, EvalReport};
use crate::exec;
use crate::model::Model;
use crate::rng::{derive_seed, substream, Stream};
use crate::sampler::{initial_state, run_chain, ChainState, MoveKind, MoveStats, RunOptions};
use crate::synthetic::simulate;

const MAX_LAG: usize = 100;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ModnetError::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ModnetError::Numerical(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ModnetError::io(path, e))
}

/// Seed of chain `i` derived from the run seed.
pub fn chain_seed(seed: u64, chain: usize) -> u64 {
    derive_seed(seed, &[chain as u64])
}

/// Node ids `n1…nN` and condition ids `c1…cC` used for synthetic data.
fn synthetic_ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Files written by `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutput {
    pub variables: PathBuf,
    pub network: PathBuf,
    pub truth_links: PathBuf,
    pub truth_assignment: PathBuf,
    pub truth_parameters: PathBuf,
}

pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateOutput> {
    create_dir(out)?;
    let mut rng = substream(cfg.seed, 0, Stream::Simulate, 0);
    let (data, truth) = simulate(&cfg.synthetic, &mut rng)?;
    let node_ids = synthetic_ids("n", data.n_nodes());
    let condition_ids = synthetic_ids("c", data.n_conditions());
    let candidate_ids: Vec<String> = data.candidates().iter().map(|&n| node_ids[n].clone()).collect();
    let edges: Vec<Vec<u8>> = (0..data.n_candidates()).map(|r| data.edge_row(r).to_vec()).collect();

    let files = SimulateOutput {
        variables: out.join("variables.tsv"),
        network: out.join("network.tsv"),
        truth_links: out.join("truth_links.tsv"),
        truth_assignment: out.join("truth_assignment.tsv"),
        truth_parameters: out.join("truth_parameters.json"),
    };
    write_variables(&files.variables, &node_ids, &condition_ids, data.variables())?;
    write_network(&files.network, &node_ids, data.candidates(), &edges)?;
    write_links(&files.truth_links, &node_ids, &candidate_ids, &truth.link_set)?;
    write_table(
        &files.truth_assignment,
        &["node_id", "module"],
        node_ids
            .iter()
            .zip(truth.structure.assignment())
            .map(|(id, m)| vec![id.clone(), m.to_string()]),
    )?;
    let prior = cfg.prior.clone();
    let model = Model::new(&data, &prior, cfg.mode);
    let header = TraceHeader {
        format: TRACE_FORMAT.into(),
        version: TRACE_VERSION,
        chain: 0,
        seed: cfg.seed,
        mode: cfg.mode,
        iterations: 0,
        burn_in: 0,
        thinning: 1,
        pi0: truth.params.pi0,
        node_ids,
        candidate_ids,
        condition_ids,
    };
    let state = ChainState::new(&model, truth.structure.clone(), truth.params.clone(), cfg.seed)?;
    write_json(
        &files.truth_parameters,
        &json!({
            "synthetic": cfg.synthetic,
            "seed": cfg.seed,
            "log_post_on_generated_data": state.log_post(),
            "state": TraceRecord::from_state(&header, &state),
        }),
    )?;
    Ok(files)
}

fn stats_json(stats: &MoveStats) -> serde_json::Value {
    let map: BTreeMap<&str, serde_json::Value> = MoveKind::ALL
        .iter()
        .map(|&k| {
            (
                k.as_str(),
                json!({
                    "proposed": stats.proposed(k),
                    "accepted": stats.accepted(k),
                    "rate": stats.acceptance_rate(k),
                }),
            )
        })
        .collect();
    json!(map)
}

/// Outcome of one chain of `fit`.
#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub chain: usize,
    pub trace: PathBuf,
    pub final_state: ChainState,
    pub stats: MoveStats,
    pub seconds: f64,
}

/// Runs `cfg.n_chains` chains and writes `trace_chain<i>.jsonl`,
/// `summary.json`, `timing.json` and `centering.tsv` into `out`.
pub fn run_fit(cfg: &RunConfig, variables: &Path, network: &Path, out: &Path) -> Result<Vec<ChainOutcome>> {
    cfg.validate()?;
    let loaded = load_dataset(variables, network)?;
    create_dir(out)?;
    let dataset = &loaded.dataset;
    let parallel = cfg.parallelism > 1;
    let model = Model::new(dataset, &cfg.prior, cfg.mode).with_parallel(parallel);
    let opts = RunOptions {
        iterations: cfg.iterations,
        thinning: cfg.thinning,
        moves: cfg.moves.clone(),
        warm_up: cfg.warm_up,
    };
    let header_for = |chain: usize| TraceHeader {
        format: TRACE_FORMAT.into(),
        version: TRACE_VERSION,
        chain,
        seed: cfg.seed,
        mode: cfg.mode,
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        thinning: cfg.thinning,
        pi0: cfg.pi0,
        node_ids: loaded.variables.node_ids.clone(),
        candidate_ids: loaded.network.candidate_ids.clone(),
        condition_ids: loaded.variables.condition_ids.clone(),
    };
    let started = Instant::now();
    let results = exec::with_pool(cfg.parallelism, || {
        exec::map_vec((0..cfg.n_chains).collect(), parallel, |_, chain| -> Result<ChainOutcome> {
            let path = out.join(format!("trace_chain{chain}.jsonl"));
            let t0 = Instant::now();
            let mut state = initial_state(&model, cfg.k_init, cfg.pi0, chain_seed(cfg.seed, chain))?;
            let mut writer = TraceWriter::create(&path, header_for(chain))?;
            let stats = run_chain(&mut state, &model, &opts, |s| writer.write_state(s))?;
            writer.finish()?;
            Ok(ChainOutcome {
                chain,
                trace: path,
                final_state: state,
                stats,
                seconds: t0.elapsed().as_secs_f64(),
            })
        })
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let total = started.elapsed().as_secs_f64();

    write_table(
        &out.join("centering.tsv"),
        &["node_id", "mean"],
        loaded
            .variables
            .node_ids
            .iter()
            .zip(&loaded.variables.row_means)
            .map(|(id, m)| vec![id.clone(), m.to_string()]),
    )?;
    let chains: Vec<serde_json::Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "chain": o.chain,
                "seed": chain_seed(cfg.seed, o.chain),
                "trace": o.trace.file_name().map(|n| n.to_string_lossy().into_owned()),
                "final_k": o.final_state.n_modules(),
                "final_log_post": o.final_state.log_post(),
                "acceptance": stats_json(&o.stats),
            })
        })
        .collect();
    write_json(
        &out.join("summary.json"),
        &json!({
            "mode": cfg.mode,
            "iterations": cfg.iterations,
            "burn_in": cfg.burn_in,
            "thinning": cfg.thinning,
            "warm_up": cfg.warm_up,
            "seed": cfg.seed,
            "n_nodes": dataset.n_nodes(),
            "n_conditions": dataset.n_conditions(),
            "n_candidates": dataset.n_candidates(),
            "centering": "per-node mean subtracted at load; means in centering.tsv",
            "input_warnings": loaded.network.warnings,
            "chains": chains,
        }),
    )?;
    let timing: Vec<serde_json::Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "chain": o.chain,
                "seconds": o.seconds,
                "sweeps_per_second": if o.seconds > 0.0 { cfg.iterations as f64 / o.seconds } else { 0.0 },
            })
        })
        .collect();
    write_json(
        &out.join("timing.json"),
        &json!({ "parallelism": cfg.parallelism, "total_seconds": total, "chains": timing }),
    )?;
    Ok(outcomes)
}

/// Reads one or more chains of the same fit and drops each chain's burn-in.
pub fn load_traces(paths: &[PathBuf]) -> Result<(TraceHeader, ChainTrace)> {
    let (first, rest) = paths
        .split_first()
        .ok_or_else(|| ModnetError::InvalidArgument("no trace files given".into()))?;
    let (header, trace) = read_trace(first)?;
    let mut pooled = trace.drop_burn_in(header.burn_in)?;
    for p in rest {
        let (h, t) = read_trace(p)?;
        if h.node_ids != header.node_ids || h.candidate_ids != header.candidate_ids {
            return Err(ModnetError::Data(format!(
                "{} and {} describe different datasets",
                first.display(),
                p.display()
            )));
        }
        pooled.samples.extend(t.drop_burn_in(h.burn_in)?.samples);
    }
    Ok((header, pooled))
}

pub fn run_evaluate(traces: &[PathBuf], truth: &Path, out: &Path) -> Result<EvalReport> {
    let (header, trace) = load_traces(traces)?;
    if trace.is_empty() {
        return Err(ModnetError::Data("trace has no samples after burn-in".into()));
    }
    let links = load_links(truth, &header.node_ids, &header.candidate_ids)?;
    let report = evaluate(&trace, &links).map_err(|e| match e {
        ModnetError::InvalidArgument(m) => ModnetError::Data(m),
        other => other,
    })?;
    create_dir(out)?;
    let p = &report.link_probability;
    write_table(
        &out.join("link_posterior.tsv"),
        &["parent_id", "node_id", "probability"],
        (0..p.nrows()).flat_map(|r| {
            let header = &header;
            (0..p.ncols()).map(move |n| {
                vec![header.candidate_ids[r].clone(), header.node_ids[n].clone(), p[(r, n)].to_string()]
            })
        }),
    )?;
    let points = |c: &crate::eval::Curve| -> Vec<Vec<String>> {
        c.points.iter().map(|&(x, y, t)| vec![x.to_string(), y.to_string(), t.to_string()]).collect()
    };
    write_table(&out.join("roc.tsv"), &["fpr", "tpr", "threshold"], points(&report.roc))?;
    write_table(&out.join("pr.tsv"), &["recall", "precision", "threshold"], points(&report.pr))?;
    write_table(
        &out.join("mode_assignment.tsv"),
        &["node_id", "module"],
        header
            .node_ids
            .iter()
            .zip(&report.mode.assignment)
            .map(|(id, m)| vec![id.clone(), m.to_string()]),
    )?;
    write_json(
        &out.join("metrics.json"),
        &json!({
            "auc": report.auc,
            "aupr": report.aupr,
            "precision": report.precision,
            "recall": report.recall,
            "modal_k": report.mode.k,
            "n_samples": trace.len(),
        }),
    )?;
    Ok(report)
}

/// Autocorrelation columns written by `diagnose`, `None` where the series
/// is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub series: Vec<(String, Option<Vec<f64>>)>,
    pub max_lag: usize,
}

/// Series `diagnose` reports: log posterior, K and the first candidate's
/// mean in the first condition.
pub fn diagnostic_series(header: &TraceHeader, trace: &ChainTrace) -> Vec<(String, Vec<f64>)> {
    let mut out = vec![
        ("log_post".to_string(), trace.log_post_series()),
        ("k".to_string(), trace.k_series().into_iter().map(|k| k as f64).collect()),
    ];
    if let (Some(r), Some(c)) = (header.candidate_ids.first(), header.condition_ids.first()) {
        out.push((format!("mu_{r}_{c}"), trace.parent_mean_series(0, 0)));
    }
    out
}

pub fn run_diagnose(trace_path: &Path, out: &Path) -> Result<Diagnostics> {
    let (header, full) = read_trace(trace_path)?;
    let kept = full.drop_burn_in(header.burn_in)?;
    if kept.len() < 2 {
        return Err(ModnetError::Data(format!(
            "autocorrelation needs at least 2 post-burn-in samples, trace has {}",
            kept.len()
        )));
    }
    create_dir(out)?;
    let per_sample = |s: &Sample, v: String| vec![s.iteration.to_string(), v];
    write_table(
        &out.join("k_trace.tsv"),
        &["iteration", "k"],
        full.samples.iter().map(|s| per_sample(s, s.n_modules().to_string())),
    )?;
    write_table(
        &out.join("log_post_trace.tsv"),
        &["iteration", "log_post"],
        full.samples.iter().map(|s| per_sample(s, s.log_post.to_string())),
    )?;
    let max_lag = MAX_LAG.min(kept.len() - 1);
    let series: Vec<(String, Option<Vec<f64>>)> = diagnostic_series(&header, &kept)
        .into_iter()
        .map(|(name, values)| (name, autocorrelation(&values, max_lag).ok()))
        .collect();
    let mut columns = vec!["lag".to_string()];
    columns.extend(series.iter().map(|(n, _)| n.clone()));
    let header_row: Vec<&str> = columns.iter().map(String::as_str).collect();
    write_table(
        &out.join("autocorrelation.tsv"),
        &header_row,
        (0..=max_lag).map(|lag| {
            let mut row = vec![lag.to_string()];
            row.extend(series.iter().map(|(_, s)| s.as_ref().map_or("nan".to_string(), |v| v[lag].to_string())));
            row
        }),
    )?;
    Ok(Diagnostics { series, max_lag })
}
