//! Line-delimited JSON chain traces.
//!
//! The first line is a [`TraceHeader`]; every further line is one
//! [`TraceRecord`]. Nodes and candidates are named by their ids, so a trace
//! can be read without the data files. Records carry every continuous
//! parameter, which is enough to recompute the state's log posterior.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{ChainTrace, Sample};
use crate::error::{ModnetError, Result};
use crate::model::{LikelihoodMode, LinkParams, ModelParameters, ModularStructure};
use crate::sampler::ChainState;

pub const TRACE_FORMAT: &str = "modnet-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub chain: usize,
    pub seed: u64,
    pub mode: LikelihoodMode,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub pi0: f64,
    pub node_ids: Vec<String>,
    pub candidate_ids: Vec<String>,
    pub condition_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub module: usize,
    pub parent: String,
    #[serde(flatten)]
    pub params: LinkParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub log_post: f64,
    pub k: usize,
    /// Node id → module.
    pub assignment: BTreeMap<String, usize>,
    /// Module → parent ids.
    pub parents: BTreeMap<usize, Vec<String>>,
    pub weights: Vec<f64>,
    pub links: Vec<LinkRecord>,
    /// Candidate id → `μ^R` per condition.
    pub parent_means: BTreeMap<String, Vec<f64>>,
}

impl TraceRecord {
    pub fn from_state(header: &TraceHeader, state: &ChainState) -> Self {
        let s = &state.structure;
        let p = &state.params;
        let cand = |r: usize| header.candidate_ids[r].clone();
        TraceRecord {
            iteration: state.iteration,
            log_post: state.log_post(),
            k: s.n_modules(),
            assignment: header.node_ids.iter().cloned().zip(s.assignment().iter().copied()).collect(),
            parents: (0..s.n_modules()).map(|k| (k, s.parents(k).iter().map(|&r| cand(r)).collect())).collect(),
            weights: p.weights.clone(),
            links: p
                .links
                .iter()
                .enumerate()
                .flat_map(|(k, m)| m.iter().map(move |(&r, &l)| (k, r, l)))
                .map(|(module, r, params)| LinkRecord {
                    module,
                    parent: cand(r),
                    params,
                })
                .collect(),
            parent_means: (0..p.parent_means.nrows())
                .map(|r| (cand(r), p.parent_means.row(r).iter().copied().collect()))
                .collect(),
        }
    }

    /// Rebuilds the sample, resolving ids through the header.
    pub fn to_sample(&self, header: &TraceHeader) -> std::result::Result<Sample, String> {
        let cand: BTreeMap<&str, usize> = header.candidate_ids.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let lookup = |id: &str| cand.get(id).copied().ok_or_else(|| format!("unknown candidate id {id:?}"));
        let assignment = header
            .node_ids
            .iter()
            .map(|id| self.assignment.get(id).copied().ok_or_else(|| format!("node {id:?} has no module")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if self.assignment.len() != header.node_ids.len() {
            return Err("assignment names nodes missing from the header".into());
        }
        let mut parents = vec![Vec::new(); self.k];
        for (&k, ids) in &self.parents {
            let slot = parents.get_mut(k).ok_or_else(|| format!("parent set for module {k} but K = {}", self.k))?;
            *slot = ids.iter().map(|id| lookup(id)).collect::<std::result::Result<_, _>>()?;
        }
        let structure = ModularStructure::new(assignment, parents).map_err(|e| e.to_string())?;
        let (r_total, c_total) = (header.candidate_ids.len(), header.condition_ids.len());
        let mut means = DMatrix::zeros(r_total, c_total);
        for (id, row) in &self.parent_means {
            let r = lookup(id)?;
            if row.len() != c_total {
                return Err(format!("parent means of {id:?} have {} conditions, expected {c_total}", row.len()));
            }
            for (c, &v) in row.iter().enumerate() {
                means[(r, c)] = v;
            }
        }
        let mut params = ModelParameters::empty(self.k, means, header.pi0);
        params.weights = self.weights.clone();
        for l in &self.links {
            let map = params.links.get_mut(l.module).ok_or_else(|| format!("link for module {} but K = {}", l.module, self.k))?;
            map.insert(lookup(&l.parent)?, l.params);
        }
        Ok(Sample {
            iteration: self.iteration,
            log_post: self.log_post,
            structure,
            params,
        })
    }
}

/// Streams a trace file: header on creation, then one line per sample.
pub struct TraceWriter {
    header: TraceHeader,
    out: BufWriter<File>,
    path: PathBuf,
}

impl TraceWriter {
    pub fn create(path: &Path, header: TraceHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| ModnetError::io(path, e))?;
        let mut w = TraceWriter {
            header,
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        let line = serde_json::to_string(&w.header).map_err(|e| ModnetError::Numerical(e.to_string()))?;
        w.line(&line)?;
        Ok(w)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}").map_err(|e| ModnetError::io(&self.path, e))
    }

    pub fn write_state(&mut self, state: &ChainState) -> Result<()> {
        let record = TraceRecord::from_state(&self.header, state);
        let line = serde_json::to_string(&record).map_err(|e| ModnetError::Numerical(e.to_string()))?;
        self.line(&line)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| ModnetError::io(&self.path, e))
    }
}

/// Reads a whole trace file.
pub fn read_trace(path: &Path) -> Result<(TraceHeader, ChainTrace)> {
    let file = File::open(path).map_err(|e| ModnetError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| ModnetError::parse(path, 1, "empty trace file"))?;
    let first = first.map_err(|e| ModnetError::io(path, e))?;
    let header: TraceHeader =
        serde_json::from_str(&first).map_err(|e| ModnetError::parse(path, 1, format!("bad header: {e}")))?;
    if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
        return Err(ModnetError::parse(
            path,
            1,
            format!("not a {TRACE_FORMAT} v{TRACE_VERSION} file ({} v{})", header.format, header.version),
        ));
    }
    let mut trace = ChainTrace::new(header.thinning);
    for (i, line) in lines {
        let line = line.map_err(|e| ModnetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord =
            serde_json::from_str(&line).map_err(|e| ModnetError::parse(path, i + 1, e.to_string()))?;
        let sample = record.to_sample(&header).map_err(|e| ModnetError::parse(path, i + 1, e))?;
        trace.push(sample);
    }
    trace.total_iterations = header.iterations;
    Ok((header, trace))
}
