//! Tab-separated inputs and outputs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{ModnetError, Result};
use crate::model::Dataset;

/// Node variables as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct VariablesTable {
    pub node_ids: Vec<String>,
    pub condition_ids: Vec<String>,
    /// Per-node centred values.
    pub values: DMatrix<f64>,
    /// Mean subtracted from every row; adding it back restores the file.
    pub row_means: Vec<f64>,
}

impl VariablesTable {
    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.node_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    /// Values as they appeared in the file.
    pub fn raw(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.values.nrows(), self.values.ncols(), |i, j| self.values[(i, j)] + self.row_means[i])
    }
}

/// Edge list resolved against the node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTable {
    /// Ids of the candidates, in node order.
    pub candidate_ids: Vec<String>,
    /// Node index of every candidate.
    pub candidates: Vec<usize>,
    /// `edges[r][n]`.
    pub edges: Vec<Vec<u8>>,
    /// Duplicate edges and self-loops, one message each.
    pub warnings: Vec<String>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| ModnetError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| ModnetError::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Reads `node_id<TAB>cond_1…cond_C` with one row per node and centres
/// every row.
pub fn load_variables(path: &Path) -> Result<VariablesTable> {
    let text = read(path)?;
    let mut it = lines(&text);
    let (_, header) = it
        .next()
        .ok_or_else(|| ModnetError::parse(path, 1, "empty file, expected a header row"))?;
    let condition_ids: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
    let c = condition_ids.len();
    if c == 0 {
        return Err(ModnetError::parse(path, 1, "header names no conditions"));
    }
    let mut node_ids = Vec::new();
    let mut seen = HashMap::new();
    let mut rows = Vec::new();
    for (line_no, line) in it {
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != c + 1 {
            return Err(ModnetError::parse(
                path,
                line_no,
                format!("expected {} cells, found {}", c + 1, cells.len()),
            ));
        }
        let id = cells[0].trim();
        if id.is_empty() {
            return Err(ModnetError::parse(path, line_no, "empty node id"));
        }
        if let Some(first) = seen.insert(id.to_string(), line_no) {
            return Err(ModnetError::parse(path, line_no, format!("duplicate node id {id:?} (first on line {first})")));
        }
        let mut row = Vec::with_capacity(c);
        for (j, cell) in cells[1..].iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                ModnetError::parse(path, line_no, format!("non-numeric value {cell:?} in column {}", j + 2))
            })?;
            if !v.is_finite() {
                return Err(ModnetError::parse(path, line_no, format!("non-finite value {cell:?} in column {}", j + 2)));
            }
            row.push(v);
        }
        node_ids.push(id.to_string());
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ModnetError::parse(path, 1, "no node rows"));
    }
    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / c as f64).collect();
    let values = DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j] - row_means[i]);
    Ok(VariablesTable {
        node_ids,
        condition_ids,
        values,
        row_means,
    })
}

/// Reads a `parent_id<TAB>node_id` edge list. Every distinct parent id is
/// a candidate; candidates are ordered as the nodes are.
pub fn load_network(path: &Path, node_ids: &[String]) -> Result<NetworkTable> {
    let text = read(path)?;
    let index: HashMap<&str, usize> = node_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut unknown = Vec::new();
    for (line_no, line) in lines(&text) {
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cells.len() != 2 {
            return Err(ModnetError::parse(path, line_no, format!("expected 2 cells, found {}", cells.len())));
        }
        if line_no == 1 && cells == ["parent_id", "node_id"] {
            continue;
        }
        let (Some(&p), Some(&n)) = (index.get(cells[0]), index.get(cells[1])) else {
            unknown.extend(cells.iter().filter(|c| !index.contains_key(*c)).map(|c| format!("{c} (line {line_no})")));
            continue;
        };
        if p == n {
            warnings.push(format!("line {line_no}: self-loop on {}", cells[0]));
        }
        if let Some(first) = pairs.insert((p, n), line_no) {
            warnings.push(format!("line {line_no}: duplicate edge {} -> {} (first on line {first})", cells[0], cells[1]));
        }
    }
    if !unknown.is_empty() {
        return Err(ModnetError::Data(format!(
            "{}: unknown node ids: {}",
            path.display(),
            unknown.join(", ")
        )));
    }
    let candidates: Vec<usize> = pairs.keys().map(|&(p, _)| p).collect::<BTreeSet<_>>().into_iter().collect();
    if candidates.is_empty() {
        return Err(ModnetError::Config(format!(
            "{}: no edges, so no candidate parents (at least one is required)",
            path.display()
        )));
    }
    let slot: HashMap<usize, usize> = candidates.iter().enumerate().map(|(r, &p)| (p, r)).collect();
    let mut edges = vec![vec![0u8; node_ids.len()]; candidates.len()];
    for &(p, n) in pairs.keys() {
        edges[slot[&p]][n] = 1;
    }
    Ok(NetworkTable {
        candidate_ids: candidates.iter().map(|&p| node_ids[p].clone()).collect(),
        candidates,
        edges,
        warnings,
    })
}

/// Variables and network together as a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub variables: VariablesTable,
    pub network: NetworkTable,
    pub dataset: Dataset,
    pub sources: (PathBuf, PathBuf),
}

pub fn load_dataset(variables: &Path, network: &Path) -> Result<LoadedData> {
    let v = load_variables(variables)?;
    let n = load_network(network, &v.node_ids)?;
    let dataset = Dataset::new(v.values.clone(), n.edges.clone(), n.candidates.clone())
        .map_err(|e| ModnetError::Data(e.to_string()))?;
    Ok(LoadedData {
        variables: v,
        network: n,
        dataset,
        sources: (variables.to_path_buf(), network.to_path_buf()),
    })
}

/// `(parent_id, node_id)` pairs; an optional `parent_id<TAB>node_id` header
/// is skipped. Ids missing from `node_ids` are reported together.
pub fn load_links(path: &Path, node_ids: &[String], candidate_ids: &[String]) -> Result<BTreeSet<(usize, usize)>> {
    let text = read(path)?;
    let nodes: HashMap<&str, usize> = node_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let cands: HashMap<&str, usize> = candidate_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut links = BTreeSet::new();
    let mut offenders = Vec::new();
    for (line_no, line) in lines(&text) {
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cells.len() != 2 {
            return Err(ModnetError::parse(path, line_no, format!("expected 2 cells, found {}", cells.len())));
        }
        if line_no == 1 && cells == ["parent_id", "node_id"] {
            continue;
        }
        match (cands.get(cells[0]), nodes.get(cells[1])) {
            (Some(&r), Some(&n)) => {
                links.insert((r, n));
            }
            (r, n) => {
                if r.is_none() {
                    offenders.push(format!("{} (line {line_no}, not a candidate parent)", cells[0]));
                }
                if n.is_none() {
                    offenders.push(format!("{} (line {line_no}, not a node)", cells[1]));
                }
            }
        }
    }
    if !offenders.is_empty() {
        return Err(ModnetError::Data(format!(
            "{}: unknown ids: {}",
            path.display(),
            offenders.join(", ")
        )));
    }
    Ok(links)
}

/// Writes values with full round-trip precision.
pub fn write_variables(path: &Path, node_ids: &[String], condition_ids: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut out = String::from("node_id");
    for c in condition_ids {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for (i, id) in node_ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..values.ncols() {
            let _ = write!(out, "\t{}", values[(i, j)]);
        }
        out.push('\n');
    }
    write(path, &out)
}

/// Writes `edges[r][n] = 1` as `parent_id<TAB>node_id` lines.
pub fn write_network(path: &Path, node_ids: &[String], candidates: &[usize], edges: &[Vec<u8>]) -> Result<()> {
    let mut out = String::from("parent_id\tnode_id\n");
    for (r, row) in edges.iter().enumerate() {
        for (n, &b) in row.iter().enumerate() {
            if b == 1 {
                let _ = writeln!(out, "{}\t{}", node_ids[candidates[r]], node_ids[n]);
            }
        }
    }
    write(path, &out)
}

/// Writes `(candidate, node)` pairs as `parent_id<TAB>node_id` lines.
pub fn write_links(path: &Path, node_ids: &[String], candidate_ids: &[String], links: &BTreeSet<(usize, usize)>) -> Result<()> {
    let mut out = String::from("parent_id\tnode_id\n");
    for &(r, n) in links {
        let _ = writeln!(out, "{}\t{}", candidate_ids[r], node_ids[n]);
    }
    write(path, &out)
}

/// Writes a header line and rows of already formatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = header.join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    write(path, &out)
}
