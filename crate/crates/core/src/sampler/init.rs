//! Chain initialisation: k-means over node profiles.

use nalgebra::DMatrix;
use rand::Rng;

use super::rjmcmc::fitted_link;
use super::ChainState;
use crate::error::{ModnetError, Result};
use crate::model::{Dataset, Model, ModelParameters, ModularStructure};
use crate::rng::{substream, Stream};

const MAX_LLOYD_ITERATIONS: usize = 100;
/// Independent k-means++ starts per clustering; the lowest SSE wins.
const KMEANS_RESTARTS: usize = 10;

/// How the initial number of modules is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KInit {
    /// Pick K0 in `1..=max` by BIC.
    Auto { max: usize },
    Fixed(usize),
}

impl Default for KInit {
    fn default() -> Self {
        KInit::Auto { max: 10 }
    }
}

/// Result of one k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Cluster of every row, relabelled in order of first appearance.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares.
    pub sse: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeds<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut idx = d2.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if t < d {
                    idx = i;
                    break;
                }
                t -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding on the given points.
/// An emptied cluster is reseeded at the point farthest from its centroid.
pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Result<KMeans> {
    if k == 0 || k > points.len() {
        return Err(ModnetError::InvalidArgument(format!(
            "k-means needs 1 <= k <= {} points, got k = {k}",
            points.len()
        )));
    }
    let dim = points[0].len();
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (j, _) = nearest(p, &centroids);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            } else {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[labels[a]]);
                        let db = sq_dist(&points[b], &centroids[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("points are non-empty");
                centroids[j] = points[far].clone();
                labels[far] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Relabel by first appearance and drop clusters that stayed empty.
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    let mut ordered = vec![Vec::new(); next];
    for (j, c) in centroids.into_iter().enumerate() {
        if map[j] != usize::MAX {
            ordered[map[j]] = c;
        }
    }
    let sse = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &ordered[l])).sum();
    Ok(KMeans {
        labels,
        centroids: ordered,
        sse,
    })
}

/// Best of `restarts` k-means runs by within-cluster sum of squares.
pub fn kmeans_restarts<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, restarts: usize, rng: &mut R) -> Result<KMeans> {
    let mut best = kmeans(points, k, rng)?;
    for _ in 1..restarts {
        let run = kmeans(points, k, rng)?;
        if run.sse < best.sse {
            best = run;
        }
    }
    Ok(best)
}

fn node_rows(x: &DMatrix<f64>, nodes: &[usize]) -> Vec<Vec<f64>> {
    nodes.iter().map(|&n| x.row(n).iter().copied().collect()).collect()
}

/// Nodes clustered directly: all non-candidates, or every node when there
/// are too few of them. Candidate profiles follow their own means rather
/// than a module's, so they are attached to the nearest cluster afterwards.
fn clustering_nodes(dataset: &Dataset, k: usize) -> Vec<usize> {
    let free: Vec<usize> = (0..dataset.n_nodes()).filter(|&n| dataset.candidate_of(n).is_none()).collect();
    if free.len() >= k.max(2) {
        free
    } else {
        (0..dataset.n_nodes()).collect()
    }
}

/// k-means partition of node profiles into `k0` modules with empty parent sets.
pub fn init_assignments_kmeans<R: Rng + ?Sized>(dataset: &Dataset, k0: usize, rng: &mut R) -> Result<ModularStructure> {
    let n = dataset.n_nodes();
    if k0 == 0 || k0 > n {
        return Err(ModnetError::InvalidArgument(format!("K0 must lie in 1..={n}, got {k0}")));
    }
    if k0 == n {
        return ModularStructure::new((0..n).collect(), vec![Vec::new(); n]);
    }
    let x = dataset.variables();
    let nodes = clustering_nodes(dataset, k0);
    let km = kmeans_restarts(&node_rows(x, &nodes), k0, KMEANS_RESTARTS, rng)?;
    let mut assignment = vec![usize::MAX; n];
    for (&node, &l) in nodes.iter().zip(&km.labels) {
        assignment[node] = l;
    }
    for (node, slot) in assignment.iter_mut().enumerate() {
        if *slot == usize::MAX {
            let row: Vec<f64> = x.row(node).iter().copied().collect();
            *slot = nearest(&row, &km.centroids).0;
        }
    }
    let k = km.centroids.len();
    ModularStructure::new(assignment, vec![Vec::new(); k])
}

/// K0 minimising `n d log(SSE / (n d)) + k d log n` over `1..=k_max`.
pub fn choose_k_bic<R: Rng + ?Sized>(dataset: &Dataset, k_max: usize, rng: &mut R) -> Result<usize> {
    let nodes = clustering_nodes(dataset, 1);
    let points = node_rows(dataset.variables(), &nodes);
    let n = points.len() as f64;
    let d = dataset.n_conditions() as f64;
    let mut best = (1, f64::INFINITY);
    for k in 1..=k_max.min(points.len()) {
        let km = kmeans_restarts(&points, k, KMEANS_RESTARTS, rng)?;
        let sse = km.sse.max(f64::MIN_POSITIVE);
        let bic = n * d * (sse / (n * d)).ln() + k as f64 * d * n.ln();
        if bic < best.1 {
            best = (k, bic);
        }
    }
    Ok(best.0)
}

fn centroid(x: &DMatrix<f64>, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; x.ncols()];
    for &n in members {
        for (j, v) in c.iter_mut().enumerate() {
            *v += x[(n, j)];
        }
    }
    c.iter_mut().for_each(|v| *v /= members.len() as f64);
    c
}

/// Merges every module with fewer than two nodes that are not in-use
/// parents into the module with the nearest centroid.
pub fn repair_small_modules(structure: &ModularStructure, dataset: &Dataset) -> Result<ModularStructure> {
    let x = dataset.variables();
    let mut s = structure.clone();
    loop {
        let in_use = s.candidates_in_use(dataset.n_candidates());
        let counts: Vec<usize> = s
            .members_by_module()
            .iter()
            .map(|m| {
                m.iter()
                    .filter(|&&n| !dataset.candidate_of(n).is_some_and(|r| in_use[r]))
                    .count()
            })
            .collect();
        let Some(small) = (0..counts.len()).filter(|&k| counts[k] < 2).min_by_key(|&k| (counts[k], k)) else {
            return Ok(s);
        };
        if s.n_modules() == 1 {
            return Err(ModnetError::InvalidArgument(
                "cannot form a module with two non-parent nodes".into(),
            ));
        }
        let members = s.members_by_module();
        let c = centroid(x, &members[small]);
        let target = (0..s.n_modules())
            .filter(|&k| k != small)
            .min_by(|&a, &b| {
                sq_dist(&c, &centroid(x, &members[a])).total_cmp(&sq_dist(&c, &centroid(x, &members[b])))
            })
            .expect("at least two modules");
        s.merge_modules(target, small);
    }
}

/// Evidence (in nats) a candidate's edge rate into a module must carry over
/// the background rate before it becomes an initial parent.
const INITIAL_PARENT_EVIDENCE: f64 = 10.0;

fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a > 0.0 { a * (a / b).ln() } else { 0.0 };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// Gives each module the candidates whose edge rate into it is clearly
/// above `π₀`, strongest first, with fitted link parameters. Candidates
/// that would break the identifiability guard are skipped.
fn network_parents(model: &Model, structure: &mut ModularStructure, params: &mut ModelParameters) {
    let dataset = model.dataset;
    let counts = crate::model::edge_counts(dataset, structure);
    for k in 0..structure.n_modules() {
        let size = counts.sizes[k] as f64;
        let mut ranked: Vec<(f64, usize)> = (0..dataset.n_candidates())
            .map(|r| (size * bernoulli_kl(counts.counts[k][r] as f64 / size, params.pi0), r))
            .filter(|&(gain, _)| gain > INITIAL_PARENT_EVIDENCE)
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, r) in ranked {
            let link = fitted_link(structure, params, model, k, r);
            structure.insert_parent(k, r);
            params.links[k].insert(r, link);
            if model.evaluate(structure, params).is_none() {
                structure.remove_parent(k, r);
                params.links[k].remove(&r);
            }
        }
    }
}

/// Initial chain state: k-means modules (repaired so that each has two
/// free nodes), zero weights and parent means set to the candidates' own
/// profiles. When the network term is in use, modules start with the
/// parents their edge counts point to; otherwise with none.
pub fn initial_state(model: &Model, k_init: KInit, pi0: f64, seed: u64) -> Result<ChainState> {
    let dataset = model.dataset;
    let k_max = model.prior.k_prior.k_max();
    let mut rng = substream(seed, 0, Stream::Init, 0);
    let k0 = match k_init {
        KInit::Fixed(k) => {
            if k > k_max {
                return Err(ModnetError::Config(format!("k_init = {k} exceeds k_max = {k_max}")));
            }
            k
        }
        KInit::Auto { max } => choose_k_bic(dataset, max.min(k_max).max(1), &mut rng)?,
    };
    let structure = repair_small_modules(&init_assignments_kmeans(dataset, k0, &mut rng)?, dataset)?;
    let x = dataset.variables();
    let means = DMatrix::from_fn(dataset.n_candidates(), dataset.n_conditions(), |r, c| {
        x[(dataset.candidates()[r], c)]
    });
    let mut structure = structure;
    let mut params = ModelParameters::empty(structure.n_modules(), means, pi0);
    if model.mode.uses_network() {
        network_parents(model, &mut structure, &mut params);
    }
    ChainState::new(model, structure, params, seed)
}
