//! Structure-recovery metrics over a post-burn-in trace.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::diagnostics::ChainTrace;
use crate::error::{ModnetError, Result};

fn non_empty(trace: &ChainTrace) -> Result<()> {
    if trace.is_empty() {
        return Err(ModnetError::InvalidArgument("trace has no samples".into()));
    }
    Ok(())
}

/// `P[r][n]` = fraction of samples with `r ∈ Pa_{A(n)}`.
pub fn link_posterior(trace: &ChainTrace) -> Result<DMatrix<f64>> {
    non_empty(trace)?;
    let first = &trace.samples[0];
    let (r_total, n_total) = (first.params.parent_means.nrows(), first.structure.n_nodes());
    let mut p = DMatrix::zeros(r_total, n_total);
    for s in &trace.samples {
        for n in 0..n_total {
            for &r in s.structure.parents(s.structure.module_of(n)) {
                p[(r, n)] += 1.0;
            }
        }
    }
    Ok(p / trace.len() as f64)
}

/// Labels of `labels` matched onto `reference` by greedy maximum overlap.
/// Labels left unmatched get fresh labels above the reference's.
fn align(labels: &[usize], reference: &[usize], n_ref: usize) -> Vec<usize> {
    let n_lab = labels.iter().max().map_or(0, |m| m + 1);
    let mut overlap: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&l, &r) in labels.iter().zip(reference) {
        *overlap.entry((l, r)).or_default() += 1;
    }
    let mut pairs: Vec<((usize, usize), usize)> = overlap.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut map = vec![usize::MAX; n_lab];
    let mut taken = vec![false; n_ref];
    for ((l, r), _) in pairs {
        if map[l] == usize::MAX && !taken[r] {
            map[l] = r;
            taken[r] = true;
        }
    }
    let mut next = n_ref;
    for m in map.iter_mut().filter(|m| **m == usize::MAX) {
        *m = next;
        next += 1;
    }
    labels.iter().map(|&l| map[l]).collect()
}

fn relabel_by_first_appearance(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Modal assignment and modal module count of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAssignment {
    pub assignment: Vec<usize>,
    pub k: usize,
}

/// Per-node modal module after aligning every sample's labels to a
/// running reference: each node's reference label is its vote leader so
/// far, changing only when another label strictly overtakes it.
pub fn posterior_mode_assignment(trace: &ChainTrace) -> Result<ModeAssignment> {
    non_empty(trace)?;
    let n = trace.samples[0].structure.n_nodes();
    let mut votes: Vec<Vec<u64>> = vec![Vec::new(); n];
    let mut reference: Vec<usize> = trace.samples[0].structure.assignment().to_vec();
    let mut n_ref = trace.samples[0].n_modules();
    for s in &trace.samples {
        let aligned = align(s.structure.assignment(), &reference, n_ref);
        for (node, &l) in aligned.iter().enumerate() {
            if votes[node].len() <= l {
                votes[node].resize(l + 1, 0);
            }
            votes[node][l] += 1;
        }
        n_ref = n_ref.max(aligned.iter().max().map_or(0, |m| m + 1));
        for (node, v) in votes.iter().enumerate() {
            let best = argmax(v);
            if v[best] > v.get(reference[node]).copied().unwrap_or(0) {
                reference[node] = best;
            }
        }
    }
    let mut k_counts: BTreeMap<usize, u64> = BTreeMap::new();
    for s in &trace.samples {
        *k_counts.entry(s.n_modules()).or_default() += 1;
    }
    let k = k_counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&k, _)| k)
        .expect("trace is non-empty");
    Ok(ModeAssignment {
        assignment: relabel_by_first_appearance(&reference),
        k,
    })
}

/// First index of the largest count.
fn argmax(v: &[u64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Links of the per-node modal structure: node `n` gets the parent set
/// `Pa_{A(n)}` it sees most often (first seen wins ties).
pub fn modal_links(trace: &ChainTrace) -> Result<BTreeSet<(usize, usize)>> {
    non_empty(trace)?;
    let n = trace.samples[0].structure.n_nodes();
    let mut links = BTreeSet::new();
    for node in 0..n {
        let mut counts: Vec<(&[usize], u64)> = Vec::new();
        for s in &trace.samples {
            let pa = s.structure.parents(s.structure.module_of(node));
            match counts.iter_mut().find(|(p, _)| *p == pa) {
                Some(entry) => entry.1 += 1,
                None => counts.push((pa, 1)),
            }
        }
        let mut best = 0;
        for (i, c) in counts.iter().enumerate() {
            if c.1 > counts[best].1 {
                best = i;
            }
        }
        links.extend(counts[best].0.iter().map(|&r| (r, node)));
    }
    Ok(links)
}

/// Precision and recall of the modal structure's links against `truth`.
/// An empty prediction has precision 0.
pub fn precision_recall_at_mode(trace: &ChainTrace, truth: &BTreeSet<(usize, usize)>) -> Result<(f64, f64)> {
    let predicted = modal_links(trace)?;
    let hits = predicted.intersection(truth).count() as f64;
    let precision = if predicted.is_empty() { 0.0 } else { hits / predicted.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { hits / truth.len() as f64 };
    Ok((precision, recall))
}

/// Points of a threshold sweep together with the area under them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    /// `(x, y, threshold)`; ROC: `(FPR, TPR)`, PR: `(recall, precision)`.
    pub points: Vec<(f64, f64, f64)>,
    pub area: f64,
}

/// Cumulative `(threshold, true positives, false positives)` after each
/// group of tied scores, highest scores first.
fn sweep(scores: &DMatrix<f64>, truth: &BTreeSet<(usize, usize)>) -> Result<(Vec<(f64, usize, usize)>, usize, usize)> {
    let total = scores.len();
    let mut labelled: Vec<(f64, bool)> = Vec::with_capacity(total);
    for n in 0..scores.ncols() {
        for r in 0..scores.nrows() {
            labelled.push((scores[(r, n)], truth.contains(&(r, n))));
        }
    }
    let positives = labelled.iter().filter(|l| l.1).count();
    if positives == 0 || positives == total {
        return Err(ModnetError::InvalidArgument(format!(
            "truth must contain some but not all of the {total} pairs (has {positives})"
        )));
    }
    if truth.iter().any(|&(r, n)| r >= scores.nrows() || n >= scores.ncols()) {
        return Err(ModnetError::InvalidArgument("truth link outside the score matrix".into()));
    }
    labelled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut steps = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < labelled.len() {
        let t = labelled[i].0;
        while i < labelled.len() && labelled[i].0 == t {
            if labelled[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push((t, tp, fp));
    }
    Ok((steps, positives, total - positives))
}

/// ROC over unique score thresholds; trapezoidal area.
pub fn roc_auc(scores: &DMatrix<f64>, truth: &BTreeSet<(usize, usize)>) -> Result<Curve> {
    let (steps, pos, neg) = sweep(scores, truth)?;
    let mut points = vec![(0.0, 0.0, f64::INFINITY)];
    let mut area = 0.0;
    for (t, tp, fp) in steps {
        let (x, y) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        let &(x0, y0, _) = points.last().expect("starts non-empty");
        area += (x - x0) * (y + y0) / 2.0;
        points.push((x, y, t));
    }
    Ok(Curve { points, area })
}

/// Precision-recall over unique score thresholds; the area steps in recall
/// at the precision reached on the new threshold.
pub fn aupr(scores: &DMatrix<f64>, truth: &BTreeSet<(usize, usize)>) -> Result<Curve> {
    let (steps, pos, _) = sweep(scores, truth)?;
    let mut points = vec![(0.0, 1.0, f64::INFINITY)];
    let mut area = 0.0;
    let mut last_recall = 0.0;
    for (t, tp, fp) in steps {
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - last_recall) * precision;
        last_recall = recall;
        points.push((recall, precision, t));
    }
    Ok(Curve { points, area })
}

/// Paired two-sided t-test on `a − b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub mean_difference: f64,
    pub t: f64,
    pub p_value: f64,
}

pub fn paired_model_comparison(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(ModnetError::InvalidArgument(format!(
            "paired test needs two equal-length lists of at least 2 (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    if d.iter().all(|&x| x == 0.0) {
        return Ok(PairedTest {
            mean_difference: 0.0,
            t: 0.0,
            p_value: 1.0,
        });
    }
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(ModnetError::DegenerateTest(
            "paired differences are constant and non-zero".into(),
        ));
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| ModnetError::Numerical(e.to_string()))?;
    let p_value = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(PairedTest {
        mean_difference: mean,
        t,
        p_value,
    })
}

/// Mean and standard deviation of the AUC over `replicates` resamples of
/// `size` (candidate, node) pairs drawn with replacement. Resamples that
/// miss either class are redrawn.
pub fn bootstrap_auc<R: Rng + ?Sized>(
    scores: &DMatrix<f64>,
    truth: &BTreeSet<(usize, usize)>,
    size: usize,
    replicates: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    roc_auc(scores, truth)?;
    if size < 2 || replicates < 2 {
        return Err(ModnetError::InvalidArgument("bootstrap needs size >= 2 and replicates >= 2".into()));
    }
    let rows = scores.nrows();
    let mut aucs = Vec::with_capacity(replicates);
    while aucs.len() < replicates {
        let picks: Vec<usize> = (0..size).map(|_| rng.random_range(0..scores.len())).collect();
        let sub = DMatrix::from_fn(1, size, |_, j| scores[picks[j]]);
        let sub_truth: BTreeSet<(usize, usize)> = picks
            .iter()
            .enumerate()
            .filter(|(_, &p)| truth.contains(&(p % rows, p / rows)))
            .map(|(j, _)| (0, j))
            .collect();
        if let Ok(curve) = roc_auc(&sub, &sub_truth) {
            aucs.push(curve.area);
        }
    }
    let m = aucs.len() as f64;
    let mean = aucs.iter().sum::<f64>() / m;
    let sd = (aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (m - 1.0)).sqrt();
    Ok((mean, sd))
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index of two labellings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(ModnetError::InvalidArgument("labellings must be non-empty and equally long".into()));
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(a.len() as u64);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        // Both labellings trivial (all one block or all singletons).
        return Ok(if index == expected { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Everything `evaluate` reports for one trace against a gold standard.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub link_probability: DMatrix<f64>,
    pub roc: Curve,
    pub pr: Curve,
    pub auc: f64,
    pub aupr: f64,
    pub mode: ModeAssignment,
    pub precision: f64,
    pub recall: f64,
}

pub fn evaluate(trace: &ChainTrace, truth: &BTreeSet<(usize, usize)>) -> Result<EvalReport> {
    let link_probability = link_posterior(trace)?;
    let roc = roc_auc(&link_probability, truth)?;
    let pr = aupr(&link_probability, truth)?;
    let mode = posterior_mode_assignment(trace)?;
    let (precision, recall) = precision_recall_at_mode(trace, truth)?;
    Ok(EvalReport {
        auc: roc.area,
        aupr: pr.area,
        link_probability,
        roc,
        pr,
        mode,
        precision,
        recall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Sample;
    use crate::model::{ModelParameters, ModularStructure};

    fn sample(assignment: Vec<usize>, parents: Vec<Vec<usize>>) -> Sample {
        let k = parents.len();
        let mut params = ModelParameters::empty(k, DMatrix::zeros(2, 1), 0.05);
        for (m, pa) in parents.iter().enumerate() {
            for &r in pa {
                params.links[m].insert(
                    r,
                    crate::model::LinkParams {
                        gamma_lo: 0.0,
                        gamma_hi: 0.0,
                        split: 0.0,
                        pi: 0.5,
                    },
                );
            }
        }
        Sample {
            iteration: 1,
            log_post: 0.0,
            structure: ModularStructure::new(assignment, parents).unwrap(),
            params,
        }
    }

    fn trace_of(samples: Vec<Sample>) -> ChainTrace {
        let mut t = ChainTrace::new(1);
        for (i, mut s) in samples.into_iter().enumerate() {
            s.iteration = i as u64 + 1;
            t.push(s);
        }
        t
    }

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    fn set(v: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
        v.iter().copied().collect()
    }

    #[test]
    fn link_posterior_counts() {
        let a = sample(vec![0, 0, 1, 1], vec![vec![0], vec![]]);
        let b = sample(vec![0, 0, 1, 1], vec![vec![0, 1], vec![]]);
        let p = link_posterior(&trace_of(vec![a.clone()])).unwrap();
        assert_eq!(p, m(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let p = link_posterior(&trace_of(vec![a, b])).unwrap();
        assert_eq!(p[(1, 0)], 0.5);
        assert_eq!(p[(0, 1)], 1.0);
        assert!(link_posterior(&ChainTrace::new(1)).is_err());
    }

    #[test]
    fn roc_basics() {
        let truth = set(&[(0, 0), (0, 2)]);
        let perfect = m(1, 4, &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(roc_auc(&perfect, &truth).unwrap().area, 1.0);
        assert_eq!(roc_auc(&m(1, 4, &[0.3; 4]), &truth).unwrap().area, 0.5);
        assert!(roc_auc(&perfect, &BTreeSet::new()).is_err());
        assert!(roc_auc(&perfect, &set(&[(0, 0), (0, 1), (0, 2), (0, 3)])).is_err());
    }

    /// Fraction of (positive, negative) pairs ordered correctly, ties ½.
    fn concordance(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    num += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn roc_matches_concordance() {
        let scores = [0.9, 0.4, 0.4, 0.1];
        let labels = [true, false, true, false];
        let truth = set(&[(0, 0), (0, 2)]);
        let auc = roc_auc(&m(1, 4, &scores), &truth).unwrap().area;
        assert!((auc - concordance(&scores, &labels)).abs() < 1e-12);
        assert!((auc - 0.875).abs() < 1e-12);
    }

    #[test]
    fn aupr_hand_instance() {
        let truth = set(&[(0, 0), (0, 2)]);
        assert_eq!(aupr(&m(1, 4, &[1.0, 0.0, 1.0, 0.0]), &truth).unwrap().area, 1.0);
        assert_eq!(aupr(&m(1, 4, &[0.2; 4]), &truth).unwrap().area, 0.5);
        // Scores 0.9+ 0.8- 0.7+ 0.6- 0.5+: recall steps 1/3 at precisions 1, 2/3, 3/5.
        let truth = set(&[(0, 0), (0, 2), (0, 4)]);
        let area = aupr(&m(1, 5, &[0.9, 0.8, 0.7, 0.6, 0.5]), &truth).unwrap().area;
        assert!((area - (1.0 + 2.0 / 3.0 + 0.6) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn areas_ignore_tie_order() {
        let truth = set(&[(0, 1), (1, 0), (1, 2)]);
        let a = m(2, 3, &[0.5, 0.5, 0.1, 0.5, 0.2, 0.5]);
        let b = m(2, 3, &[0.5, 0.5, 0.1, 0.5, 0.2, 0.5]).transpose().transpose();
        assert_eq!(roc_auc(&a, &truth).unwrap(), roc_auc(&b, &truth).unwrap());
        assert_eq!(aupr(&a, &truth).unwrap(), aupr(&b, &truth).unwrap());
    }

    #[test]
    fn mode_of_permuted_copies() {
        let base = vec![0, 0, 1, 1, 2, 2];
        let perm = [2, 0, 1];
        let permuted: Vec<usize> = base.iter().map(|&l| perm[l]).collect();
        let t = trace_of(vec![
            sample(base.clone(), vec![vec![]; 3]),
            sample(permuted.clone(), vec![vec![]; 3]),
            sample(permuted, vec![vec![]; 3]),
        ]);
        let mode = posterior_mode_assignment(&t).unwrap();
        assert_eq!(mode.k, 3);
        assert_eq!(adjusted_rand_index(&mode.assignment, &base).unwrap(), 1.0);
    }

    #[test]
    fn modal_k_and_assignment() {
        let t = trace_of(vec![
            sample(vec![0, 0, 1, 1], vec![vec![], vec![]]),
            sample(vec![0, 0, 0, 0], vec![vec![]]),
            sample(vec![1, 1, 0, 0], vec![vec![], vec![]]),
        ]);
        let mode = posterior_mode_assignment(&t).unwrap();
        assert_eq!(mode.k, 2);
        assert_eq!(mode.assignment, vec![0, 0, 1, 1]);
    }

    #[test]
    fn precision_recall_hand_count() {
        // 6 nodes, 2 candidates; mode: module {0,1,2} with parent 0, module {3,4,5} with parent 1.
        let s = sample(vec![0, 0, 0, 1, 1, 1], vec![vec![0], vec![1]]);
        let t = trace_of(vec![s.clone(), s]);
        let predicted = modal_links(&t).unwrap();
        assert_eq!(predicted.len(), 6);
        let truth = set(&[(0, 0), (0, 1), (1, 3), (1, 0)]);
        let (p, r) = precision_recall_at_mode(&t, &truth).unwrap();
        assert!((p - 3.0 / 6.0).abs() < 1e-12);
        assert!((r - 3.0 / 4.0).abs() < 1e-12);
        let (p, r) = precision_recall_at_mode(&t, &predicted).unwrap();
        assert_eq!((p, r), (1.0, 1.0));
        let (p, r) = precision_recall_at_mode(&t, &set(&[(1, 0), (0, 5)])).unwrap();
        assert_eq!((p, r), (0.0, 0.0));
    }

    #[test]
    fn paired_t() {
        let same = [0.7, 0.8, 0.9];
        let r = paired_model_comparison(&same, &same).unwrap();
        assert_eq!((r.t, r.p_value), (0.0, 1.0));

        let a: Vec<f64> = (0..20).map(|i| 0.8 + 0.1 + 1e-3 * ((i * 7 % 5) as f64 - 2.0)).collect();
        let b: Vec<f64> = (0..20).map(|_| 0.8).collect();
        assert!(paired_model_comparison(&a, &b).unwrap().p_value < 1e-3);

        // d = (1, 2, 4): mean 7/3, sd sqrt(7/3), t = mean / (sd / sqrt 3).
        let r = paired_model_comparison(&[2.0, 3.0, 5.0], &[1.0, 1.0, 1.0]).unwrap();
        let t = (7.0 / 3.0) / ((7.0f64 / 3.0).sqrt() / 3f64.sqrt());
        assert!((r.t - t).abs() < 1e-12);
        // Two-sided p for t = sqrt 7 on 2 df: 1 - t / sqrt(2 + t²).
        let p = 1.0 - t / (2.0 + t * t).sqrt();
        assert!((r.p_value - p).abs() < 1e-8);

        assert!(paired_model_comparison(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(paired_model_comparison(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn rand_index() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!((ari - 0.24242424242424243).abs() < 1e-12, "{ari}");
    }

    #[test]
    fn bootstrap_of_perfect_scores() {
        let truth = set(&[(0, 0), (0, 2)]);
        let mut rng = crate::rng::seeded(1);
        let (mean, sd) = bootstrap_auc(&m(1, 4, &[1.0, 0.0, 1.0, 0.0]), &truth, 50, 20, &mut rng).unwrap();
        assert_eq!((mean, sd), (1.0, 0.0));
    }
}
