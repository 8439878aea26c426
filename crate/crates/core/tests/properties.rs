use std::collections::BTreeSet;

use modnet::diagnostics::{ChainTrace, Sample};
use modnet::eval::{aupr, link_posterior, roc_auc};
use modnet::{ModelParameters, ModularStructure};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn trace_of(len: u64) -> ChainTrace {
    let mut t = ChainTrace::new(1);
    for i in 1..=len {
        t.push(Sample {
            iteration: i,
            log_post: i as f64,
            structure: ModularStructure::single_module(4),
            params: ModelParameters::empty(1, DMatrix::zeros(1, 1), 0.05),
        });
    }
    t
}

/// Scores on a coarse grid so ties are common, and a truth set with at
/// least one positive and one negative.
fn scored() -> impl Strategy<Value = (DMatrix<f64>, BTreeSet<(usize, usize)>)> {
    (2usize..5, 2usize..8).prop_flat_map(|(r, n)| {
        (
            proptest::collection::vec(0u8..5, r * n),
            proptest::collection::vec(any::<bool>(), r * n),
        )
            .prop_filter("needs both classes", |(_, t)| t.iter().any(|&x| x) && t.iter().any(|&x| !x))
            .prop_map(move |(s, t)| {
                let scores = DMatrix::from_fn(r, n, |i, j| f64::from(s[i * n + j]) / 4.0);
                let truth = (0..r).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| t[i * n + j]).collect();
                (scores, truth)
            })
    })
}

proptest! {
    #[test]
    fn burn_in_composes(len in 2u64..60, a in 0u64..30, b in 0u64..30) {
        prop_assume!(a + b < len);
        let once = trace_of(len).drop_burn_in(a + b).unwrap();
        let twice = trace_of(len).drop_burn_in(a).unwrap().drop_burn_in(b).unwrap();
        prop_assert_eq!(once.samples.len() as u64, len - a - b);
        prop_assert_eq!(once.samples, twice.samples);
    }

    #[test]
    fn auc_is_the_mann_whitney_statistic((scores, truth) in scored()) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for r in 0..scores.nrows() {
            for n in 0..scores.ncols() {
                if truth.contains(&(r, n)) { pos.push(scores[(r, n)]) } else { neg.push(scores[(r, n)]) }
            }
        }
        let wins: f64 = pos.iter().flat_map(|p| neg.iter().map(move |q| {
            if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 }
        })).sum();
        let u = wins / (pos.len() * neg.len()) as f64;
        let auc = roc_auc(&scores, &truth).unwrap().area;
        prop_assert!((auc - u).abs() < 1e-12, "auc {} vs U {}", auc, u);
    }

    #[test]
    fn curves_ignore_monotone_rescaling((scores, truth) in scored()) {
        let squashed = scores.map(|x| (3.0 * x).tanh() + 7.0);
        prop_assert_eq!(roc_auc(&scores, &truth).unwrap().area, roc_auc(&squashed, &truth).unwrap().area);
        let (a, b) = (aupr(&scores, &truth).unwrap(), aupr(&squashed, &truth).unwrap());
        prop_assert!((a.area - b.area).abs() < 1e-12);
        prop_assert!(a.area > 0.0 && a.area <= 1.0);
    }

    #[test]
    fn link_probabilities_are_frequencies(sets in proptest::collection::vec((0usize..4, 0usize..4), 1..30)) {
        // Two modules over six nodes; module k gets parent set `sets[i].k`
        // encoded as a bitmask over two candidates.
        let mut t = ChainTrace::new(1);
        for (i, &(m0, m1)) in sets.iter().enumerate() {
            let bits = |m: usize| (0..2).filter(|b| m >> b & 1 == 1).collect::<Vec<usize>>();
            let s = ModularStructure::new(vec![0, 0, 0, 1, 1, 1], vec![bits(m0), bits(m1)]).unwrap();
            t.push(Sample {
                iteration: i as u64 + 1,
                log_post: 0.0,
                structure: s,
                params: ModelParameters::empty(2, DMatrix::zeros(2, 1), 0.05),
            });
        }
        let p = link_posterior(&t).unwrap();
        prop_assert_eq!((p.nrows(), p.ncols()), (2, 6));
        for r in 0..2 {
            for n in 0..6 {
                let hits = sets.iter().filter(|&&(m0, m1)| (if n < 3 { m0 } else { m1 }) >> r & 1 == 1).count();
                prop_assert!((0.0..=1.0).contains(&p[(r, n)]));
                prop_assert!((p[(r, n)] - hits as f64 / sets.len() as f64).abs() < 1e-12);
            }
        }
    }
}
