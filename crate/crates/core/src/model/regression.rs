//! The regression matrix `W` and the Gaussian it induces: `X = W X + ε`
//! gives precision `(I - W)ᵀ (I - W)`.
//!
//! `W` has non-zero columns only at nodes that are in-use parents, so with
//! `P` the set of those nodes, `W = W[:, P] E_Pᵀ` has rank at most `|P| ≤ R`.
//! The matrix determinant lemma and the Woodbury identity then give
//!
//! ```text
//! det(I - W)  = det(I - W[P, P])
//! (I - W)^-1  = I + W[:, P] (I - W[P, P])^-1 E_Pᵀ
//! ```
//!
//! so the likelihood never touches an N × N matrix.

use nalgebra::DMatrix;

use super::{Dataset, ModelParameters, ModularStructure};
use crate::error::{ModnetError, Result};

/// Structured view of `I - W` for one (structure, weights) state.
#[derive(Debug, Clone)]
pub struct RegressionOperator {
    assignment: Vec<usize>,
    weights: Vec<f64>,
    module_sizes: Vec<usize>,
    parent_nodes: Vec<usize>,
    module_parent_pos: Vec<Vec<usize>>,
    inv_pp: DMatrix<f64>,
    log_abs_det: f64,
    condition: f64,
}

impl RegressionOperator {
    pub fn new(
        structure: &ModularStructure,
        weights: &[f64],
        dataset: &Dataset,
        cond_threshold: f64,
    ) -> Result<Self> {
        let k = structure.n_modules();
        debug_assert_eq!(weights.len(), k);
        let r_total = dataset.n_candidates();
        let in_use = structure.candidates_in_use(r_total);
        let mut pos_of = vec![usize::MAX; r_total];
        let mut parent_nodes = Vec::new();
        for (r, &used) in in_use.iter().enumerate() {
            if used {
                pos_of[r] = parent_nodes.len();
                parent_nodes.push(dataset.candidates()[r]);
            }
        }
        let module_parent_pos: Vec<Vec<usize>> = (0..k)
            .map(|m| structure.parents(m).iter().map(|&r| pos_of[r]).collect())
            .collect();

        let p = parent_nodes.len();
        let mut a = DMatrix::<f64>::identity(p, p);
        for (i, &node) in parent_nodes.iter().enumerate() {
            let m = structure.module_of(node);
            for &j in &module_parent_pos[m] {
                a[(i, j)] -= weights[m];
            }
        }
        let (inv_pp, det) = if p == 0 {
            (a, 1.0)
        } else {
            let lu = a.lu();
            let det = lu.determinant();
            if det == 0.0 || !det.is_finite() {
                return Err(ModnetError::Singular {
                    condition: f64::INFINITY,
                });
            }
            let inv = lu.try_inverse().ok_or(ModnetError::Singular {
                condition: f64::INFINITY,
            })?;
            (inv, det)
        };

        let mut op = RegressionOperator {
            assignment: structure.assignment().to_vec(),
            weights: weights.to_vec(),
            module_sizes: structure.module_sizes(),
            parent_nodes,
            module_parent_pos,
            inv_pp,
            log_abs_det: det.abs().ln(),
            condition: 0.0,
        };
        op.condition = op.compute_condition();
        if !(op.condition < cond_threshold) {
            return Err(ModnetError::Singular {
                condition: op.condition,
            });
        }
        Ok(op)
    }

    /// 1-norm condition number of `I - W`.
    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// `log|Σ| = -2 log|det(I - W)|`.
    pub fn log_det_sigma(&self) -> f64 {
        -2.0 * self.log_abs_det
    }

    fn compute_condition(&self) -> f64 {
        let k = self.weights.len();
        let p = self.parent_nodes.len();
        // Columns outside P are unit vectors in both I - W and its inverse.
        let mut norm_a: f64 = 1.0;
        let mut norm_inv: f64 = 1.0;
        let mut hits = vec![false; k];
        let mut col_mass = vec![0.0; k];
        for j in 0..p {
            let node_j = self.parent_nodes[j];
            let own = self.assignment[node_j];
            for (m, pos) in self.module_parent_pos.iter().enumerate() {
                hits[m] = pos.contains(&j);
            }
            // Column j of I - W.
            let mut sum = 0.0;
            let mut diag = 1.0;
            for m in 0..k {
                if hits[m] {
                    let w = self.weights[m];
                    let count = self.module_sizes[m] - usize::from(m == own);
                    sum += w.abs() * count as f64;
                    if m == own {
                        diag -= w;
                    }
                }
            }
            norm_a = norm_a.max(sum + diag.abs());

            // Column j of (I - W)^-1 is e_j + W[:, P] M[:, j].
            for m in 0..k {
                col_mass[m] = self.module_parent_pos[m]
                    .iter()
                    .map(|&i| self.inv_pp[(i, j)])
                    .sum::<f64>()
                    * self.weights[m];
            }
            let mut inv_sum = 0.0;
            for m in 0..k {
                let y = col_mass[m];
                if m == own {
                    inv_sum += (self.module_sizes[m] - 1) as f64 * y.abs() + (1.0 + y).abs();
                } else {
                    inv_sum += self.module_sizes[m] as f64 * y.abs();
                }
            }
            norm_inv = norm_inv.max(inv_sum);
        }
        norm_a * norm_inv
    }

    /// `out = (I - W) d`.
    pub fn apply(&self, d: &[f64], out: &mut [f64]) {
        let sums = self.module_parent_sums(d);
        for (n, (o, &dn)) in out.iter_mut().zip(d).enumerate() {
            let m = self.assignment[n];
            *o = dn - self.weights[m] * sums[m];
        }
    }

    /// `‖(I - W) d‖²`, the quadratic form `dᵀ Σ^{-1} d`.
    pub fn quadratic_form(&self, d: &[f64]) -> f64 {
        let sums = self.module_parent_sums(d);
        d.iter()
            .zip(&self.assignment)
            .map(|(&dn, &m)| {
                let e = dn - self.weights[m] * sums[m];
                e * e
            })
            .sum()
    }

    /// Solves `(I - W) y = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.parent_nodes.len();
        let bp: Vec<f64> = self.parent_nodes.iter().map(|&n| b[n]).collect();
        let t: Vec<f64> = (0..p)
            .map(|i| (0..p).map(|j| self.inv_pp[(i, j)] * bp[j]).sum())
            .collect();
        let sums: Vec<f64> = self
            .module_parent_pos
            .iter()
            .map(|pos| pos.iter().map(|&i| t[i]).sum())
            .collect();
        b.iter()
            .zip(&self.assignment)
            .map(|(&bn, &m)| bn + self.weights[m] * sums[m])
            .collect()
    }

    fn module_parent_sums(&self, d: &[f64]) -> Vec<f64> {
        self.module_parent_pos
            .iter()
            .map(|pos| pos.iter().map(|&i| d[self.parent_nodes[i]]).sum())
            .collect()
    }
}

/// Dense `W` and its structural non-zero pattern.
///
/// `W[n][j] = w_k` when `n ∈ M_k` and `j` is the node of a parent of `k`.
pub fn build_regression_matrix(
    structure: &ModularStructure,
    params: &ModelParameters,
    dataset: &Dataset,
) -> Result<(DMatrix<f64>, Vec<(usize, usize)>)> {
    params.check_consistency(structure, dataset)?;
    let n = dataset.n_nodes();
    let mut w = DMatrix::zeros(n, n);
    let mut pattern = Vec::new();
    for node in 0..n {
        let m = structure.module_of(node);
        for &r in structure.parents(m) {
            let j = dataset.candidates()[r];
            w[(node, j)] = params.weights[m];
            pattern.push((node, j));
        }
    }
    Ok((w, pattern))
}

/// 1-norm condition number of a square matrix; infinite when singular.
pub fn dense_condition_number(a: &DMatrix<f64>) -> f64 {
    let norm1 = |m: &DMatrix<f64>| {
        m.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match a.clone().try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => norm1(a) * norm1(&inv),
        _ => f64::INFINITY,
    }
}

/// Precision `(I - W)ᵀ(I - W)` and `log|Σ| = -2 log|det(I - W)|`.
pub fn precision_from_w(w: &DMatrix<f64>, cond_threshold: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = w.nrows();
    let a = DMatrix::<f64>::identity(n, n) - w;
    let det = a.clone().lu().determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(ModnetError::Singular {
            condition: f64::INFINITY,
        });
    }
    let condition = dense_condition_number(&a);
    if !(condition < cond_threshold) {
        return Err(ModnetError::Singular { condition });
    }
    let precision = a.transpose() * &a;
    Ok((precision, -2.0 * det.abs().ln()))
}
