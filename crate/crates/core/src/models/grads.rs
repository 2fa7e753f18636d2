//! Parameter gradients shared by every strategy.

use super::MultiHeadModel;
use crate::linalg::matrix::{DenseMatrix, DenseVector};

/// Gradient of one head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub weight: DenseMatrix,
    pub bias: DenseVector,
}

/// Loss gradient with respect to every parameter block of a model.
///
/// The backbone gradient is kept as a list of outer products `Σ uᵢ vᵢᵀ` so
/// sparse inputs stay cheap; heads that received no gradient are `None`;
/// embedding gradients are sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub backbone: Vec<(Vec<f64>, Vec<f64>)>,
    pub heads: Vec<Option<HeadGrad>>,
    pub embeddings: Vec<Vec<(usize, Vec<f64>)>>,
}

impl Gradients {
    pub(crate) fn empty(model: &MultiHeadModel) -> Self {
        Gradients {
            backbone: Vec::new(),
            heads: vec![None; model.heads.len()],
            embeddings: vec![Vec::new(); model.embeddings.len()],
        }
    }

    /// Adds `g fᵀ` to the weight gradient of head `h` and `g` to its bias.
    pub(crate) fn add_head(&mut self, h: usize, g: &[f64], f: &[f64]) {
        let slot = self.heads[h].get_or_insert_with(|| HeadGrad {
            weight: DenseMatrix::zeros(g.len(), f.len()),
            bias: DenseVector::zeros(g.len()),
        });
        for (r, &gr) in g.iter().enumerate() {
            for (w, fv) in slot.weight.row_mut(r).iter_mut().zip(f) {
                *w += gr * fv;
            }
            slot.bias[r] += gr;
        }
    }

    /// Dense backbone gradient (for tests and diagnostics).
    pub fn backbone_dense(&self, rows: usize, cols: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rows, cols);
        for (u, v) in &self.backbone {
            for (i, &ui) in u.iter().enumerate() {
                for (o, vj) in out.row_mut(i).iter_mut().zip(v) {
                    *o += ui * vj;
                }
            }
        }
        out
    }

    /// Dense gradient of embedding table `h` with `rows × cols` shape.
    pub fn embedding_dense(&self, h: usize, rows: usize, cols: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rows, cols);
        for (r, g) in &self.embeddings[h] {
            for (o, v) in out.row_mut(*r).iter_mut().zip(g) {
                *o += v;
            }
        }
        out
    }
}

impl MultiHeadModel {
    /// Plain SGD update `θ -= lr · ∇θ`.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (u, v) in &grads.backbone {
            self.backbone.sgd(u, v, lr);
        }
        for (head, g) in self.heads.iter_mut().zip(&grads.heads) {
            if let Some(g) = g {
                for (w, gw) in head.weight.as_mut_slice().iter_mut().zip(g.weight.as_slice()) {
                    *w -= lr * gw;
                }
                for (b, gb) in head.bias.as_mut_slice().iter_mut().zip(g.bias.as_slice()) {
                    *b -= lr * gb;
                }
            }
        }
        for (table, rows) in self.embeddings.iter_mut().zip(&grads.embeddings) {
            for (r, g) in rows {
                for (e, gv) in table.row_mut(*r).iter_mut().zip(g) {
                    *e -= lr * gv;
                }
            }
        }
    }
}
