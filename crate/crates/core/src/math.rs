//! Shared numerical kernels: the pooled softmax over transformations and
//! the batched filter responses `w_jᵀ T_s v + b_{j,s}`.

use ndarray::{Array2, ArrayView2, Axis};

use crate::transform::TransformSet;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax over `logits` with an implicit extra "off" logit fixed at 0.
/// Writes the per-transformation probabilities into `out` and returns the
/// probability of the off state. The shift is the maximum of `{0, logits}`.
#[inline]
pub fn pooled_softmax(logits: &[f64], out: &mut [f64]) -> f64 {
    let m = logits.iter().fold(0.0f64, |a, &b| a.max(b));
    let off = (-m).exp();
    let mut denom = off;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        denom += *o;
    }
    for o in out.iter_mut() {
        *o /= denom;
    }
    off / denom
}

/// Transformed inputs of a batch: row `n * S + s` holds `T_s v_n`.
pub fn transformed_batch(transforms: &TransformSet, batch: ArrayView2<f64>) -> Array2<f64> {
    let (s, d2) = (transforms.len(), transforms.filter_dim());
    let n = batch.nrows();
    let mut out = Array2::zeros((n * s, d2));
    {
        let buf = out.as_slice_mut().expect("standard layout");
        let mut row = Vec::new();
        for (i, v) in batch.outer_iter().enumerate() {
            let v = match v.as_slice() {
                Some(v) => v,
                None => {
                    row.clear();
                    row.extend(v.iter().copied());
                    &row[..]
                }
            };
            transforms.apply_all_into(v, &mut buf[i * s * d2..(i + 1) * s * d2]);
        }
    }
    out
}

/// Pooled posteriors for a batch.
///
/// Returns `(probs, off)`: `probs` has row `n * S + s`, column `j` equal to
/// `P(h_{j,s} = 1 | v_n)`; `off[[n, j]]` is the probability that row `j`
/// of the hidden matrix is all-off.
pub fn pooled_posteriors(
    transformed: &Array2<f64>,
    weights: &Array2<f64>,
    hidden_bias: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let (k, s) = hidden_bias.dim();
    let n = transformed.nrows() / s;
    let mut logits = transformed.dot(weights);
    for (r, mut row) in logits.axis_iter_mut(Axis(0)).enumerate() {
        row += &hidden_bias.column(r % s);
    }
    let mut probs = Array2::zeros((n * s, k));
    let mut off = Array2::zeros((n, k));
    let mut lbuf = vec![0.0; s];
    let mut pbuf = vec![0.0; s];
    for i in 0..n {
        for j in 0..k {
            for t in 0..s {
                lbuf[t] = logits[[i * s + t, j]];
            }
            off[[i, j]] = pooled_softmax(&lbuf, &mut pbuf);
            for t in 0..s {
                probs[[i * s + t, j]] = pbuf[t];
            }
        }
    }
    (probs, off)
}

/// `Σ_s T_sᵀ coef[n*S + s]` for each batch row `n`, where `coef` is
/// `(N*S) x D2`. Result is `N x D1`.
pub fn adjoint_batch(transforms: &TransformSet, coef: &Array2<f64>) -> Array2<f64> {
    let s = transforms.len();
    let n = coef.nrows() / s;
    let d1 = transforms.input_dim();
    // products with transposed operands can come back column-major
    let coef = coef.as_standard_layout();
    let mut out = Array2::zeros((n, d1));
    for i in 0..n {
        let mut row = out.row_mut(i);
        let dst = row.as_slice_mut().expect("standard layout");
        for (t, tr) in transforms.iter().enumerate() {
            let src = coef.row(i * s + t);
            tr.adjoint_add_into(src.as_slice().expect("standard layout"), 1.0, dst);
        }
    }
    out
}
