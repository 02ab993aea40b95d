//! Softmax cross-entropy and top-k accuracy.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean cross-entropy over the batch plus the per-sample last-layer error
/// `softmax(logits) - onehot(label)` (batch averaging happens later, in the
/// gradient step).
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[u32],
) -> Result<(f64, Tensor<S>)> {
    let (batch, classes) = logits.dims2("softmax_cross_entropy")?;
    if batch != labels.len() {
        return Err(Error::Data(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    let mut e_last = Tensor::zeros(&[batch, classes]);
    let mut total = 0.0f64;
    for b in 0..batch {
        let label = labels[b] as usize;
        if label >= classes {
            return Err(Error::Data(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = &logits.data()[b * classes..(b + 1) * classes];
        let max = row
            .iter()
            .fold(S::neg_infinity(), |m, &v| if v > m { v } else { m });
        let mut denom = S::zero();
        for &v in row {
            denom += (v - max).exp();
        }
        let out_row = &mut e_last.data_mut()[b * classes..(b + 1) * classes];
        for (j, o) in out_row.iter_mut().enumerate() {
            *o = (row[j] - max).exp() / denom;
        }
        // -ln softmax[label], in the numerically stable form.
        total += denom.as_f64().ln() + max.as_f64() - row[label].as_f64();
        out_row[label] = out_row[label] - S::one();
    }
    e_last.ensure_finite("softmax_cross_entropy")?;
    Ok((total / batch as f64, e_last))
}

/// Counts samples whose true label ranks within the `k` largest logits; ties
/// break toward the lower class index.
pub fn topk_hits<S: Scalar>(logits: &Tensor<S>, labels: &[u32], k: usize) -> Result<usize> {
    let (batch, classes) = logits.dims2("topk_hits")?;
    if batch != labels.len() {
        return Err(Error::Data(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    let mut hits = 0;
    for b in 0..batch {
        let label = labels[b] as usize;
        if label >= classes {
            return Err(Error::Data(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = &logits.data()[b * classes..(b + 1) * classes];
        let target = row[label];
        let mut rank = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > target || (v == target && j < label) {
                rank += 1;
            }
        }
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits)
}
