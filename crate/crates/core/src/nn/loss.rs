use super::Tensor;
use crate::{Error, Result};

/// Per-row `-log softmax(logits)[target]`, computed with log-sum-exp.
pub fn crossentropy_rows(logits: &Tensor, targets: &[usize]) -> Result<Vec<f64>> {
    logits.expect_rank(2, "logits")?;
    let (b, k) = (logits.dim(0), logits.dim(1));
    if targets.len() != b {
        return Err(Error::Shape(format!(
            "{} targets for {b} rows",
            targets.len()
        )));
    }
    logits
        .data()
        .chunks_exact(k)
        .zip(targets)
        .map(|(row, &t)| {
            if t >= k {
                return Err(Error::Index(format!("target class {t} outside 0..{k}")));
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            Ok(lse - row[t])
        })
        .collect()
}

/// Mean sparse categorical crossentropy over the batch and its gradient
/// with respect to the logits, `(softmax - onehot) / B`.
pub fn softmax_crossentropy(logits: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    let losses = crossentropy_rows(logits, targets)?;
    let (b, k) = (logits.dim(0), logits.dim(1));
    let loss = losses.iter().sum::<f64>() / b as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("crossentropy loss is {loss}")));
    }
    let mut grad = super::dense::softmax_rows(logits).into_data();
    for (row, &t) in grad.chunks_exact_mut(k).zip(targets) {
        row[t] -= 1.0;
        row.iter_mut().for_each(|v| *v /= b as f64);
    }
    Ok((loss, Tensor::from_vec(&[b, k], grad)?))
}
