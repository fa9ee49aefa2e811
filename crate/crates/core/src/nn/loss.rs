//! Batch-mean losses computed in log space, each returning its gradient
//! with respect to the logits.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-softmax of the true class, and `(softmax - onehot) / n`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, k) = logits.shape();
    if labels.len() != n {
        return Err(Error::dims(format!("{} labels for {n} logit rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, k);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total += log_z - row[y];
        let g = grad.row_mut(i);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() * inv_n;
        }
        g[y] -= inv_n;
    }
    Ok((total * inv_n, grad))
}

/// Gradients of [`discriminator_bce`].
#[derive(Clone, Debug, PartialEq)]
pub struct BceGrad {
    pub src: Vec<f64>,
    pub tgt: Vec<f64>,
}

/// `-mean log D(src) - mean log(1 - D(tgt))` with `D = sigmoid(logit)`:
/// source samples carry label 1, target samples label 0.
pub fn discriminator_bce(src_logits: &[f64], tgt_logits: &[f64]) -> Result<(f64, BceGrad)> {
    if src_logits.is_empty() || tgt_logits.is_empty() {
        return Err(Error::InvalidArgument(
            "discriminator loss needs samples from both domains".into(),
        ));
    }
    let ns = src_logits.len() as f64;
    let nt = tgt_logits.len() as f64;
    let src_loss = src_logits.iter().map(|&x| softplus(-x)).sum::<f64>() / ns;
    let tgt_loss = tgt_logits.iter().map(|&x| softplus(x)).sum::<f64>() / nt;
    let grad = BceGrad {
        src: src_logits.iter().map(|&x| (sigmoid(x) - 1.0) / ns).collect(),
        tgt: tgt_logits.iter().map(|&x| sigmoid(x) / nt).collect(),
    };
    Ok((src_loss + tgt_loss, grad))
}

/// Inverted-label mapping loss `-mean log D(tgt)`.
pub fn mapping_bce(tgt_logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    if tgt_logits.is_empty() {
        return Err(Error::InvalidArgument("mapping loss needs target samples".into()));
    }
    let n = tgt_logits.len() as f64;
    let loss = tgt_logits.iter().map(|&x| softplus(-x)).sum::<f64>() / n;
    let grad = tgt_logits.iter().map(|&x| (sigmoid(x) - 1.0) / n).collect();
    Ok((loss, grad))
}

/// Fraction of rows whose arg-max equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| {
            let row = logits.row(i);
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            best == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// Fraction of domain decisions (`logit ≥ 0` means source) that are right.
pub fn domain_accuracy(src_logits: &[f64], tgt_logits: &[f64]) -> f64 {
    let hits = src_logits.iter().filter(|&&x| x >= 0.0).count()
        + tgt_logits.iter().filter(|&&x| x < 0.0).count();
    hits as f64 / (src_logits.len() + tgt_logits.len()).max(1) as f64
}
