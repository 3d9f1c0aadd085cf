use rand::Rng;

use crate::error::{Error, Result};

/// Numerically stable softmax of `logits / temperature`.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

pub(crate) fn softmax_nll_probs(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {} classes",
            logits.len()
        )));
    }
    let loss = -log_softmax(logits)[target];
    Ok((loss, softmax(logits, 1.0)))
}

/// Negative log-likelihood of `target` under `softmax(logits)` and its
/// gradient with respect to the logits, `softmax(logits) - onehot(target)`.
pub fn softmax_nll(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    let (loss, mut grad) = softmax_nll_probs(logits, target)?;
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1 / (1 - p)`.
pub fn dropout_mask(n: usize, p: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("dropout probability must be in [0, 1), got {p}")));
    }
    let keep = 1.0 / (1.0 - p);
    Ok((0..n)
        .map(|_| if p > 0.0 && rng.random::<f64>() < p { 0.0 } else { keep })
        .collect())
}

pub fn dropout(x: &[f64], p: f64, rng: &mut impl Rng, training: bool) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("dropout probability must be in [0, 1), got {p}")));
    }
    if !training || p == 0.0 {
        return Ok(x.to_vec());
    }
    let mask = dropout_mask(x.len(), p, rng)?;
    Ok(x.iter().zip(&mask).map(|(a, m)| a * m).collect())
}
