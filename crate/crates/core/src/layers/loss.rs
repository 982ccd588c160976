//! Softmax cross-entropy over a `1x1xN` score volume.

use crate::error::{Error, Result};
use crate::volume::Volume;

/// Returns `(-log softmax(scores)[label], softmax(scores) - onehot(label))`.
/// The softmax subtracts the maximum score first, so arbitrary score
/// magnitudes stay numerically safe.
pub fn softmax_cross_entropy(scores: &Volume, label: usize) -> Result<(f64, Volume)> {
    let (h, w, n) = scores.shape();
    if h != 1 || w != 1 {
        return Err(Error::Shape(format!(
            "scores must be 1x1xN, got {:?}",
            scores.shape()
        )));
    }
    if label >= n {
        return Err(Error::Label { label, classes: n });
    }
    let data = scores.data();
    let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = data.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (data[label] - max);
    let grad: Vec<f64> = exps
        .iter()
        .enumerate()
        .map(|(i, &e)| e / sum - if i == label { 1.0 } else { 0.0 })
        .collect();
    Ok((loss, Volume::from_vec(1, 1, n, grad)?))
}
