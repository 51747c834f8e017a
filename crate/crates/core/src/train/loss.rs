//! Numerically stable losses on raw scores.

use crate::error::{Error, Result};

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of one score, `-[y log σ(s) + (1-y) log(1-σ(s))]`.
#[inline]
pub fn binary_ce_term(score: f64, label: f64) -> f64 {
    softplus(score) - label * score
}

/// Summed binary cross-entropy with `p = σ(s)`.
pub fn loss_binary_ce(scores: &[f64], labels: &[f64]) -> Result<f64> {
    crate::error::check_len("labels", scores.len(), labels.len())?;
    Ok(scores.iter().zip(labels).map(|(&s, &y)| binary_ce_term(s, y)).sum())
}

/// `log Σ_e exp(s_e)`.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(scores.iter().map(|s| libm::exp(s - max)).sum::<f64>())
}

/// Mean over the true entities of `-log softmax(scores)[t]`.
pub fn loss_softmax_1n(scores: &[f64], true_set: &[u32]) -> Result<f64> {
    if true_set.is_empty() {
        return Err(Error::EmptyTrueSet);
    }
    let lse = log_sum_exp(scores);
    let mut total = 0.0;
    for &t in true_set {
        let s = scores.get(t as usize).ok_or(Error::IdOutOfRange {
            kind: "entity",
            id: t as usize,
            len: scores.len(),
        })?;
        total += lse - s;
    }
    Ok(total / true_set.len() as f64)
}
