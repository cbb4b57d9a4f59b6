//! Evaluation metrics: closed-form probit test error, support Jaccard
//! consistency, the information-theoretic identifiability bound, and
//! posterior-probability support estimation.

use crate::error::{GampError, Result};
use crate::numeric::normal_cdf;

/// Expected test-error probability Φ(-w_trueᵀŵ / √(v·‖ŵ‖²)) of the linear
/// classifier sgn(ŵᵀx) under the noisy-score model with noise variance v.
pub fn closed_form_error(w_true: &[f64], w_hat: &[f64], v: f64) -> Result<f64> {
    if v <= 0.0 {
        return Err(GampError::Domain("v must be > 0".into()));
    }
    if w_true.len() != w_hat.len() {
        return Err(GampError::Domain("dimension mismatch".into()));
    }
    let norm2: f64 = w_hat.iter().map(|w| w * w).sum();
    if norm2 == 0.0 {
        return Err(GampError::Domain(
            "degenerate classifier: w_hat is the zero vector".into(),
        ));
    }
    let inner: f64 = w_true.iter().zip(w_hat).map(|(a, b)| a * b).sum();
    Ok(normal_cdf(-inner / (v * norm2).sqrt()))
}

/// Mean Jaccard index over ordered pairs of supports. Two empty sets count
/// as identical (index 1).
pub fn jaccard_consistency(supports: &[Vec<usize>]) -> Result<f64> {
    if supports.len() < 2 {
        return Err(GampError::Domain("need at least 2 supports".into()));
    }
    let sets: Vec<std::collections::BTreeSet<usize>> = supports
        .iter()
        .map(|s| s.iter().copied().collect())
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in 0..sets.len() {
            if i == j {
                continue;
            }
            let inter = sets[i].intersection(&sets[j]).count();
            let union = sets[i].union(&sets[j]).count();
            total += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Largest K (scanning up from 1, stopping at the first violation) such that
/// M >= K·log2(N/K). This is the small-K crossing of the bound; for large K
/// near N the left side shrinks again, which is not the regime of interest.
pub fn max_identifiable_k(n: usize, m: usize) -> usize {
    assert!(n >= 1 && m >= 1);
    let mut best = 0;
    for k in 1..=n {
        let bits = k as f64 * (n as f64 / k as f64).log2();
        if m as f64 >= bits {
            best = k;
        } else {
            break;
        }
    }
    best
}

/// Indices (0-based) whose posterior nonzero probability strictly exceeds
/// the threshold.
pub fn estimated_support(probs: &[f64], threshold: f64) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(i, _)| i)
        .collect()
}
