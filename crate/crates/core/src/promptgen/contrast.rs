//! Contrastive next-token distributions and candidate scoring.

use crate::backends::{TokenId, TokenLogits};
use crate::error::{Error, Result};

/// Per-step combined logits `l_orig + alpha * (l_orig - l_contrast)`,
/// which equals `(1 + alpha) * l_orig - alpha * l_contrast` and is exact
/// when `alpha == 0` or the two inputs coincide.
pub fn combined_logits(original: &TokenLogits, contrast: &TokenLogits, alpha: f64) -> Result<Vec<Vec<f64>>> {
    if original.vocab_size() != contrast.vocab_size() || original.steps() != contrast.steps() {
        return Err(Error::InvalidInput(format!(
            "logit shapes differ: {}x{} vs {}x{}",
            original.steps(),
            original.vocab_size(),
            contrast.steps(),
            contrast.vocab_size()
        )));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidInput(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(original
        .per_step()
        .iter()
        .zip(contrast.per_step())
        .map(|(o, c)| o.iter().zip(c).map(|(lo, lc)| lo + alpha * (lo - lc)).collect())
        .collect())
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|v| v - log_sum).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Contrastive probability vectors, one per answer step.
pub fn contrastive_distribution(original: &TokenLogits, contrast: &TokenLogits, alpha: f64) -> Result<Vec<Vec<f64>>> {
    Ok(combined_logits(original, contrast, alpha)?
        .iter()
        .map(|row| softmax(row))
        .collect())
}

/// Length-normalized log-probability of `tokens` under the contrastive
/// distribution.
pub fn sequence_score(original: &TokenLogits, contrast: &TokenLogits, alpha: f64, tokens: &[TokenId]) -> Result<f64> {
    if tokens.len() != original.steps() || tokens.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} tokens for {} logit steps",
            tokens.len(),
            original.steps()
        )));
    }
    let combined = combined_logits(original, contrast, alpha)?;
    let total: f64 = combined
        .iter()
        .zip(tokens)
        .map(|(row, t)| log_softmax(row)[*t as usize])
        .sum();
    Ok(total / tokens.len() as f64)
}
