use crate::error::{Error, Result};
use crate::vib::KLRecord;

/// One example's objective split into its parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub ce: f64,
    /// Unweighted KL summed over layers, heads and patches.
    pub kl: f64,
}

/// Cross-entropy with a numerically stable log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Usage(format!("label {label} out of range for {} classes", logits.len())));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

/// `CE(logits, label) + beta * sum(kl_nats)` for one example.
pub fn vib_loss(logits: &[f64], label: usize, kl_records: &[KLRecord], beta: f64) -> Result<LossParts> {
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("beta must be >= 0, got {beta}")));
    }
    let ce = cross_entropy(logits, label)?;
    let kl: f64 = kl_records.iter().map(|r| r.kl_nats).sum();
    let total = if beta == 0.0 { ce } else { ce + beta * kl };
    Ok(LossParts { total, ce, kl })
}

/// Batch reduction: the mean of per-example parts.
pub fn batch_mean(parts: &[LossParts]) -> Result<LossParts> {
    if parts.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let n = parts.len() as f64;
    Ok(LossParts {
        total: parts.iter().map(|p| p.total).sum::<f64>() / n,
        ce: parts.iter().map(|p| p.ce).sum::<f64>() / n,
        kl: parts.iter().map(|p| p.kl).sum::<f64>() / n,
    })
}
