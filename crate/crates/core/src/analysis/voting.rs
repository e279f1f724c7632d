use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compute::Tensor;
use crate::error::{Error, Result};
use crate::vit::{argmax, ForwardTrace};

/// Effective number of classes `1 / sum_c p_c^2` among per-patch votes.
pub fn inverse_simpson(votes: &[usize], num_classes: usize) -> Result<f64> {
    if votes.is_empty() {
        return Err(Error::Usage("inverse Simpson index of zero votes".into()));
    }
    let mut counts = vec![0usize; num_classes];
    for &v in votes {
        if v >= num_classes {
            return Err(Error::Usage(format!("vote {v} outside {num_classes} classes")));
        }
        counts[v] += 1;
    }
    let n = votes.len() as f64;
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64 / n).powi(2)).sum();
    Ok(1.0 / sum_sq)
}

/// Largest minus smallest entry of the patch x class contribution matrix.
pub fn logit_range(per_patch_logits: &Tensor<f64>) -> f64 {
    let d = per_patch_logits.data();
    if d.is_empty() {
        return 0.0;
    }
    let max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Usage(format!("{name} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(Error::Usage(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Jensen-Shannon distance in nats: the square root of the divergence.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Usage(format!("length mismatch {} vs {}", p.len(), q.len())));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let mut div = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            div += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            div += 0.5 * b * (b / m).ln();
        }
    }
    Ok(div.max(0.0).sqrt())
}

/// Numerically stable softmax of a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Per-image summary of how patches vote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteStats {
    pub image_id: usize,
    pub label: Option<usize>,
    pub predicted: usize,
    pub effective_classes: f64,
    pub logit_range: f64,
    /// Fraction of patches whose top class is the most common vote.
    pub top_class_agreement: f64,
    /// Fraction of patches voting for the pooled prediction.
    pub prediction_agreement: f64,
}

pub fn patch_votes(per_patch_logits: &Tensor<f64>) -> Vec<usize> {
    (0..per_patch_logits.rows()).map(|i| argmax(per_patch_logits.row(i))).collect()
}

pub fn vote_stats(trace: &ForwardTrace, image_id: usize, label: Option<usize>) -> Result<VoteStats> {
    let classes = trace.logits.len();
    let votes = patch_votes(&trace.per_patch_logits);
    let mut counts = vec![0usize; classes];
    for &v in &votes {
        counts[v] += 1;
    }
    let top = counts.iter().max().copied().unwrap_or(0);
    let predicted = trace.predicted_class();
    let n = votes.len().max(1) as f64;
    Ok(VoteStats {
        image_id,
        label,
        predicted,
        effective_classes: inverse_simpson(&votes, classes)?,
        logit_range: logit_range(&trace.per_patch_logits),
        top_class_agreement: top as f64 / n,
        prediction_agreement: counts[predicted] as f64 / n,
    })
}

/// Images ranked by the distance between two models' predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsdSelection {
    /// Per-image distance, in dataset order.
    pub distances: Vec<f64>,
    /// Indices of the top fraction, largest distance first, ties by index.
    pub top: Vec<usize>,
    /// Uniform draw without replacement from `top`.
    pub sampled: Vec<usize>,
}

/// Ranks images by the JS distance between `probs_a[i]` and `probs_b[i]`,
/// keeps the top `fraction` (at least one image) and samples `count` of
/// them uniformly.
pub fn jsd_select<R: Rng + ?Sized>(
    probs_a: &[Vec<f64>],
    probs_b: &[Vec<f64>],
    fraction: f64,
    count: usize,
    rng: &mut R,
) -> Result<JsdSelection> {
    if probs_a.len() != probs_b.len() || probs_a.is_empty() {
        return Err(Error::Usage("need equally many, and at least one, prediction pairs".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Usage(format!("fraction {fraction} outside (0, 1]")));
    }
    let distances = probs_a.iter().zip(probs_b).map(|(p, q)| jsd(p, q)).collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[b].total_cmp(&distances[a]).then(a.cmp(&b)));
    let k = ((fraction * distances.len() as f64).round() as usize).clamp(1, distances.len());
    let top = order[..k].to_vec();
    let sampled = sample(rng, k, count.min(k)).into_iter().map(|i| top[i]).collect();
    Ok(JsdSelection { distances, top, sampled })
}
