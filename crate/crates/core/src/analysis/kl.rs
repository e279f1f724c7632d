use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vib::KLRecord;
use crate::vit::ForwardTrace;

/// Threshold in nats above which a head or latent dimension counts as active.
pub const ACTIVE_THRESHOLD: f64 = 1e-2;

/// Total KL per patch, summed over layers and heads, on the patch grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchKLMap {
    pub image_id: usize,
    pub side: usize,
    /// Row-major `side x side`.
    pub values: Vec<f64>,
}

impl PatchKLMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn patch_kl_map(trace: &ForwardTrace, image_id: usize) -> Result<PatchKLMap> {
    let n = trace.final_stream.rows();
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(Error::Usage(format!("{n} patches do not form a square grid")));
    }
    let mut values = vec![0.0; n];
    for r in &trace.kl_records {
        if r.patch >= n {
            return Err(Error::Usage(format!("record patch {} outside {n} patches", r.patch)));
        }
        values[r.patch] += r.kl_nats;
    }
    Ok(PatchKLMap { image_id, side, values })
}

/// Empirical `P(KL >= x)` over every per-patch KL value recorded for one
/// head, evaluated on `grid`.
pub fn kl_survival<'a>(
    records: impl IntoIterator<Item = &'a KLRecord>,
    layer: usize,
    head: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = records
        .into_iter()
        .filter(|r| r.layer == layer && r.head == head)
        .map(|r| r.kl_nats)
        .collect();
    survival_from_values(&mut values, grid)
        .map_err(|_| Error::Usage(format!("no KL records for head ({layer}, {head})")))
}

/// Survival curve of raw values; sorts `values` in place.
pub fn survival_from_values(values: &mut [f64], grid: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Usage("survival of an empty sample".into()));
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Ok(grid
        .iter()
        .map(|&x| {
            let below = values.partition_point(|&v| v < x);
            (values.len() - below) as f64 / n
        })
        .collect())
}

/// Dataset-level activity summary of one head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadActivity {
    pub layer: usize,
    pub head: usize,
    pub max_patch_kl: f64,
    pub mean_patch_kl: f64,
    pub active: bool,
    pub dim_mean_kl: Vec<f64>,
    pub dim_max_kl: Vec<f64>,
    pub records: usize,
}

impl HeadActivity {
    /// Latent dimensions whose largest per-patch contribution exceeds
    /// `threshold`.
    pub fn active_dims(&self, threshold: f64) -> Vec<usize> {
        (0..self.dim_max_kl.len()).filter(|&d| self.dim_max_kl[d] > threshold).collect()
    }

    /// The active dimension with the largest mean contribution.
    pub fn dominant_dim(&self, threshold: f64) -> Option<usize> {
        self.active_dims(threshold)
            .into_iter()
            .max_by(|&a, &b| self.dim_mean_kl[a].total_cmp(&self.dim_mean_kl[b]).then(b.cmp(&a)))
    }
}

/// Streaming per-head KL statistics.
#[derive(Clone, Debug)]
pub struct KlAccumulator {
    depth: usize,
    heads: usize,
    max: Vec<f64>,
    sum: Vec<f64>,
    count: Vec<usize>,
    dim_sum: Vec<Vec<f64>>,
    dim_max: Vec<Vec<f64>>,
    values: Option<Vec<Vec<f64>>>,
}

impl KlAccumulator {
    /// `keep_values` retains every per-patch value for survival curves.
    pub fn new(depth: usize, heads: usize, keep_values: bool) -> Self {
        let n = depth * heads;
        KlAccumulator {
            depth,
            heads,
            max: vec![0.0; n],
            sum: vec![0.0; n],
            count: vec![0; n],
            dim_sum: vec![Vec::new(); n],
            dim_max: vec![Vec::new(); n],
            values: keep_values.then(|| vec![Vec::new(); n]),
        }
    }

    pub fn add(&mut self, r: &KLRecord) -> Result<()> {
        if r.layer >= self.depth || r.head >= self.heads {
            return Err(Error::Usage(format!("record for unknown head ({}, {})", r.layer, r.head)));
        }
        let i = r.layer * self.heads + r.head;
        self.max[i] = self.max[i].max(r.kl_nats);
        self.sum[i] += r.kl_nats;
        self.count[i] += 1;
        if self.dim_sum[i].is_empty() {
            self.dim_sum[i] = vec![0.0; r.per_dim_kl.len()];
            self.dim_max[i] = vec![0.0; r.per_dim_kl.len()];
        }
        if r.per_dim_kl.len() != self.dim_sum[i].len() {
            return Err(Error::Usage("inconsistent latent dimensionality across records".into()));
        }
        for (d, &v) in r.per_dim_kl.iter().enumerate() {
            self.dim_sum[i][d] += v;
            self.dim_max[i][d] = self.dim_max[i][d].max(v);
        }
        if let Some(vals) = &mut self.values {
            vals[i].push(r.kl_nats);
        }
        Ok(())
    }

    pub fn add_trace(&mut self, t: &ForwardTrace) -> Result<()> {
        t.kl_records.iter().try_for_each(|r| self.add(r))
    }

    pub fn activity(&self, threshold: f64) -> Vec<HeadActivity> {
        (0..self.depth * self.heads)
            .map(|i| {
                let c = self.count[i].max(1) as f64;
                HeadActivity {
                    layer: i / self.heads,
                    head: i % self.heads,
                    max_patch_kl: self.max[i],
                    mean_patch_kl: self.sum[i] / c,
                    active: self.max[i] > threshold,
                    dim_mean_kl: self.dim_sum[i].iter().map(|s| s / c).collect(),
                    dim_max_kl: self.dim_max[i].clone(),
                    records: self.count[i],
                }
            })
            .collect()
    }

    /// Retained per-patch values of one head.
    pub fn values(&self, layer: usize, head: usize) -> Option<&[f64]> {
        self.values.as_ref().map(|v| v[layer * self.heads + head].as_slice())
    }
}

/// Activity of every head of a `depth x heads` model; a head is active when
/// any per-patch KL strictly exceeds `threshold`.
pub fn active_heads<'a>(
    records: impl IntoIterator<Item = &'a KLRecord>,
    depth: usize,
    heads: usize,
    threshold: f64,
) -> Result<Vec<HeadActivity>> {
    let mut acc = KlAccumulator::new(depth, heads, false);
    for r in records {
        acc.add(r)?;
    }
    Ok(acc.activity(threshold))
}

/// Latent dimensions of one head whose max per-patch KL contribution
/// exceeds `dim_threshold`.
pub fn active_latent_dims<'a>(
    records: impl IntoIterator<Item = &'a KLRecord>,
    layer: usize,
    head: usize,
    dim_threshold: f64,
) -> Result<Vec<usize>> {
    let mut max: Vec<f64> = Vec::new();
    for r in records.into_iter().filter(|r| r.layer == layer && r.head == head) {
        if r.per_dim_kl.is_empty() {
            return Err(Error::Usage("record without per-dimension KL".into()));
        }
        if max.is_empty() {
            max = vec![0.0; r.per_dim_kl.len()];
        } else if max.len() != r.per_dim_kl.len() {
            return Err(Error::Usage("inconsistent latent dimensionality across records".into()));
        }
        for (m, &v) in max.iter_mut().zip(&r.per_dim_kl) {
            *m = m.max(v);
        }
    }
    Ok((0..max.len()).filter(|&d| max[d] > dim_threshold).collect())
}
