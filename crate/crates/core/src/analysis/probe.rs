use rand::seq::index::sample;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::kl::KlAccumulator;
use super::mi::GaussianChannel;
use crate::compute::{Scalar, Tape, Tensor};
use crate::error::{Error, Result};
use crate::training::{keyed_rng, RngDomain};
use crate::vib::BottleneckMode;
use crate::vit::{patchify, unpatchify, ForwardTrace, HeadMatrix, ViTConfig, ViTModel};

/// A forward trace plus every head's posterior standard deviations.
#[derive(Clone, Debug)]
pub struct PosteriorTrace {
    pub trace: ForwardTrace,
    /// Layer-major `[N, latent_dim]`.
    pub sigmas: Vec<HeadMatrix>,
}

impl PosteriorTrace {
    pub fn head_index(&self, config: &ViTConfig, layer: usize, head: usize) -> Result<usize> {
        if layer >= config.depth || head >= config.heads_per_block {
            return Err(Error::Usage(format!("no head ({layer}, {head})")));
        }
        Ok(layer * config.heads_per_block + head)
    }
}

pub fn forward_with_posteriors<T: Scalar>(
    model: &ViTModel<T>,
    image: &Tensor<T>,
    mode: BottleneckMode,
    rng: Option<&mut dyn RngCore>,
) -> Result<PosteriorTrace> {
    if mode == BottleneckMode::Disabled {
        return Err(Error::Usage("posteriors are undefined with disabled bottlenecks".into()));
    }
    let mut tape = Tape::new();
    let vars = model.load(&mut tape, false);
    let graph = model.forward_graph(&mut tape, &vars, image, mode, rng)?;
    let sigmas = graph
        .heads
        .iter()
        .map(|h| HeadMatrix {
            layer: h.layer,
            head: h.head,
            value: tape.value(h.log_sigma.expect("bottleneck enabled")).cast::<f64>().map(f64::exp),
        })
        .collect();
    Ok(PosteriorTrace {
        trace: model.trace(&tape, &graph),
        sigmas,
    })
}

/// Posterior parameters of one head over `(image, patch)` items, taken
/// from mean-mode passes. `patches` restricts the patch positions used.
pub fn head_channel<T: Scalar>(
    model: &ViTModel<T>,
    images: &[Tensor<T>],
    layer: usize,
    head: usize,
    patches: Option<&[usize]>,
) -> Result<GaussianChannel> {
    let c = model.config();
    let all: Vec<usize> = (0..c.num_patches()).collect();
    let patches = patches.unwrap_or(&all);
    let (mut mu, mut sigma) = (Vec::new(), Vec::new());
    for image in images {
        let pt = forward_with_posteriors(model, image, BottleneckMode::Mean, None)?;
        let idx = pt.head_index(c, layer, head)?;
        let m = &pt.trace.head_latent_means[idx].value;
        let s = &pt.sigmas[idx].value;
        for &p in patches {
            if p >= c.num_patches() {
                return Err(Error::Usage(format!("patch {p} outside {} patches", c.num_patches())));
            }
            mu.push(m.row(p).to_vec());
            sigma.push(s.row(p).to_vec());
        }
    }
    GaussianChannel::new(mu, sigma)
}

/// Copies patch `source` over `n` distinct other patch positions drawn
/// uniformly without replacement. Returns the image and the targets.
pub fn copy_paste_augment<T: Scalar, R: Rng + ?Sized>(
    image: &Tensor<T>,
    config: &ViTConfig,
    source: usize,
    n: usize,
    rng: &mut R,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let np = config.num_patches();
    if source >= np {
        return Err(Error::Usage(format!("source patch {source} outside {np} patches")));
    }
    if n > np - 1 {
        return Err(Error::Usage(format!("cannot copy to {n} locations; only {} other patches", np - 1)));
    }
    let mut patches = patchify(image, config)?;
    let targets: Vec<usize> = sample(rng, np - 1, n)
        .into_iter()
        .map(|i| if i >= source { i + 1 } else { i })
        .collect();
    let pd = config.patch_dim();
    let src = patches.row(source).to_vec();
    for &t in &targets {
        patches.data_mut()[t * pd..(t + 1) * pd].copy_from_slice(&src);
    }
    Ok((unpatchify(&patches, config)?, targets))
}

/// Number of patch positions whose pixels equal patch `source`, itself
/// included.
pub fn count_identical_patches<T: Scalar>(image: &Tensor<T>, config: &ViTConfig, source: usize) -> Result<usize> {
    let p = patchify(image, config)?;
    let src = p.row(source);
    Ok((0..p.rows()).filter(|&i| p.row(i) == src).count())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub image: usize,
    pub patch: usize,
    /// Base latent mean on the active dimensions.
    pub mu0: Vec<f64>,
    /// `[n_values][active dims]` displacement of the latent mean at the
    /// source patch after copy-paste.
    pub displacement: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub layer: usize,
    pub head: usize,
    pub active_dims: Vec<usize>,
    pub n_values: Vec<usize>,
    pub samples: Vec<ProbeSample>,
}

/// Mean-mode repetition probe of one head: for sampled `(image, patch)`
/// pairs, the head's latent mean at the patch before and after copying the
/// patch to `N` other positions, on the head's active dimensions.
pub fn repetition_probe<T: Scalar>(
    model: &ViTModel<T>,
    layer: usize,
    head: usize,
    images: &[Tensor<T>],
    n_values: &[usize],
    samples: usize,
    dim_threshold: f64,
    seed: u64,
) -> Result<ProbeResult> {
    let c = model.config().clone();
    if images.is_empty() {
        return Err(Error::Usage("repetition probe needs at least one image".into()));
    }
    let mut acc = KlAccumulator::new(c.depth, c.heads_per_block, false);
    let mut base = Vec::with_capacity(images.len());
    for image in images {
        let t = model.forward(image, BottleneckMode::Mean, None)?;
        acc.add_trace(&t)?;
        base.push(t);
    }
    let idx = layer * c.heads_per_block + head;
    let activity = acc.activity(dim_threshold);
    let head_act = activity
        .get(idx)
        .filter(|_| layer < c.depth && head < c.heads_per_block)
        .ok_or_else(|| Error::Usage(format!("no head ({layer}, {head})")))?;
    let active_dims = head_act.active_dims(dim_threshold);
    if active_dims.is_empty() {
        return Err(Error::Usage(format!("head ({layer}, {head}) has no active latent dimension")));
    }

    let np = c.num_patches();
    let total = images.len() * np;
    let mut pick = keyed_rng(seed, RngDomain::Analysis, 0, 0);
    let chosen = sample(&mut pick, total, samples.min(total));
    let mut out = Vec::with_capacity(chosen.len());
    for (s, item) in chosen.into_iter().enumerate() {
        let (img, patch) = (item / np, item % np);
        let mu = &base[img].head_latent_means[idx].value;
        let mu0: Vec<f64> = active_dims.iter().map(|&d| mu.row(patch)[d]).collect();
        let mut displacement = Vec::with_capacity(n_values.len());
        for (k, &n) in n_values.iter().enumerate() {
            let mut rng = keyed_rng(seed, RngDomain::Analysis, 1 + s as u64, k as u64);
            let (aug, _) = copy_paste_augment(&images[img], &c, patch, n, &mut rng)?;
            let t = model.forward(&aug, BottleneckMode::Mean, None)?;
            let m = &t.head_latent_means[idx].value;
            displacement.push(active_dims.iter().zip(&mu0).map(|(&d, m0)| m.row(patch)[d] - m0).collect());
        }
        out.push(ProbeSample { image: img, patch, mu0, displacement });
    }
    Ok(ProbeResult {
        layer,
        head,
        active_dims,
        n_values: n_values.to_vec(),
        samples: out,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopPatch {
    pub image: usize,
    pub patch: usize,
    pub kl: f64,
    /// Latent mean on the dominant dimension.
    pub latent_mean: f64,
    /// The patch's attention distribution in this head.
    pub attention_row: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopPatches {
    pub layer: usize,
    pub head: usize,
    pub dominant_dim: usize,
    /// Total ranked records and how many were kept.
    pub ranked: usize,
    pub kept: usize,
    /// Latent mean >= 0 on the dominant dimension.
    pub positive: Vec<TopPatch>,
    pub negative: Vec<TopPatch>,
}

/// Number of records in the top `fraction` (at least one).
pub fn top_count(total: usize, fraction: f64) -> usize {
    ((fraction * total as f64).round() as usize).clamp(1, total.max(1))
}

/// Indices of the `k` largest values, ties broken by position.
pub fn top_k_stable(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Ranks every `(image, patch)` by this head's KL, keeps the top
/// `fraction`, and splits the kept patches by the sign of the dominant
/// active dimension's latent mean.
pub fn top_activating_patches<T: Scalar>(
    model: &ViTModel<T>,
    layer: usize,
    head: usize,
    images: &[Tensor<T>],
    fraction: f64,
    dim_threshold: f64,
) -> Result<TopPatches> {
    let c = model.config();
    if layer >= c.depth || head >= c.heads_per_block {
        return Err(Error::Usage(format!("no head ({layer}, {head})")));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Usage(format!("fraction {fraction} outside (0, 1]")));
    }
    let idx = layer * c.heads_per_block + head;
    let np = c.num_patches();
    let mut acc = KlAccumulator::new(c.depth, c.heads_per_block, false);
    let mut kl = Vec::with_capacity(images.len() * np);
    for image in images {
        let t = model.forward(image, BottleneckMode::Mean, None)?;
        for r in &t.kl_records {
            if r.layer == layer && r.head == head {
                acc.add(r)?;
                kl.push(r.kl_nats);
            }
        }
    }
    let dominant_dim = acc.activity(dim_threshold)[idx]
        .dominant_dim(dim_threshold)
        .ok_or_else(|| Error::Usage(format!("head ({layer}, {head}) has no active latent dimension")))?;
    let k = top_count(kl.len(), fraction);
    let mut top = top_k_stable(&kl, k);
    let rank: Vec<usize> = top.clone();
    top.sort_unstable();
    let mut found = std::collections::HashMap::new();
    let mut cur: Option<(usize, ForwardTrace)> = None;
    for &item in &top {
        let (img, patch) = (item / np, item % np);
        if cur.as_ref().map(|(i, _)| *i) != Some(img) {
            cur = Some((img, model.forward(&images[img], BottleneckMode::Mean, None)?));
        }
        let t = &cur.as_ref().unwrap().1;
        found.insert(
            item,
            TopPatch {
                image: img,
                patch,
                kl: kl[item],
                latent_mean: t.head_latent_means[idx].value.row(patch)[dominant_dim],
                attention_row: t.attention_maps[idx].value.row(patch).to_vec(),
            },
        );
    }
    let (mut positive, mut negative) = (Vec::new(), Vec::new());
    for item in rank {
        let p = found.remove(&item).expect("selected patch");
        if p.latent_mean >= 0.0 {
            positive.push(p);
        } else {
            negative.push(p);
        }
    }
    Ok(TopPatches {
        layer,
        head,
        dominant_dim,
        ranked: kl.len(),
        kept: k,
        positive,
        negative,
    })
}
