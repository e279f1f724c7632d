use rand::RngCore;

use crate::compute::{Scalar, Tape, Tensor, Var};
use crate::error::{dim_err, Error, Result};
use crate::vib::{self, BottleneckMode, KLRecord};

use super::model::{BlockIds, ModelVars};
use super::{ViTConfig, ViTModel};

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Splits a `[channels, H, W]` image into `N` row-major patches, each the
/// flattened `channels x patch x patch` sub-block.
pub fn patchify<T: Scalar>(image: &Tensor<T>, config: &ViTConfig) -> Result<Tensor<T>> {
    config.validate()?;
    let (c, s, p) = (config.channels, config.image_size, config.patch_size);
    if image.shape() != [c, s, s] {
        return Err(dim_err!("expected image of shape [{c}, {s}, {s}], got {:?}", image.shape()));
    }
    let g = s / p;
    let src = image.data();
    let mut out = Vec::with_capacity(src.len());
    for gy in 0..g {
        for gx in 0..g {
            for ch in 0..c {
                for y in 0..p {
                    let row = (ch * s + gy * p + y) * s + gx * p;
                    out.extend_from_slice(&src[row..row + p]);
                }
            }
        }
    }
    Tensor::new(vec![g * g, config.patch_dim()], out)
}

/// Inverse of [`patchify`].
pub fn unpatchify<T: Scalar>(patches: &Tensor<T>, config: &ViTConfig) -> Result<Tensor<T>> {
    let (c, s, p) = (config.channels, config.image_size, config.patch_size);
    let g = s / p;
    if patches.shape() != [g * g, config.patch_dim()] {
        return Err(dim_err!("unexpected patch tensor shape {:?}", patches.shape()));
    }
    let mut out = vec![T::zero(); c * s * s];
    let src = patches.data();
    let mut i = 0;
    for gy in 0..g {
        for gx in 0..g {
            for ch in 0..c {
                for y in 0..p {
                    let row = (ch * s + gy * p + y) * s + gx * p;
                    out[row..row + p].copy_from_slice(&src[i..i + p]);
                    i += p;
                }
            }
        }
    }
    Tensor::new(vec![c, s, s], out)
}

/// Tape handles for one head's intermediate values.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub layer: usize,
    pub head: usize,
    /// `[N, N]`, row `i` is patch `i`'s attention distribution.
    pub attention: Var,
    /// Value aggregation before the output projection, `[N, head_dim]`.
    pub delta: Var,
    pub delta_hat: Var,
    pub mu: Option<Var>,
    pub log_sigma: Option<Var>,
    /// Per-element KL `[N, latent_dim]`.
    pub kl: Option<Var>,
}

/// Everything a forward pass leaves on the tape.
#[derive(Clone, Debug)]
pub struct ForwardGraph {
    pub logits: Var,
    pub per_patch_logits: Var,
    /// Final-norm output, `[N, d]`.
    pub final_stream: Var,
    /// Layer-major.
    pub heads: Vec<HeadVars>,
    /// Sum of KL over layers, heads and patches.
    pub kl_total: Option<Var>,
}

/// `[rows, cols]` matrix per (layer, head).
#[derive(Clone, Debug, PartialEq)]
pub struct HeadMatrix {
    pub layer: usize,
    pub head: usize,
    pub value: Tensor<f64>,
}

/// Values recorded by one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub logits: Vec<f64>,
    /// `[N, classes]`: classifier weights applied to each patch (no bias).
    pub per_patch_logits: Tensor<f64>,
    pub final_stream: Tensor<f64>,
    /// Ordered by layer, head, patch.
    pub kl_records: Vec<KLRecord>,
    /// Layer-major `[N, N]` maps.
    pub attention_maps: Vec<HeadMatrix>,
    /// Layer-major `[N, latent_dim]` posterior means; empty when disabled.
    pub head_latent_means: Vec<HeadMatrix>,
}

impl ForwardTrace {
    pub fn total_kl(&self) -> f64 {
        self.kl_records.iter().map(|r| r.kl_nats).sum()
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.logits)
    }

    pub fn attention(&self, layer: usize, head: usize) -> Option<&Tensor<f64>> {
        self.attention_maps
            .iter()
            .find(|m| m.layer == layer && m.head == head)
            .map(|m| &m.value)
    }

    pub fn latent_means(&self, layer: usize, head: usize) -> Option<&Tensor<f64>> {
        self.head_latent_means
            .iter()
            .find(|m| m.layer == layer && m.head == head)
            .map(|m| &m.value)
    }

    /// Sum of KL over patches for every head, layer-major.
    pub fn head_kl_totals(&self, heads_per_block: usize, depth: usize) -> Vec<f64> {
        let mut out = vec![0.0; depth * heads_per_block];
        for r in &self.kl_records {
            out[r.layer * heads_per_block + r.head] += r.kl_nats;
        }
        out
    }
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> ViTModel<T> {
    /// Linear projection of each patch plus its positional embedding.
    pub fn embed(&self, tape: &mut Tape<T>, vars: &ModelVars, patches: Var) -> Result<Var> {
        let l = self.layout();
        let x = tape.matmul(patches, vars[l.patch_w])?;
        let x = tape.add_row(x, vars[l.patch_b])?;
        tape.add(x, vars[l.pos])
    }

    /// Scaled dot-product attention of one head over an already normalised
    /// stream. Returns the value aggregation `[N, head_dim]` (before the
    /// output projection) and the attention map `[N, N]`.
    pub fn attention_head_update(
        &self,
        tape: &mut Tape<T>,
        vars: &ModelVars,
        normed: Var,
        layer: usize,
        head: usize,
    ) -> Result<(Var, Var)> {
        let ids = self
            .layout()
            .blocks
            .get(layer)
            .and_then(|b| b.heads.get(head))
            .ok_or_else(|| Error::Usage(format!("no head ({layer}, {head})")))?;
        let proj = |tape: &mut Tape<T>, w, b| -> Result<Var> {
            let y = tape.matmul(normed, vars[w])?;
            tape.add_row(y, vars[b])
        };
        let q = proj(tape, ids.q_w, ids.q_b)?;
        let k = proj(tape, ids.k_w, ids.k_b)?;
        let v = proj(tape, ids.v_w, ids.v_b)?;
        let scores = tape.matmul_bt(q, k)?;
        let scale = T::one() / T::from_usize(self.config().head_dim()).unwrap().sqrt();
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax(scores, 1)?;
        let delta = tape.matmul(attn, v)?;
        Ok((delta, attn))
    }

    /// Pre-norm two-layer GELU MLP added residually; acts on each patch
    /// independently.
    pub fn mlp_block(&self, tape: &mut Tape<T>, vars: &ModelVars, stream: Var, layer: usize) -> Result<Var> {
        let b: &BlockIds = self
            .layout()
            .blocks
            .get(layer)
            .ok_or_else(|| Error::Usage(format!("no block {layer}")))?;
        let h = tape.layer_norm(stream, vars[b.ln2_g], vars[b.ln2_b], LAYER_NORM_EPS)?;
        let h = tape.matmul(h, vars[b.fc1_w])?;
        let h = tape.add_row(h, vars[b.fc1_b])?;
        let h = tape.gelu(h);
        let h = tape.matmul(h, vars[b.fc2_w])?;
        let h = tape.add_row(h, vars[b.fc2_b])?;
        tape.add(stream, h)
    }

    /// Per-patch classifier contributions `[N, classes]` and pooled logits
    /// (their mean plus the classifier bias).
    pub fn gap_classify(&self, tape: &mut Tape<T>, vars: &ModelVars, normed: Var) -> Result<(Var, Var)> {
        let l = self.layout();
        let per_patch = tape.matmul(normed, vars[l.head_w])?;
        let pooled = tape.mean_rows(per_patch)?;
        let logits = tape.add(pooled, vars[l.head_b])?;
        Ok((logits, per_patch))
    }

    /// Full pass from an image `[channels, H, W]`.
    pub fn forward_graph(
        &self,
        tape: &mut Tape<T>,
        vars: &ModelVars,
        image: &Tensor<T>,
        mode: BottleneckMode,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<ForwardGraph> {
        if mode == BottleneckMode::Stochastic && rng.is_none() {
            return Err(Error::Usage("stochastic mode requires an rng".into()));
        }
        let patches = patchify(image, self.config())?;
        let patches = tape.constant(patches);
        let mut x = self.embed(tape, vars, patches)?;
        let mut heads = Vec::with_capacity(self.config().total_heads());
        let mut kl_total: Option<Var> = None;

        for (layer, block) in self.layout().blocks.iter().enumerate() {
            let normed = tape.layer_norm(x, vars[block.ln1_g], vars[block.ln1_b], LAYER_NORM_EPS)?;
            let mut written = Vec::with_capacity(block.heads.len());
            for (head, ids) in block.heads.iter().enumerate() {
                let (delta, attention) = self.attention_head_update(tape, vars, normed, layer, head)?;
                let ch = vars.channel(&ids.channel);
                let out = vib::apply_on_tape(tape, delta, &ch, mode, rng.as_mut().map(|r| &mut **r as &mut dyn RngCore))?;
                if let Some(kl) = out.kl {
                    let s = tape.sum(kl);
                    kl_total = Some(match kl_total {
                        Some(acc) => tape.add(acc, s)?,
                        None => s,
                    });
                }
                written.push(out.delta_hat);
                heads.push(HeadVars {
                    layer,
                    head,
                    attention,
                    delta,
                    delta_hat: out.delta_hat,
                    mu: out.mu,
                    log_sigma: out.log_sigma,
                    kl: out.kl,
                });
            }
            let cat = tape.concat_cols(&written)?;
            let update = tape.matmul(cat, vars[block.out_w])?;
            let update = tape.add_row(update, vars[block.out_b])?;
            x = tape.add(x, update)?;
            x = self.mlp_block(tape, vars, x, layer)?;
        }

        let l = self.layout();
        let final_stream = tape.layer_norm(x, vars[l.norm_g], vars[l.norm_b], LAYER_NORM_EPS)?;
        let (logits, per_patch_logits) = self.gap_classify(tape, vars, final_stream)?;
        Ok(ForwardGraph {
            logits,
            per_patch_logits,
            final_stream,
            heads,
            kl_total,
        })
    }

    /// Runs a forward pass and copies out every recorded quantity.
    pub fn forward(&self, image: &Tensor<T>, mode: BottleneckMode, rng: Option<&mut dyn RngCore>) -> Result<ForwardTrace> {
        let mut tape = Tape::new();
        let vars = self.load(&mut tape, false);
        let graph = self.forward_graph(&mut tape, &vars, image, mode, rng)?;
        Ok(self.trace(&tape, &graph))
    }

    /// Reads a [`ForwardTrace`] off a tape.
    pub fn trace(&self, tape: &Tape<T>, graph: &ForwardGraph) -> ForwardTrace {
        let cast = |v: Var| tape.value(v).cast::<f64>();
        let n = self.config().num_patches();
        let latent = self.config().latent_dim;
        let mut kl_records = Vec::with_capacity(graph.heads.len() * n);
        let mut attention_maps = Vec::with_capacity(graph.heads.len());
        let mut head_latent_means = Vec::new();
        for h in &graph.heads {
            attention_maps.push(HeadMatrix {
                layer: h.layer,
                head: h.head,
                value: cast(h.attention),
            });
            if let Some(mu) = h.mu {
                head_latent_means.push(HeadMatrix {
                    layer: h.layer,
                    head: h.head,
                    value: cast(mu),
                });
            }
            let kl = h.kl.map(cast);
            for patch in 0..n {
                let per_dim_kl = match &kl {
                    Some(t) => t.row(patch).to_vec(),
                    None => vec![0.0; latent],
                };
                kl_records.push(KLRecord {
                    layer: h.layer,
                    head: h.head,
                    patch,
                    kl_nats: per_dim_kl.iter().sum(),
                    per_dim_kl,
                });
            }
        }
        ForwardTrace {
            logits: cast(graph.logits).into_data(),
            per_patch_logits: cast(graph.per_patch_logits),
            final_stream: cast(graph.final_stream),
            kl_records,
            attention_maps,
            head_latent_means,
        }
    }
}
