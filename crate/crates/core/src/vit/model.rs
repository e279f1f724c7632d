use std::ops::Index;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::compute::{Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::vib::{BottleneckChannel, ChannelVars};

use super::ViTConfig;

/// Index of a parameter in a [`ViTModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named learnable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Exempt from decoupled weight decay.
    pub decay_exempt: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ChannelIds {
    pub enc_mu_w: ParamId,
    pub enc_mu_b: ParamId,
    pub enc_log_sigma_w: ParamId,
    pub enc_log_sigma_b: ParamId,
    pub dec_w: ParamId,
    pub dec_b: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadIds {
    pub q_w: ParamId,
    pub q_b: ParamId,
    pub k_w: ParamId,
    pub k_b: ParamId,
    pub v_w: ParamId,
    pub v_b: ParamId,
    pub channel: ChannelIds,
}

#[derive(Clone, Debug)]
pub struct BlockIds {
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub heads: Vec<HeadIds>,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
    pub fc1_w: ParamId,
    pub fc1_b: ParamId,
    pub fc2_w: ParamId,
    pub fc2_b: ParamId,
}

/// Where each parameter lives in the flat store.
#[derive(Clone, Debug)]
pub struct Layout {
    pub patch_w: ParamId,
    pub patch_b: ParamId,
    pub pos: ParamId,
    pub blocks: Vec<BlockIds>,
    pub norm_g: ParamId,
    pub norm_b: ParamId,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// Tape handles for every parameter of a model, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct ModelVars(Vec<Var>);

impl Index<ParamId> for ModelVars {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

impl ModelVars {
    pub fn as_slice(&self) -> &[Var] {
        &self.0
    }

    pub fn channel(&self, ids: &ChannelIds) -> ChannelVars {
        ChannelVars {
            enc_mu_w: self[ids.enc_mu_w],
            enc_mu_b: self[ids.enc_mu_b],
            enc_log_sigma_w: self[ids.enc_log_sigma_w],
            enc_log_sigma_b: self[ids.enc_log_sigma_b],
            dec_w: self[ids.dec_w],
            dec_b: self[ids.dec_b],
        }
    }
}

#[derive(Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    TruncNormal,
}

/// Weight decay policy: biases, rank-1 tensors and all bottleneck
/// parameters are exempt.
fn decay_exempt(name: &str, rank: usize) -> bool {
    rank <= 1 || name.ends_with(".bias") || name.contains(".vib.")
}

struct Builder<'r, T> {
    params: Vec<Param<T>>,
    rng: Option<&'r mut dyn RngCore>,
}

impl<T: Scalar> Builder<'_, T> {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> ParamId {
        let n: usize = shape.iter().product();
        let data = match (init, self.rng.as_deref_mut()) {
            (Init::Zeros, _) | (Init::TruncNormal, None) => vec![T::zero(); n],
            (Init::Ones, _) => vec![T::one(); n],
            (Init::TruncNormal, Some(rng)) => (0..n)
                .map(|_| T::from_f64_lossy(0.02 * trunc_normal(rng)))
                .collect(),
        };
        let decay_exempt = decay_exempt(&name, shape.len());
        self.params.push(Param {
            name,
            value: Tensor::new(shape, data).expect("param shape"),
            decay_exempt,
        });
        ParamId(self.params.len() - 1)
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> (ParamId, ParamId) {
        let w = self.add(format!("{prefix}.weight"), vec![fan_in, fan_out], Init::TruncNormal);
        let b = self.add(format!("{prefix}.bias"), vec![fan_out], Init::Zeros);
        (w, b)
    }

    fn norm(&mut self, prefix: &str, dim: usize) -> (ParamId, ParamId) {
        let g = self.add(format!("{prefix}.weight"), vec![dim], Init::Ones);
        let b = self.add(format!("{prefix}.bias"), vec![dim], Init::Zeros);
        (g, b)
    }
}

/// Standard normal truncated to `[-2, 2]` by resampling.
fn trunc_normal(rng: &mut dyn RngCore) -> f64 {
    loop {
        let v: f64 = rng.sample(StandardNormal);
        if v.abs() <= 2.0 {
            return v;
        }
    }
}

/// Parameters and configuration of the bottlenecked transformer.
#[derive(Clone, Debug)]
pub struct ViTModel<T> {
    config: ViTConfig,
    params: Vec<Param<T>>,
    layout: Layout,
}

impl<T: Scalar> ViTModel<T> {
    /// Truncated-normal (std 0.02) projections, zero biases, unit norm gains.
    pub fn new(config: ViTConfig, rng: &mut dyn RngCore) -> Result<Self> {
        Self::build(config, Some(rng))
    }

    /// Every weight and bias zero, norm gains one.
    pub fn zeros(config: ViTConfig) -> Result<Self> {
        Self::build(config, None)
    }

    fn build(config: ViTConfig, rng: Option<&mut dyn RngCore>) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let hd = config.head_dim();
        let lat = config.latent_dim;
        let mut b = Builder { params: Vec::new(), rng };

        let (patch_w, patch_b) = b.linear("patch_embed", config.patch_dim(), d);
        let pos = b.add("pos_embed".into(), vec![config.num_patches(), d], Init::TruncNormal);
        let mut blocks = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            let p = format!("blocks.{l}");
            let (ln1_g, ln1_b) = b.norm(&format!("{p}.norm1"), d);
            let mut heads = Vec::with_capacity(config.heads_per_block);
            for h in 0..config.heads_per_block {
                let hp = format!("{p}.attn.heads.{h}");
                let (q_w, q_b) = b.linear(&format!("{hp}.q"), d, hd);
                let (k_w, k_b) = b.linear(&format!("{hp}.k"), d, hd);
                let (v_w, v_b) = b.linear(&format!("{hp}.v"), d, hd);
                let (enc_mu_w, enc_mu_b) = b.linear(&format!("{hp}.vib.enc_mu"), hd, lat);
                let (enc_log_sigma_w, enc_log_sigma_b) = b.linear(&format!("{hp}.vib.enc_log_sigma"), hd, lat);
                let (dec_w, dec_b) = b.linear(&format!("{hp}.vib.dec"), lat, hd);
                heads.push(HeadIds {
                    q_w,
                    q_b,
                    k_w,
                    k_b,
                    v_w,
                    v_b,
                    channel: ChannelIds {
                        enc_mu_w,
                        enc_mu_b,
                        enc_log_sigma_w,
                        enc_log_sigma_b,
                        dec_w,
                        dec_b,
                    },
                });
            }
            let (out_w, out_b) = b.linear(&format!("{p}.attn.proj"), d, d);
            let (ln2_g, ln2_b) = b.norm(&format!("{p}.norm2"), d);
            let (fc1_w, fc1_b) = b.linear(&format!("{p}.mlp.fc1"), d, d * config.mlp_ratio);
            let (fc2_w, fc2_b) = b.linear(&format!("{p}.mlp.fc2"), d * config.mlp_ratio, d);
            blocks.push(BlockIds {
                ln1_g,
                ln1_b,
                heads,
                out_w,
                out_b,
                ln2_g,
                ln2_b,
                fc1_w,
                fc1_b,
                fc2_w,
                fc2_b,
            });
        }
        let (norm_g, norm_b) = b.norm("norm", d);
        let (head_w, head_b) = b.linear("head", d, config.num_classes);
        Ok(ViTModel {
            config,
            params: b.params,
            layout: Layout {
                patch_w,
                patch_b,
                pos,
                blocks,
                norm_g,
                norm_b,
                head_w,
                head_b,
            },
        })
    }

    pub fn config(&self) -> &ViTConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces a parameter's value; the shape must match.
    pub fn set_param(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let slot = &mut self.params[id.0];
        if slot.value.shape() != value.shape() {
            return Err(Error::Dimension(format!(
                "{}: expected shape {:?}, got {:?}",
                slot.name,
                slot.value.shape(),
                value.shape()
            )));
        }
        slot.value = value;
        Ok(())
    }

    fn head_ids(&self, layer: usize, head: usize) -> Result<&HeadIds> {
        self.layout
            .blocks
            .get(layer)
            .and_then(|b| b.heads.get(head))
            .ok_or_else(|| Error::Usage(format!("no head ({layer}, {head}) in this model")))
    }

    pub fn channel(&self, layer: usize, head: usize) -> Result<BottleneckChannel<T>> {
        let ids = self.head_ids(layer, head)?.channel;
        Ok(BottleneckChannel {
            enc_mu_w: self.param(ids.enc_mu_w).clone(),
            enc_mu_b: self.param(ids.enc_mu_b).clone(),
            enc_log_sigma_w: self.param(ids.enc_log_sigma_w).clone(),
            enc_log_sigma_b: self.param(ids.enc_log_sigma_b).clone(),
            dec_w: self.param(ids.dec_w).clone(),
            dec_b: self.param(ids.dec_b).clone(),
        })
    }

    pub fn set_channel(&mut self, layer: usize, head: usize, ch: BottleneckChannel<T>) -> Result<()> {
        let ids = self.head_ids(layer, head)?.channel;
        self.set_param(ids.enc_mu_w, ch.enc_mu_w)?;
        self.set_param(ids.enc_mu_b, ch.enc_mu_b)?;
        self.set_param(ids.enc_log_sigma_w, ch.enc_log_sigma_w)?;
        self.set_param(ids.enc_log_sigma_b, ch.enc_log_sigma_b)?;
        self.set_param(ids.dec_w, ch.dec_w)?;
        self.set_param(ids.dec_b, ch.dec_b)
    }

    /// Same weights at another precision.
    pub fn cast<U: Scalar>(&self) -> ViTModel<U> {
        ViTModel {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    decay_exempt: p.decay_exempt,
                })
                .collect(),
            layout: self.layout.clone(),
        }
    }

    /// Places every parameter on the tape as a leaf.
    pub fn load(&self, tape: &mut Tape<T>, trainable: bool) -> ModelVars {
        ModelVars(self.params.iter().map(|p| tape.leaf(p.value.clone(), trainable)).collect())
    }
}
