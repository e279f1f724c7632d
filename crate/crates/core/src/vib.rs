//! Per-head variational information bottleneck.
//!
//! A channel encodes a head's update `delta` into a diagonal Gaussian
//! posterior `N(mu, diag(sigma^2))`, samples a latent with the
//! reparameterisation `z = mu + sigma * eps`, and decodes `z` back to the
//! update space. The prior is fixed at `N(0, I)` and the information cost of
//! a message is the closed-form KL divergence to it, in nats.
//!
//! Encoder and decoder are single affine maps. `log sigma` is clamped to
//! `[ln 1e-6, ln 1e6]`.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::compute::{Scalar, Tape, Tensor, Var};
use crate::error::{dim_err, Error, Result};

pub const SIGMA_MIN: f64 = 1e-6;
pub const SIGMA_MAX: f64 = 1e6;

/// How bottlenecks behave during a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BottleneckMode {
    /// `z ~ q(z | delta)` via the reparameterisation trick.
    Stochastic,
    /// `z = mu`.
    Mean,
    /// `z = 0` for every input: the decoded prior mean, so no information is
    /// written. KL is still computed from the encoder for reporting.
    PriorMean,
    /// Bypass the bottleneck entirely; KL is reported as zero.
    Disabled,
}

impl BottleneckMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stochastic" => Ok(Self::Stochastic),
            "mean" => Ok(Self::Mean),
            "prior-mean" => Ok(Self::PriorMean),
            "disabled" => Ok(Self::Disabled),
            other => Err(Error::Config(format!(
                "unknown bottleneck mode '{other}' (stochastic | mean | prior-mean | disabled)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stochastic => "stochastic",
            Self::Mean => "mean",
            Self::PriorMean => "prior-mean",
            Self::Disabled => "disabled",
        }
    }
}

/// Information cost of one head's message at one patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KLRecord {
    pub layer: usize,
    pub head: usize,
    pub patch: usize,
    pub kl_nats: f64,
    pub per_dim_kl: Vec<f64>,
}

/// Encoder and decoder parameters of one head's channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BottleneckChannel<T> {
    /// `[head_dim, latent_dim]`
    pub enc_mu_w: Tensor<T>,
    pub enc_mu_b: Tensor<T>,
    /// `[head_dim, latent_dim]`
    pub enc_log_sigma_w: Tensor<T>,
    pub enc_log_sigma_b: Tensor<T>,
    /// `[latent_dim, head_dim]`
    pub dec_w: Tensor<T>,
    pub dec_b: Tensor<T>,
}

/// Tape handles for a channel's parameters.
#[derive(Clone, Copy, Debug)]
pub struct ChannelVars {
    pub enc_mu_w: Var,
    pub enc_mu_b: Var,
    pub enc_log_sigma_w: Var,
    pub enc_log_sigma_b: Var,
    pub dec_w: Var,
    pub dec_b: Var,
}

impl<T: Scalar> BottleneckChannel<T> {
    /// All-zero channel: the posterior is the prior for every input and the
    /// decoder emits zeros.
    pub fn zeros(head_dim: usize, latent_dim: usize) -> Self {
        BottleneckChannel {
            enc_mu_w: Tensor::zeros(vec![head_dim, latent_dim]),
            enc_mu_b: Tensor::zeros(vec![latent_dim]),
            enc_log_sigma_w: Tensor::zeros(vec![head_dim, latent_dim]),
            enc_log_sigma_b: Tensor::zeros(vec![latent_dim]),
            dec_w: Tensor::zeros(vec![latent_dim, head_dim]),
            dec_b: Tensor::zeros(vec![head_dim]),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.enc_mu_w.shape()[0]
    }

    pub fn latent_dim(&self) -> usize {
        self.enc_mu_w.shape()[1]
    }

    pub fn load(&self, tape: &mut Tape<T>, trainable: bool) -> ChannelVars {
        let mut leaf = |t: &Tensor<T>| tape.leaf(t.clone(), trainable);
        ChannelVars {
            enc_mu_w: leaf(&self.enc_mu_w),
            enc_mu_b: leaf(&self.enc_mu_b),
            enc_log_sigma_w: leaf(&self.enc_log_sigma_w),
            enc_log_sigma_b: leaf(&self.enc_log_sigma_b),
            dec_w: leaf(&self.dec_w),
            dec_b: leaf(&self.dec_b),
        }
    }
}

/// `(mu, log_sigma)` for a `[rows, head_dim]` batch of updates; `log_sigma`
/// is already clamped.
pub fn encode_on_tape<T: Scalar>(tape: &mut Tape<T>, delta: Var, ch: &ChannelVars) -> Result<(Var, Var)> {
    let mu = tape.matmul(delta, ch.enc_mu_w)?;
    let mu = tape.add_row(mu, ch.enc_mu_b)?;
    let ls = tape.matmul(delta, ch.enc_log_sigma_w)?;
    let ls = tape.add_row(ls, ch.enc_log_sigma_b)?;
    let ls = tape.clamp(
        ls,
        T::from_f64_lossy(SIGMA_MIN.ln()),
        T::from_f64_lossy(SIGMA_MAX.ln()),
    );
    Ok((mu, ls))
}

/// Standard normal noise of the given shape, drawn row-major.
pub fn standard_normal<T: Scalar>(shape: &[usize], rng: &mut dyn RngCore) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("noise shape")
}

/// `z = mu + exp(log_sigma) * eps`, differentiable in `mu` and `log_sigma`.
pub fn sample_on_tape<T: Scalar>(tape: &mut Tape<T>, mu: Var, log_sigma: Var, rng: &mut dyn RngCore) -> Result<Var> {
    let eps = standard_normal(tape.value(mu).shape(), rng);
    let eps = tape.constant(eps);
    let sigma = tape.exp(log_sigma);
    let noise = tape.mul(sigma, eps)?;
    tape.add(mu, noise)
}

pub fn decode_on_tape<T: Scalar>(tape: &mut Tape<T>, z: Var, ch: &ChannelVars) -> Result<Var> {
    let out = tape.matmul(z, ch.dec_w)?;
    tape.add_row(out, ch.dec_b)
}

/// Result of routing a batch of updates through a channel.
#[derive(Clone, Copy, Debug)]
pub struct BottleneckVars {
    pub delta_hat: Var,
    /// Posterior means; absent when the bottleneck is disabled.
    pub mu: Option<Var>,
    /// Clamped posterior log standard deviations.
    pub log_sigma: Option<Var>,
    /// Per-element KL `[rows, latent_dim]`; absent when disabled.
    pub kl: Option<Var>,
}

pub fn apply_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    delta: Var,
    ch: &ChannelVars,
    mode: BottleneckMode,
    rng: Option<&mut dyn RngCore>,
) -> Result<BottleneckVars> {
    if mode == BottleneckMode::Disabled {
        return Ok(BottleneckVars {
            delta_hat: delta,
            mu: None,
            log_sigma: None,
            kl: None,
        });
    }
    let (mu, ls) = encode_on_tape(tape, delta, ch)?;
    let kl = tape.gaussian_kl(mu, ls)?;
    let z = match mode {
        BottleneckMode::Stochastic => {
            let rng = rng.ok_or_else(|| Error::Usage("stochastic bottleneck requires an rng".into()))?;
            sample_on_tape(tape, mu, ls, rng)?
        }
        BottleneckMode::Mean => mu,
        BottleneckMode::PriorMean => {
            let shape = tape.value(mu).shape().to_vec();
            tape.constant(Tensor::zeros(shape))
        }
        BottleneckMode::Disabled => unreachable!(),
    };
    let delta_hat = decode_on_tape(tape, z, ch)?;
    Ok(BottleneckVars {
        delta_hat,
        mu: Some(mu),
        log_sigma: Some(ls),
        kl: Some(kl),
    })
}

fn row_input<T: Scalar>(tape: &mut Tape<T>, v: &[T], expected: usize, what: &str) -> Result<Var> {
    if v.len() != expected {
        return Err(dim_err!("{what} has length {}, expected {expected}", v.len()));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::Numeric(format!("{what} contains non-finite values")));
    }
    Ok(tape.constant(Tensor::new(vec![1, v.len()], v.to_vec())?))
}

/// Posterior `(mu, sigma)` for one update vector.
pub fn encode<T: Scalar>(delta: &[T], ch: &BottleneckChannel<T>) -> Result<(Vec<T>, Vec<T>)> {
    let mut tape = Tape::new();
    let d = row_input(&mut tape, delta, ch.head_dim(), "delta")?;
    let cv = ch.load(&mut tape, false);
    let (mu, ls) = encode_on_tape(&mut tape, d, &cv)?;
    let sigma = tape.value(ls).data().iter().map(|v| v.exp()).collect();
    Ok((tape.value(mu).data().to_vec(), sigma))
}

/// `z = mu + sigma * eps`, `eps ~ N(0, I)`.
pub fn sample_reparam<T: Scalar>(mu: &[T], sigma: &[T], rng: &mut dyn RngCore) -> Result<Vec<T>> {
    if mu.len() != sigma.len() {
        return Err(dim_err!("mu has {} dims, sigma {}", mu.len(), sigma.len()));
    }
    Ok(mu
        .iter()
        .zip(sigma)
        .map(|(&m, &s)| m + s * T::from_f64_lossy(rng.sample::<f64, _>(StandardNormal)))
        .collect())
}

/// Closed-form `KL(N(mu, diag sigma^2) || N(0, I))` in nats, total and per
/// dimension.
pub fn kl_diag_gaussian(mu: &[f64], sigma: &[f64]) -> Result<(f64, Vec<f64>)> {
    if mu.len() != sigma.len() {
        return Err(dim_err!("mu has {} dims, sigma {}", mu.len(), sigma.len()));
    }
    let per_dim: Vec<f64> = mu
        .iter()
        .zip(sigma)
        .map(|(&m, &s)| {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Numeric(format!("sigma must be positive and finite, got {s}")));
            }
            let s2 = s * s;
            Ok(0.5 * (m * m + s2 - 1.0 - s2.ln()))
        })
        .collect::<Result<_>>()?;
    Ok((per_dim.iter().sum(), per_dim))
}

pub fn decode<T: Scalar>(z: &[T], ch: &BottleneckChannel<T>) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let zv = row_input(&mut tape, z, ch.latent_dim(), "z")?;
    let cv = ch.load(&mut tape, false);
    let out = decode_on_tape(&mut tape, zv, &cv)?;
    Ok(tape.value(out).data().to_vec())
}

/// Output of [`bottleneck_apply`] for one update vector.
#[derive(Clone, Debug, PartialEq)]
pub struct BottleneckOutput<T> {
    pub delta_hat: Vec<T>,
    pub kl_nats: f64,
    pub per_dim_kl: Vec<f64>,
}

/// Routes one update vector through a channel in the given mode.
pub fn bottleneck_apply<T: Scalar>(
    delta: &[T],
    ch: &BottleneckChannel<T>,
    mode: BottleneckMode,
    rng: Option<&mut dyn RngCore>,
) -> Result<BottleneckOutput<T>> {
    let mut tape = Tape::new();
    let d = row_input(&mut tape, delta, ch.head_dim(), "delta")?;
    let cv = ch.load(&mut tape, false);
    let out = apply_on_tape(&mut tape, d, &cv, mode, rng)?;
    let per_dim_kl = match out.kl {
        Some(kl) => tape.value(kl).to_f64_vec(),
        None => vec![0.0; ch.latent_dim()],
    };
    Ok(BottleneckOutput {
        delta_hat: tape.value(out.delta_hat).data().to_vec(),
        kl_nats: per_dim_kl.iter().sum(),
        per_dim_kl,
    })
}
