//! Monte Carlo mutual information between dataset items and a Gaussian
//! channel's latent, and the normalised information shared by two channels.
//!
//! With `x` uniform over `L` items and `u ~ N(mu_x, diag sigma_x^2)`,
//! `I(X;U) = E[ln p(u|x) - ln (1/L) sum_i p(u|x_i)]`. Draws are split into
//! fixed-size chunks with their own rng streams and reduced in chunk order,
//! so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CHUNK: usize = 4096;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal Gaussian posterior of every dataset item.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianChannel {
    dim: usize,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl GaussianChannel {
    pub fn new(mu: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>) -> Result<Self> {
        if mu.is_empty() || mu.len() != sigma.len() {
            return Err(Error::Usage(format!("{} means but {} sigmas", mu.len(), sigma.len())));
        }
        let dim = mu[0].len();
        if dim == 0 {
            return Err(Error::Usage("zero-dimensional channel".into()));
        }
        for (m, s) in mu.iter().zip(&sigma) {
            if m.len() != dim || s.len() != dim {
                return Err(Error::Usage("items have mismatched dimensionality".into()));
            }
            if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) || m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Usage("channel parameters must be finite with sigma > 0".into()));
            }
        }
        Ok(GaussianChannel {
            dim,
            mu: mu.concat(),
            sigma: sigma.concat(),
        })
    }

    pub fn items(&self) -> usize {
        self.mu.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self, i: usize) -> &[f64] {
        &self.mu[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sigma(&self, i: usize) -> &[f64] {
        &self.sigma[i * self.dim..(i + 1) * self.dim]
    }

    /// Joint channel of the concatenated parameters.
    pub fn concat(&self, other: &GaussianChannel) -> Result<GaussianChannel> {
        if self.items() != other.items() {
            return Err(Error::Usage("channels index different datasets".into()));
        }
        let join = |a: &[f64], b: &[f64]| [a, b].concat();
        GaussianChannel::new(
            (0..self.items()).map(|i| join(self.mu(i), other.mu(i))).collect(),
            (0..self.items()).map(|i| join(self.sigma(i), other.sigma(i))).collect(),
        )
    }

    /// The same channel with latent coordinates reordered: output
    /// dimension `k` is input dimension `perm[k]`.
    pub fn permute_dims(&self, perm: &[usize]) -> Result<GaussianChannel> {
        let mut seen = vec![false; self.dim];
        if perm.len() != self.dim || perm.iter().any(|&p| p >= self.dim || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Usage("not a permutation of the latent dimensions".into()));
        }
        let pick = |v: &[f64]| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        GaussianChannel::new(
            (0..self.items()).map(|i| pick(self.mu(i))).collect(),
            (0..self.items()).map(|i| pick(self.sigma(i))).collect(),
        )
    }

    fn sample(&self, i: usize, eps: &[f64], out: &mut [f64]) {
        for k in 0..self.dim {
            out[k] = self.mu(i)[k] + self.sigma(i)[k] * eps[k];
        }
    }

    /// `ln p(u | x_i)` for every item.
    fn log_densities(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (m, s) = (self.mu(i), self.sigma(i));
            let mut acc = 0.0;
            for k in 0..self.dim {
                let z = (u[k] - m[k]) / s[k];
                acc += 0.5 * z * z + s[k].ln();
            }
            *o = -acc - 0.5 * self.dim as f64 * LN_2PI;
        }
    }
}

/// A Monte Carlo information estimate in nats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub value: f64,
    /// Sample standard deviation of the integrand over `sqrt(draws)`.
    pub stderr: f64,
    pub items: usize,
    pub draws: usize,
}

/// `ln p(u|x) - ln (1/L) sum_i p(u|x_i)` given all item log densities,
/// with the max shifted out of the sum.
fn integrand(log_p: &[f64], x: usize) -> f64 {
    let max = log_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = log_p.iter().map(|&l| (l - max).exp()).sum();
    (log_p[x] - max) - (s.ln() - (log_p.len() as f64).ln())
}

#[derive(Clone, Copy, Default)]
struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn merge(&mut self, o: &Moments) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    fn estimate(&self, items: usize, draws: usize) -> MIEstimate {
        let n = draws as f64;
        let mean = self.sum / n;
        let var = if draws > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        MIEstimate {
            value: mean,
            stderr: (var / n).sqrt(),
            items,
            draws,
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Runs `f` over every chunk of `draws` in parallel and returns the
/// per-chunk results in chunk order.
fn chunked<T: Send>(draws: usize, seed: u64, f: impl Fn(&mut ChaCha8Rng, usize) -> T + Sync) -> Vec<T> {
    let chunks = draws.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK.min(draws - c * CHUNK);
            f(&mut chunk_rng(seed, c), n)
        })
        .collect()
}

fn normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Estimates `I(X;U)` for `x` uniform over the channel's items.
pub fn mi_monte_carlo(channel: &GaussianChannel, draws: usize, seed: u64) -> Result<MIEstimate> {
    if draws == 0 {
        return Err(Error::Usage("need at least one draw".into()));
    }
    let l = channel.items();
    let parts = chunked(draws, seed, |rng, n| {
        let mut m = Moments::default();
        let mut eps = vec![0.0; channel.dim()];
        let mut u = vec![0.0; channel.dim()];
        let mut lp = vec![0.0; l];
        for _ in 0..n {
            let x = rng.random_range(0..l);
            normals(rng, &mut eps);
            channel.sample(x, &eps, &mut u);
            channel.log_densities(&u, &mut lp);
            m.push(integrand(&lp, x));
        }
        m
    });
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    let est = total.estimate(l, draws);
    if !est.value.is_finite() {
        return Err(Error::Numeric("non-finite mutual information estimate".into()));
    }
    Ok(est)
}

/// Normalised mutual information between two channels over one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmiEstimate {
    /// Clamped to [0, 1].
    pub nmi: f64,
    pub raw: f64,
    pub stderr: f64,
    pub mi_xu: MIEstimate,
    pub mi_xv: MIEstimate,
    pub mi_x_uv: MIEstimate,
    pub mi_x_uu: MIEstimate,
    pub mi_x_vv: MIEstimate,
    /// `I(U;V)`.
    pub shared: f64,
    pub shared_stderr: f64,
    pub norm_u: f64,
    pub norm_u_stderr: f64,
    pub norm_v: f64,
    pub norm_v_stderr: f64,
    pub propagation: String,
}

/// `I(U;V) / sqrt(I(U;U') I(V;V'))` where each information term is
/// obtained as `I(X;A) + I(X;B) - I(X;A,B)` and `U'` is an independent
/// resample of `U` given `x`.
///
/// All five `I(X;.)` terms are estimated from the same draws (item and noise
/// shared), which makes the combinations far less noisy; the reported
/// standard error nevertheless propagates the component errors to first
/// order as if they were independent, which overstates it.
pub fn nmi_heads(u: &GaussianChannel, v: &GaussianChannel, draws: usize, seed: u64) -> Result<NmiEstimate> {
    if u.items() != v.items() {
        return Err(Error::Usage(format!(
            "channels index {} and {} items",
            u.items(),
            v.items()
        )));
    }
    if draws == 0 {
        return Err(Error::Usage("need at least one draw".into()));
    }
    let l = u.items();
    let parts = chunked(draws, seed, |rng, n| {
        let mut m = [Moments::default(); 5];
        let (du, dv) = (u.dim(), v.dim());
        let mut eps = vec![0.0; du.max(dv)];
        let (mut u1, mut u2) = (vec![0.0; du], vec![0.0; du]);
        let (mut v1, mut v2) = (vec![0.0; dv], vec![0.0; dv]);
        let (mut lu1, mut lu2) = (vec![0.0; l], vec![0.0; l]);
        let (mut lv1, mut lv2) = (vec![0.0; l], vec![0.0; l]);
        let mut joint = vec![0.0; l];
        for _ in 0..n {
            let x = rng.random_range(0..l);
            normals(rng, &mut eps[..du]);
            u.sample(x, &eps[..du], &mut u1);
            normals(rng, &mut eps[..dv]);
            v.sample(x, &eps[..dv], &mut v1);
            normals(rng, &mut eps[..du]);
            u.sample(x, &eps[..du], &mut u2);
            normals(rng, &mut eps[..dv]);
            v.sample(x, &eps[..dv], &mut v2);
            u.log_densities(&u1, &mut lu1);
            v.log_densities(&v1, &mut lv1);
            u.log_densities(&u2, &mut lu2);
            v.log_densities(&v2, &mut lv2);
            m[0].push(integrand(&lu1, x));
            m[1].push(integrand(&lv1, x));
            for (j, o) in joint.iter_mut().enumerate() {
                *o = lu1[j] + lv1[j];
            }
            m[2].push(integrand(&joint, x));
            for (j, o) in joint.iter_mut().enumerate() {
                *o = lu1[j] + lu2[j];
            }
            m[3].push(integrand(&joint, x));
            for (j, o) in joint.iter_mut().enumerate() {
                *o = lv1[j] + lv2[j];
            }
            m[4].push(integrand(&joint, x));
        }
        m
    });
    let mut total = [Moments::default(); 5];
    for p in &parts {
        for (t, c) in total.iter_mut().zip(p) {
            t.merge(c);
        }
    }
    let [a, b, c, d, e] = total.map(|m| m.estimate(l, draws));
    let shared = a.value + b.value - c.value;
    let shared_se = (a.stderr.powi(2) + b.stderr.powi(2) + c.stderr.powi(2)).sqrt();
    let norm_u = 2.0 * a.value - d.value;
    let norm_u_se = (4.0 * a.stderr.powi(2) + d.stderr.powi(2)).sqrt();
    let norm_v = 2.0 * b.value - e.value;
    let norm_v_se = (4.0 * b.stderr.powi(2) + e.stderr.powi(2)).sqrt();
    for (name, n, se) in [("U", norm_u, norm_u_se), ("V", norm_v, norm_v_se)] {
        if !(n > 1e-12 && n > se) {
            return Err(Error::UndefinedNmi(format!(
                "self-information of {name} is {n:.3e} ± {se:.3e} nats; the channel carries no information"
            )));
        }
    }
    let raw = shared / (norm_u * norm_v).sqrt();
    let stderr = (shared_se.powi(2) / (norm_u * norm_v)
        + raw.powi(2) * (0.25 * (norm_u_se / norm_u).powi(2) + 0.25 * (norm_v_se / norm_v).powi(2)))
    .sqrt();
    if !raw.is_finite() {
        return Err(Error::Numeric("non-finite NMI".into()));
    }
    Ok(NmiEstimate {
        nmi: raw.clamp(0.0, 1.0),
        raw,
        stderr,
        mi_xu: a,
        mi_xv: b,
        mi_x_uv: c,
        mi_x_uu: d,
        mi_x_vv: e,
        shared,
        shared_stderr: shared_se,
        norm_u,
        norm_u_stderr: norm_u_se,
        norm_v,
        norm_v_stderr: norm_v_se,
        propagation: "first-order, terms treated as independent".into(),
    })
}
