//! Shared test helpers: random models and images, central differences and a
//! plain-loop reference transformer without bottlenecks.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vib_vit::compute::{Tape, Tensor};
use vib_vit::vib::BottleneckMode;
use vib_vit::vit::{ViTConfig, ViTModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Model with O(1) activations: weights ~ N(0, 1/fan_in), biases and
/// positions ~ N(0, 0.1^2), norm gains near one.
pub fn random_model(config: ViTConfig, seed: u64) -> ViTModel<f64> {
    let mut r = rng(seed);
    let mut m = ViTModel::<f64>::zeros(config).unwrap();
    for p in m.params_mut() {
        let shape = p.value.shape().to_vec();
        let is_gain = p.name.ends_with("norm1.weight") || p.name.ends_with("norm2.weight") || p.name == "norm.weight";
        let scale = if shape.len() == 2 && p.name != "pos_embed" { (1.0 / shape[0] as f64).sqrt() } else { 0.1 };
        for v in p.value.data_mut() {
            let n: f64 = r.sample(StandardNormal);
            *v = if is_gain { 1.0 + 0.1 * n } else { scale * n };
        }
    }
    m
}

pub fn random_image(config: &ViTConfig, r: &mut ChaCha8Rng) -> Tensor<f64> {
    let s = config.image_size;
    Tensor::new(
        vec![config.channels, s, s],
        (0..config.image_len()).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// The training objective for one example, in f64, with bottleneck noise
/// drawn from a freshly seeded stream so repeated calls see the same noise.
pub fn example_loss(model: &ViTModel<f64>, image: &Tensor<f64>, label: usize, beta: f64, noise_seed: u64) -> f64 {
    let mut tape = Tape::new();
    let vars = model.load(&mut tape, false);
    let mut r = rng(noise_seed);
    let g = model
        .forward_graph(&mut tape, &vars, image, BottleneckMode::Stochastic, Some(&mut r))
        .unwrap();
    let ce = tape.cross_entropy(g.logits, label).unwrap();
    let kl = tape.value(g.kl_total.unwrap()).item().unwrap();
    tape.value(ce).item().unwrap() + beta * kl
}

/// Analytic gradient of [`example_loss`] with respect to every parameter.
pub fn example_grad(
    model: &ViTModel<f64>,
    image: &Tensor<f64>,
    label: usize,
    beta: f64,
    noise_seed: u64,
) -> Vec<Tensor<f64>> {
    let mut tape = Tape::new();
    let vars = model.load(&mut tape, true);
    let mut r = rng(noise_seed);
    let g = model
        .forward_graph(&mut tape, &vars, image, BottleneckMode::Stochastic, Some(&mut r))
        .unwrap();
    let ce = tape.cross_entropy(g.logits, label).unwrap();
    let kl = tape.scale(g.kl_total.unwrap(), beta);
    let loss = tape.add(ce, kl).unwrap();
    let mut grads = tape.backward(loss).unwrap();
    vars.as_slice()
        .iter()
        .zip(model.params())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape().to_vec())))
        .collect()
}

/// Central difference of `f` in parameter `(param, index)` with step `h`.
pub fn central_difference(
    model: &ViTModel<f64>,
    param: usize,
    index: usize,
    h: f64,
    f: impl Fn(&ViTModel<f64>) -> f64,
) -> f64 {
    let mut m = model.clone();
    let x0 = m.params()[param].value.data()[index];
    m.params_mut()[param].value.data_mut()[index] = x0 + h;
    let up = f(&m);
    m.params_mut()[param].value.data_mut()[index] = x0 - h;
    let down = f(&m);
    (up - down) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

// ---- reference transformer -------------------------------------------------

type Mat = Vec<Vec<f64>>;

fn p<'a>(m: &'a ViTModel<f64>, name: &str) -> &'a Tensor<f64> {
    m.param(m.find(name).unwrap_or_else(|| panic!("no parameter {name}")))
}

fn mat(t: &Tensor<f64>) -> Mat {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn linear(x: &Mat, w: &Tensor<f64>, b: &Tensor<f64>) -> Mat {
    let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
    let wd = w.data();
    x.iter()
        .map(|row| {
            assert_eq!(row.len(), fan_in);
            (0..fan_out)
                .map(|j| b.data()[j] + (0..fan_in).map(|i| row[i] * wd[i * fan_out + j]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn layer_norm(x: &Mat, g: &Tensor<f64>, b: &Tensor<f64>) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + 1e-6).sqrt();
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) * inv * g.data()[j] + b.data()[j])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

/// Patches in row-major grid order, each flattened channel, row, column.
fn patches(image: &Tensor<f64>, c: &ViTConfig) -> Mat {
    let (s, ps) = (c.image_size, c.patch_size);
    let g = s / ps;
    let d = image.data();
    let mut out = Vec::new();
    for gy in 0..g {
        for gx in 0..g {
            let mut v = Vec::new();
            for ch in 0..c.channels {
                for y in 0..ps {
                    for x in 0..ps {
                        v.push(d[(ch * s + gy * ps + y) * s + gx * ps + x]);
                    }
                }
            }
            out.push(v);
        }
    }
    out
}

/// Logits of a pre-norm transformer with plain multi-head attention, read
/// off `model`'s parameters and ignoring every bottleneck parameter.
pub fn reference_logits(model: &ViTModel<f64>, image: &Tensor<f64>) -> Vec<f64> {
    let c = model.config().clone();
    let hd = c.head_dim();
    let mut x = linear(&patches(image, &c), p(model, "patch_embed.weight"), p(model, "patch_embed.bias"));
    x = add(&x, &mat(p(model, "pos_embed")));
    let n = x.len();
    for l in 0..c.depth {
        let pre = format!("blocks.{l}");
        let h = layer_norm(&x, p(model, &format!("{pre}.norm1.weight")), p(model, &format!("{pre}.norm1.bias")));
        let mut concat: Mat = vec![Vec::new(); n];
        for head in 0..c.heads_per_block {
            let hp = format!("{pre}.attn.heads.{head}");
            let proj = |k: &str| linear(&h, p(model, &format!("{hp}.{k}.weight")), p(model, &format!("{hp}.{k}.bias")));
            let (q, k, v) = (proj("q"), proj("k"), proj("v"));
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| (0..hd).map(|t| q[i][t] * k[j][t]).sum::<f64>() / (hd as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for t in 0..hd {
                    concat[i].push((0..n).map(|j| e[j] / z * v[j][t]).sum());
                }
            }
        }
        let upd = linear(&concat, p(model, &format!("{pre}.attn.proj.weight")), p(model, &format!("{pre}.attn.proj.bias")));
        x = add(&x, &upd);
        let h = layer_norm(&x, p(model, &format!("{pre}.norm2.weight")), p(model, &format!("{pre}.norm2.bias")));
        let mut h = linear(&h, p(model, &format!("{pre}.mlp.fc1.weight")), p(model, &format!("{pre}.mlp.fc1.bias")));
        for row in &mut h {
            for v in row.iter_mut() {
                *v = gelu(*v);
            }
        }
        let h = linear(&h, p(model, &format!("{pre}.mlp.fc2.weight")), p(model, &format!("{pre}.mlp.fc2.bias")));
        x = add(&x, &h);
    }
    let x = layer_norm(&x, p(model, "norm.weight"), p(model, "norm.bias"));
    let pooled: Vec<f64> = (0..c.embed_dim).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    linear(&vec![pooled], p(model, "head.weight"), p(model, "head.bias")).remove(0)
}
