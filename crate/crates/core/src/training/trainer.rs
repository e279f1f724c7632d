use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::augment_train;
use super::config::TrainConfig;
use super::data::Dataset;
use super::optim::{adamw_step, OptimizerState};
use super::schedule::lr_schedule;
use crate::compute::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::vib::BottleneckMode;
use crate::vit::{argmax, ViTConfig, ViTModel};

/// Independent rng purposes under one seed.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum RngDomain {
    Init = 1,
    Shuffle = 2,
    Train = 3,
    Eval = 4,
    Analysis = 5,
}

/// Deterministic rng for `(seed, domain, a, b)`; `a` is typically an epoch
/// or run index and `b` a sample index.
pub fn keyed_rng(seed: u64, domain: RngDomain, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (domain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream((a << 32) ^ b);
    rng
}

/// Aggregates of one training epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Learning rate of the epoch's last update.
    pub lr: f64,
    pub train_ce: f64,
    /// Mean per-example KL summed over layers, heads and patches.
    pub train_kl: f64,
    pub train_acc: f64,
}

/// Repeated validation summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub runs: usize,
    pub mode: BottleneckMode,
    pub acc_mean: f64,
    /// Population standard deviation over runs.
    pub acc_std: f64,
    pub run_accuracies: Vec<f64>,
    /// Mean over images (and runs) of the total KL per image.
    pub kl_per_image: f64,
    /// Mean per-image KL of every head, layer-major.
    pub head_kl: Vec<f64>,
}

pub fn steps_per_epoch(samples: usize, batch_size: usize) -> usize {
    samples.div_ceil(batch_size)
}

struct ExampleOut {
    grads: Vec<Tensor<f32>>,
    ce: f64,
    kl: f64,
    correct: bool,
}

fn example_step(
    model: &ViTModel<f32>,
    image: &Tensor<f32>,
    label: usize,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ExampleOut> {
    let image = if config.augment { augment_train(image, rng)? } else { image.clone() };
    let mut tape = Tape::new();
    let vars = model.load(&mut tape, true);
    let graph = model.forward_graph(&mut tape, &vars, &image, config.bottleneck, Some(rng))?;
    let ce = tape.cross_entropy(graph.logits, label)?;
    let (loss, kl) = match graph.kl_total {
        Some(kl) if config.beta > 0.0 => {
            let weighted = tape.scale(kl, config.beta as f32);
            (tape.add(ce, weighted)?, tape.value(kl).item()? as f64)
        }
        Some(kl) => (ce, tape.value(kl).item()? as f64),
        None => (ce, 0.0),
    };
    let loss_value = tape.value(loss).item()?;
    if !loss_value.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss {loss_value} (ce {}, kl {kl})",
            tape.value(ce).item()?
        )));
    }
    let correct = argmax(&tape.value(graph.logits).to_f64_vec()) == label;
    let ce = tape.value(ce).item()? as f64;
    let mut g = tape.backward(loss)?;
    let grads = vars
        .as_slice()
        .iter()
        .zip(model.params())
        .map(|(&v, p)| g.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape().to_vec())))
        .collect();
    Ok(ExampleOut { grads, ce, kl, correct })
}

/// One shuffled pass over `data` with AdamW updates. `epoch` is zero-based
/// and, with the seed, keys every random draw.
pub fn train_epoch(
    model: &mut ViTModel<f32>,
    data: &Dataset,
    config: &TrainConfig,
    state: &mut OptimizerState,
    epoch: usize,
) -> Result<EpochMetrics> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Usage("empty training set".into()));
    }
    let spe = steps_per_epoch(data.len(), config.batch_size);
    let total = spe * config.epochs.max(epoch + 1);
    let warmup = spe * config.warmup_epochs;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut keyed_rng(config.seed, RngDomain::Shuffle, epoch as u64, 0));

    let (mut ce_sum, mut kl_sum, mut correct) = (0.0, 0.0, 0usize);
    let mut lr = 0.0;
    for (b, batch) in order.chunks(config.batch_size).enumerate() {
        let step = epoch * spe + b;
        lr = lr_schedule(step, total, warmup, config.base_lr)?;
        let outs: Vec<Result<ExampleOut>> = batch
            .par_iter()
            .map(|&i| {
                let mut rng = keyed_rng(config.seed, RngDomain::Train, epoch as u64, i as u64);
                example_step(model, &data.images[i], data.labels[i], config, &mut rng)
                    .map_err(|e| match e {
                        Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, step {step}, sample {i}: {m}")),
                        other => other,
                    })
            })
            .collect();
        let mut sum: Option<Vec<Tensor<f32>>> = None;
        for out in outs {
            let out = out?;
            ce_sum += out.ce;
            kl_sum += out.kl;
            correct += out.correct as usize;
            match &mut sum {
                None => sum = Some(out.grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&out.grads) {
                        for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                            *x += *y;
                        }
                    }
                }
            }
        }
        let mut grads = sum.expect("non-empty batch");
        let inv = 1.0 / batch.len() as f32;
        for g in &mut grads {
            for x in g.data_mut() {
                *x *= inv;
            }
        }
        if grads.iter().any(|g| !g.all_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at epoch {epoch}, step {step}")));
        }
        adamw_step(model, &grads, state, lr, config.weight_decay)?;
    }
    let n = data.len() as f64;
    Ok(EpochMetrics {
        epoch,
        lr,
        train_ce: ce_sum / n,
        train_kl: kl_sum / n,
        train_acc: correct as f64 / n,
    })
}

/// Runs validation `runs` times with fresh bottleneck samples.
pub fn evaluate_stochastic(
    model: &ViTModel<f32>,
    data: &Dataset,
    runs: usize,
    mode: BottleneckMode,
    seed: u64,
) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(Error::Usage("empty evaluation set".into()));
    }
    if runs == 0 {
        return Err(Error::Usage("eval_runs must be at least 1".into()));
    }
    let c = model.config();
    let total_heads = c.total_heads();
    let mut run_accuracies = Vec::with_capacity(runs);
    let mut kl_sum = 0.0;
    let mut head_kl = vec![0.0; total_heads];
    for run in 0..runs {
        let outs: Vec<Result<(bool, Vec<f64>)>> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let mut rng = keyed_rng(seed, RngDomain::Eval, run as u64, i as u64);
                let t = model.forward(&data.images[i], mode, Some(&mut rng))?;
                if t.logits.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite logits on image {i}")));
                }
                Ok((t.predicted_class() == data.labels[i], t.head_kl_totals(c.heads_per_block, c.depth)))
            })
            .collect();
        let mut correct = 0usize;
        for out in outs {
            let (ok, heads) = out?;
            correct += ok as usize;
            for (acc, h) in head_kl.iter_mut().zip(&heads) {
                *acc += h;
            }
            kl_sum += heads.iter().sum::<f64>();
        }
        run_accuracies.push(correct as f64 / data.len() as f64);
    }
    let denom = (runs * data.len()) as f64;
    let acc_mean = run_accuracies.iter().sum::<f64>() / runs as f64;
    let acc_std = (run_accuracies.iter().map(|a| (a - acc_mean).powi(2)).sum::<f64>() / runs as f64).sqrt();
    Ok(EvalMetrics {
        runs,
        mode,
        acc_mean,
        acc_std,
        run_accuracies,
        kl_per_image: kl_sum / denom,
        head_kl: head_kl.into_iter().map(|h| h / denom).collect(),
    })
}

/// Model, optimizer and progress of one run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: ViTModel<f32>,
    pub optimizer: OptimizerState,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
}

impl Trainer {
    /// Fresh model initialised from the run seed.
    pub fn new(model_config: ViTConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = keyed_rng(config.seed, RngDomain::Init, 0, 0);
        let model = ViTModel::new(model_config, &mut rng)?;
        let optimizer = OptimizerState::new(&model);
        Ok(Trainer { model, optimizer, config, epoch: 0 })
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn run_epoch(&mut self, train: &Dataset) -> Result<EpochMetrics> {
        let m = train_epoch(&mut self.model, train, &self.config, &mut self.optimizer, self.epoch)?;
        self.epoch += 1;
        Ok(m)
    }

    pub fn evaluate(&self, val: &Dataset, runs: usize) -> Result<EvalMetrics> {
        evaluate_stochastic(&self.model, val, runs, self.config.eval_mode(), self.config.seed)
    }
}
