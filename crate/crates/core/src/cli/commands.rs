use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::analysis::{
    head_channel, jsd_select, mi_monte_carlo, nmi_heads, patch_kl_map, repetition_probe, softmax,
    survival_from_values, top_activating_patches, vote_stats, write_csv, write_csv_records, write_json, write_kl_map,
    HeadActivity, KlAccumulator, KlMapSidecar, Provenance, Summary,
};
use crate::compute::Tensor;
use crate::error::{Error, Result};
use crate::training::synthetic::synthetic_splits;
use crate::training::{
    evaluate_stochastic, keyed_rng, load_cifar10_subset, write_run_log, Checkpoint, CifarSplits, EpochRecord,
    EvalMetrics, RngDomain, Trainer,
};
use crate::vib::BottleneckMode;
use crate::vit::{ForwardTrace, ViTModel};

/// Names accepted by `analyze`.
pub const ANALYSES: [&str; 9] = [
    "kl-map",
    "survival",
    "active-heads",
    "voting",
    "jsd-select",
    "mi",
    "nmi",
    "probe",
    "top-patches",
];

pub fn load_data(cfg: &RunConfig) -> Result<CifarSplits> {
    let splits = match &cfg.data_dir {
        Some(dir) => load_cifar10_subset(dir, cfg.train_limit, cfg.val_limit)?,
        None => synthetic_splits(
            cfg.train_limit.map_or(cfg.synthetic_train, |n| n.min(cfg.synthetic_train)),
            cfg.val_limit.map_or(cfg.synthetic_val, |n| n.min(cfg.synthetic_val)),
            cfg.synthetic_seed,
        )?,
    };
    let shape = [cfg.model.channels, cfg.model.image_size, cfg.model.image_size];
    if let Some(im) = splits.train.images.first() {
        if im.shape() != shape {
            return Err(Error::Config(format!(
                "dataset images are {:?} but the model expects {:?}",
                im.shape(),
                shape
            )));
        }
    }
    if splits.train.num_classes != cfg.model.num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes but the model has {}",
            splits.train.num_classes, cfg.model.num_classes
        )));
    }
    Ok(splits)
}

fn provenance(command: &str, cfg: &RunConfig, checkpoints: &[&Path], sha: Option<&str>) -> Provenance {
    Provenance {
        command: command.to_string(),
        config: cfg.to_json(),
        seed: cfg.train.seed,
        checkpoints: checkpoints.iter().map(|p| p.display().to_string()).collect(),
        dataset_sha256: sha.map(str::to_string),
        notes: Vec::new(),
    }
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Usage(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub mode: BottleneckMode,
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub run_accuracies: Vec<f64>,
    pub kl_per_image: f64,
    pub head_kl: Vec<HeadKl>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HeadKl {
    pub layer: usize,
    pub head: usize,
    pub kl_per_image: f64,
}

impl EvalReport {
    fn new(m: &EvalMetrics, heads_per_block: usize) -> Self {
        EvalReport {
            mode: m.mode,
            runs: m.runs,
            acc_mean: m.acc_mean,
            acc_std: m.acc_std,
            run_accuracies: m.run_accuracies.clone(),
            kl_per_image: m.kl_per_image,
            head_kl: m
                .head_kl
                .iter()
                .enumerate()
                .map(|(i, &kl)| HeadKl {
                    layer: i / heads_per_block,
                    head: i % heads_per_block,
                    kl_per_image: kl,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct TrainResult<'a> {
    epochs: &'a [EpochRecord],
    final_eval: EvalReport,
    active_heads: usize,
}

/// What a finished training run reports back to `sweep`.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub final_eval: EvalMetrics,
    pub active_heads: usize,
}

/// Trains from scratch and writes `checkpoint.bin`, optional
/// `checkpoint_epoch<k>.bin`, `epochs.csv` and `train.json` into `out_dir`.
pub fn run_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let data = load_data(cfg)?;
    create_out_dir(&cfg.out_dir)?;
    let mut trainer = Trainer::new(cfg.model.clone(), cfg.train.clone())?;
    let mode = cfg.train.eval_mode();
    let mut records = Vec::with_capacity(cfg.train.epochs);
    while !trainer.is_done() {
        let m = trainer.run_epoch(&data.train)?;
        let v = evaluate_stochastic(&trainer.model, &data.val, cfg.val_runs, mode, cfg.train.seed)?;
        let r = EpochRecord::new(&m, &v);
        eprintln!(
            "epoch {:>3}  lr {:.3e}  ce {:.4}  kl {:.3}  acc {:.4}  val {:.4}  val_kl {:.3}",
            r.epoch, r.lr, r.train_ce, r.train_kl, r.train_acc, r.val_acc_mean, r.val_kl_per_image
        );
        records.push(r);
        write_run_log(&cfg.out_dir.join("epochs.csv"), &records)?;
        if cfg.checkpoint_every > 0 && trainer.epoch % cfg.checkpoint_every == 0 && !trainer.is_done() {
            Checkpoint::from(&trainer).save(&cfg.out_dir.join(format!("checkpoint_epoch{}.bin", trainer.epoch)))?;
        }
    }
    let checkpoint = cfg.out_dir.join("checkpoint.bin");
    Checkpoint::from(&trainer).save(&checkpoint)?;
    write_run_log(&cfg.out_dir.join("epochs.csv"), &records)?;
    let final_eval = trainer.evaluate(&data.val, cfg.train.eval_runs)?;
    let probe_mode = match cfg.train.bottleneck {
        BottleneckMode::Disabled => BottleneckMode::Disabled,
        _ => BottleneckMode::Mean,
    };
    let t = traces(&trainer.model, &data.val.images, probe_mode, cfg.train.seed)?;
    let active_heads = activity(&t, cfg, false)?.activity(cfg.threshold).iter().filter(|a| a.active).count();
    let prov = provenance("train", cfg, &[&checkpoint], Some(&data.train.sha256));
    write_json(
        &cfg.out_dir.join("train.json"),
        &Summary {
            provenance: &prov,
            result: TrainResult {
                epochs: &records,
                final_eval: EvalReport::new(&final_eval, cfg.model.heads_per_block),
                active_heads,
            },
        },
    )?;
    eprintln!(
        "final  val {:.4} +- {:.4}  kl/image {:.3}",
        final_eval.acc_mean, final_eval.acc_std, final_eval.kl_per_image
    );
    Ok(TrainOutcome { checkpoint, final_eval, active_heads })
}

fn require(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    path.clone().ok_or_else(|| Error::Usage(format!("{key} is required")))
}

/// Loads a checkpoint and checks it against the configured model.
pub fn load_checkpoint(cfg: &RunConfig, path: &Path) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    if ck.model.config() != &cfg.model {
        return Err(Error::Config(format!(
            "{} holds a model {:?}, but the configuration describes {:?}",
            path.display(),
            ck.model.config(),
            cfg.model
        )));
    }
    Ok(ck)
}

/// Evaluates `checkpoint` on the validation split; writes `eval.json`.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalMetrics> {
    let path = require(&cfg.checkpoint, "checkpoint")?;
    let ck = load_checkpoint(cfg, &path)?;
    let data = load_data(cfg)?;
    create_out_dir(&cfg.out_dir)?;
    let mode = cfg.eval_mode.unwrap_or(ck.train.eval_mode());
    let m = evaluate_stochastic(&ck.model, &data.val, ck.train.eval_runs, mode, ck.train.seed)?;
    let prov = provenance("eval", cfg, &[&path], Some(&data.val.sha256));
    write_json(
        &cfg.out_dir.join("eval.json"),
        &Summary {
            provenance: &prov,
            result: EvalReport::new(&m, cfg.model.heads_per_block),
        },
    )?;
    println!("acc {:.4} +- {:.4}  kl/image {:.4}", m.acc_mean, m.acc_std, m.kl_per_image);
    Ok(m)
}

/// Forward traces of the analysed validation images.
fn traces(model: &ViTModel<f32>, images: &[Tensor<f32>], mode: BottleneckMode, seed: u64) -> Result<Vec<ForwardTrace>> {
    use rayon::prelude::*;
    images
        .par_iter()
        .enumerate()
        .map(|(i, im)| {
            let mut rng = keyed_rng(seed, RngDomain::Analysis, 1 << 20, i as u64);
            model.forward(im, mode, Some(&mut rng))
        })
        .collect()
}

fn take_images(all: &[Tensor<f32>], n: usize) -> &[Tensor<f32>] {
    if n == 0 {
        all
    } else {
        &all[..n.min(all.len())]
    }
}

fn activity(traces: &[ForwardTrace], cfg: &RunConfig, keep: bool) -> Result<KlAccumulator> {
    let mut acc = KlAccumulator::new(cfg.model.depth, cfg.model.heads_per_block, keep);
    for t in traces {
        acc.add_trace(t)?;
    }
    Ok(acc)
}

/// `(layer, head)` from the config, or else the head with the largest mean
/// per-patch KL among those with an active latent dimension.
fn pick_head(cfg: &RunConfig, act: &[HeadActivity]) -> Result<(usize, usize)> {
    match (cfg.layer, cfg.head) {
        (Some(l), Some(h)) => Ok((l, h)),
        (None, None) => act
            .iter()
            .filter(|a| a.dominant_dim(cfg.dim_threshold).is_some())
            .max_by(|a, b| a.mean_patch_kl.total_cmp(&b.mean_patch_kl))
            .map(|a| (a.layer, a.head))
            .ok_or_else(|| Error::Usage("no head has an active latent dimension".into())),
        _ => Err(Error::Usage("set both layer and head, or neither".into())),
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

#[derive(Serialize)]
struct HeadRow {
    layer: usize,
    head: usize,
    active: bool,
    max_patch_kl: f64,
    mean_patch_kl: f64,
    active_dims: usize,
    dominant_dim: Option<usize>,
}

#[derive(Serialize)]
struct MiRow {
    layer: usize,
    head: usize,
    mi: f64,
    stderr: f64,
    items: usize,
    draws: usize,
}

#[derive(Serialize)]
struct NmiRow {
    layer_a: usize,
    head_a: usize,
    layer_b: usize,
    head_b: usize,
    nmi: Option<f64>,
    stderr: Option<f64>,
    shared: Option<f64>,
    mi_a: Option<f64>,
    mi_b: Option<f64>,
    note: String,
}

#[derive(Serialize)]
struct JsdRow {
    image: usize,
    jsd: f64,
    rank: Option<usize>,
    sampled: bool,
}

#[derive(Serialize)]
struct TopRow {
    sign: &'static str,
    rank: usize,
    image: usize,
    patch: usize,
    kl: f64,
    latent_mean: f64,
}

/// Runs the named analysis on `checkpoint` and writes `<name>.csv` and
/// `<name>.json` into `out_dir`.
pub fn run_analyze(cfg: &RunConfig, name: &str) -> Result<()> {
    if !ANALYSES.contains(&name) {
        return Err(Error::Usage(format!(
            "unknown analysis '{name}'; available: {}",
            ANALYSES.join(", ")
        )));
    }
    let path = require(&cfg.checkpoint, "checkpoint")?;
    let ck = load_checkpoint(cfg, &path)?;
    let path_b = if matches!(name, "nmi" | "jsd-select") {
        Some(require(&cfg.checkpoint_b, "checkpoint_b").map_err(|e| Error::Usage(format!("analyze {name}: {e}")))?)
    } else {
        None
    };
    let ck_b = path_b.as_ref().map(|p| load_checkpoint(cfg, p)).transpose()?;
    let data = load_data(cfg)?;
    create_out_dir(&cfg.out_dir)?;
    let model = &ck.model;
    let c = &cfg.model;
    let seed = cfg.train.seed;
    let mode = cfg.eval_mode.unwrap_or(BottleneckMode::Mean);
    let images = take_images(&data.val.images, cfg.images);
    let mut checkpoints: Vec<&Path> = vec![&path];
    if let Some(p) = &path_b {
        checkpoints.push(p);
    }
    let mut prov = provenance(&format!("analyze {name}"), cfg, &checkpoints, Some(&data.val.sha256));
    let csv = cfg.out_dir.join(format!("{name}.csv"));
    let json = cfg.out_dir.join(format!("{name}.json"));

    match name {
        "kl-map" => {
            let id = cfg.image_id;
            let image = data
                .val
                .images
                .get(id)
                .ok_or_else(|| Error::Usage(format!("image_id {id} outside {} validation images", data.val.len())))?;
            let t = traces(model, std::slice::from_ref(image), mode, seed)?;
            let mut map = patch_kl_map(&t[0], id)?;
            map.image_id = id;
            write_kl_map(&cfg.out_dir, name, &map)?;
            let sidecar = KlMapSidecar {
                image_id: id,
                side: map.side,
                total_kl: map.total(),
                vmin: 0.0,
                vmax: map.max(),
            };
            write_json(&json, &Summary { provenance: &prov, result: &sidecar })?;
        }
        "survival" => {
            let t = traces(model, images, mode, seed)?;
            let acc = activity(&t, cfg, true)?;
            let n = cfg.survival_points;
            let grid: Vec<f64> = (0..n).map(|i| cfg.survival_max * i as f64 / (n - 1) as f64).collect();
            let mut header = vec!["layer".to_string(), "head".to_string()];
            header.extend(grid.iter().map(|x| format!("p_ge_{x}")));
            let mut rows = Vec::new();
            for l in 0..c.depth {
                for h in 0..c.heads_per_block {
                    let mut vals = acc.values(l, h).unwrap_or(&[]).to_vec();
                    let s = survival_from_values(&mut vals, &grid)?;
                    let mut row = vec![l.to_string(), h.to_string()];
                    row.extend(s.into_iter().map(f));
                    rows.push(row);
                }
            }
            write_csv_records(&csv, &header, &rows)?;
            prov.notes.push(format!("{} images, mode {}", images.len(), mode.as_str()));
            write_json(&json, &Summary { provenance: &prov, result: serde_json::json!({ "grid": grid }) })?;
        }
        "active-heads" => {
            let t = traces(model, images, mode, seed)?;
            let act = activity(&t, cfg, false)?.activity(cfg.threshold);
            let rows: Vec<HeadRow> = act
                .iter()
                .map(|a| HeadRow {
                    layer: a.layer,
                    head: a.head,
                    active: a.active,
                    max_patch_kl: a.max_patch_kl,
                    mean_patch_kl: a.mean_patch_kl,
                    active_dims: a.active_dims(cfg.dim_threshold).len(),
                    dominant_dim: a.dominant_dim(cfg.dim_threshold),
                })
                .collect();
            write_csv(&csv, &rows)?;
            let active = act.iter().filter(|a| a.active).count();
            write_json(
                &json,
                &Summary {
                    provenance: &prov,
                    result: serde_json::json!({ "active": active, "total": act.len(), "heads": act }),
                },
            )?;
        }
        "voting" => {
            let t = traces(model, images, mode, seed)?;
            let rows = t
                .iter()
                .enumerate()
                .map(|(i, tr)| vote_stats(tr, i, Some(data.val.labels[i])))
                .collect::<Result<Vec<_>>>()?;
            write_csv(&csv, &rows)?;
            let n = rows.len() as f64;
            write_json(
                &json,
                &Summary {
                    provenance: &prov,
                    result: serde_json::json!({
                        "images": rows.len(),
                        "mean_effective_classes": rows.iter().map(|r| r.effective_classes).sum::<f64>() / n,
                        "mean_logit_range": rows.iter().map(|r| r.logit_range).sum::<f64>() / n,
                    }),
                },
            )?;
        }
        "jsd-select" => {
            let b = &ck_b.as_ref().expect("loaded above").model;
            let probs = |m: &ViTModel<f32>| -> Result<Vec<Vec<f64>>> {
                Ok(traces(m, images, mode, seed)?.iter().map(|t| softmax(&t.logits)).collect())
            };
            let mut rng = keyed_rng(seed, RngDomain::Analysis, 2 << 20, 0);
            let sel = jsd_select(&probs(model)?, &probs(b)?, cfg.fraction, cfg.select_count, &mut rng)?;
            let rows: Vec<JsdRow> = sel
                .distances
                .iter()
                .enumerate()
                .map(|(i, &d)| JsdRow {
                    image: i,
                    jsd: d,
                    rank: sel.top.iter().position(|&t| t == i),
                    sampled: sel.sampled.contains(&i),
                })
                .collect();
            write_csv(&csv, &rows)?;
            write_json(&json, &Summary { provenance: &prov, result: &sel })?;
        }
        "mi" => {
            let mi_images = take_images(&data.val.images, cfg.mi_images);
            let mut rows = Vec::new();
            for l in 0..c.depth {
                for h in 0..c.heads_per_block {
                    let ch = head_channel(model, mi_images, l, h, None)?;
                    let e = mi_monte_carlo(&ch, cfg.draws, seed ^ (l * c.heads_per_block + h) as u64)?;
                    rows.push(MiRow { layer: l, head: h, mi: e.value, stderr: e.stderr, items: e.items, draws: e.draws });
                }
            }
            write_csv(&csv, &rows)?;
            prov.notes.push(format!("items are (image, patch) pairs of {} images", mi_images.len()));
            write_json(&json, &Summary { provenance: &prov, result: serde_json::json!({ "upper_bound_nats": ((mi_images.len() * c.num_patches()) as f64).ln() }) })?;
        }
        "nmi" => {
            let b = &ck_b.as_ref().expect("loaded above").model;
            let t_a = traces(model, images, BottleneckMode::Mean, seed)?;
            let t_b = traces(b, images, BottleneckMode::Mean, seed)?;
            let act_a = activity(&t_a, cfg, false)?.activity(cfg.threshold);
            let act_b = activity(&t_b, cfg, false)?.activity(cfg.threshold);
            let mut pairs = Vec::new();
            for a in act_a.iter().filter(|a| a.active) {
                for bb in act_b.iter().filter(|x| x.active) {
                    if cfg.nmi_pairs == "all" || (a.layer, a.head) == (bb.layer, bb.head) {
                        pairs.push(((a.layer, a.head), (bb.layer, bb.head)));
                    }
                }
            }
            let mi_images = take_images(&data.val.images, cfg.mi_images);
            let mut rows = Vec::with_capacity(pairs.len());
            for (k, &((la, ha), (lb, hb))) in pairs.iter().enumerate() {
                let u = head_channel(model, mi_images, la, ha, None)?;
                let v = head_channel(b, mi_images, lb, hb, None)?;
                let row = match nmi_heads(&u, &v, cfg.draws, seed ^ k as u64) {
                    Ok(e) => NmiRow {
                        layer_a: la,
                        head_a: ha,
                        layer_b: lb,
                        head_b: hb,
                        nmi: Some(e.nmi),
                        stderr: Some(e.stderr),
                        shared: Some(e.shared),
                        mi_a: Some(e.mi_xu.value),
                        mi_b: Some(e.mi_xv.value),
                        note: String::new(),
                    },
                    Err(Error::UndefinedNmi(msg)) => NmiRow {
                        layer_a: la,
                        head_a: ha,
                        layer_b: lb,
                        head_b: hb,
                        nmi: None,
                        stderr: None,
                        shared: None,
                        mi_a: None,
                        mi_b: None,
                        note: msg,
                    },
                    Err(e) => return Err(e),
                };
                rows.push(row);
            }
            if rows.is_empty() {
                let header = ["layer_a", "head_a", "layer_b", "head_b", "nmi", "stderr", "shared", "mi_a", "mi_b", "note"];
                write_csv_records(&csv, &header.map(String::from), &[])?;
            } else {
                write_csv(&csv, &rows)?;
            }
            prov.notes.push(format!(
                "active heads at {} nats over {} images; items are (image, patch) pairs of {} images",
                cfg.threshold,
                images.len(),
                mi_images.len()
            ));
            write_json(&json, &Summary { provenance: &prov, result: serde_json::json!({ "pairs": rows.len() }) })?;
        }
        "probe" => {
            let t = traces(model, images, BottleneckMode::Mean, seed)?;
            let act = activity(&t, cfg, false)?.activity(cfg.dim_threshold);
            let (l, h) = pick_head(cfg, &act)?;
            let most = c.num_patches() - 1;
            let n_values: Vec<usize> = cfg.n_values.iter().map(|&n| n.min(most)).collect();
            if n_values != cfg.n_values {
                prov.notes.push(format!("copy counts above {most} were clamped to {most}"));
            }
            let r = repetition_probe(model, l, h, images, &n_values, cfg.samples, cfg.dim_threshold, seed)?;
            let header: Vec<String> = ["image", "patch", "n", "dim", "mu0", "displacement"].map(String::from).into();
            let mut rows = Vec::new();
            for s in &r.samples {
                for (k, &n) in r.n_values.iter().enumerate() {
                    for (j, &d) in r.active_dims.iter().enumerate() {
                        rows.push(vec![
                            s.image.to_string(),
                            s.patch.to_string(),
                            n.to_string(),
                            d.to_string(),
                            f(s.mu0[j]),
                            f(s.displacement[k][j]),
                        ]);
                    }
                }
            }
            write_csv_records(&csv, &header, &rows)?;
            let mean_abs: Vec<f64> = (0..r.n_values.len())
                .map(|k| {
                    let (sum, cnt) = r.samples.iter().fold((0.0, 0usize), |(s, c), x| {
                        (s + x.displacement[k].iter().map(|v| v.abs()).sum::<f64>(), c + x.displacement[k].len())
                    });
                    sum / cnt.max(1) as f64
                })
                .collect();
            write_json(
                &json,
                &Summary {
                    provenance: &prov,
                    result: serde_json::json!({
                        "layer": r.layer,
                        "head": r.head,
                        "active_dims": r.active_dims,
                        "n_values": r.n_values,
                        "samples": r.samples.len(),
                        "mean_abs_displacement": mean_abs,
                    }),
                },
            )?;
        }
        "top-patches" => {
            let t = traces(model, images, BottleneckMode::Mean, seed)?;
            let act = activity(&t, cfg, false)?.activity(cfg.dim_threshold);
            let (l, h) = pick_head(cfg, &act)?;
            let top = top_activating_patches(model, l, h, images, cfg.fraction, cfg.dim_threshold)?;
            let rows: Vec<TopRow> = [("positive", &top.positive), ("negative", &top.negative)]
                .into_iter()
                .flat_map(|(sign, v)| {
                    v.iter().enumerate().map(move |(rank, p)| TopRow {
                        sign,
                        rank,
                        image: p.image,
                        patch: p.patch,
                        kl: p.kl,
                        latent_mean: p.latent_mean,
                    })
                })
                .collect();
            write_csv(&csv, &rows)?;
            write_json(&json, &Summary { provenance: &prov, result: &top })?;
        }
        _ => unreachable!("checked against ANALYSES"),
    }
    println!("wrote {}", cfg.out_dir.join(name).display());
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    beta: f64,
    dir: String,
    val_acc_mean: f64,
    val_acc_std: f64,
    kl_per_image: f64,
    active_heads: usize,
    total_heads: usize,
}

/// One `run_train` per β into `out_dir/beta_<β>/`, plus `sweep.csv`.
pub fn run_sweep(cfg: &RunConfig) -> Result<()> {
    if cfg.betas.is_empty() {
        return Err(Error::Config("betas is empty".into()));
    }
    create_out_dir(&cfg.out_dir)?;
    let mut rows = Vec::new();
    for &beta in &cfg.betas {
        let mut run = cfg.clone();
        run.train.beta = beta;
        let dir = format!("beta_{beta}");
        run.out_dir = cfg.out_dir.join(&dir);
        eprintln!("== beta {beta}");
        let out = run_train(&run)?;
        rows.push(SweepRow {
            beta,
            dir,
            val_acc_mean: out.final_eval.acc_mean,
            val_acc_std: out.final_eval.acc_std,
            kl_per_image: out.final_eval.kl_per_image,
            active_heads: out.active_heads,
            total_heads: cfg.model.total_heads(),
        });
    }
    write_csv(&cfg.out_dir.join("sweep.csv"), &rows)?;
    let prov = provenance("sweep", cfg, &[], None);
    write_json(&cfg.out_dir.join("sweep.json"), &Summary { provenance: &prov, result: &rows.len() })
}
