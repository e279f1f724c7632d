use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vib_vit::cli::{run_analyze, run_eval, run_sweep, run_train, RunConfig};
use vib_vit::training::{read_run_log, Checkpoint};
use vib_vit::vib::BottleneckMode;

const SMALL: [&str; 7] = [
    "synthetic_train=64",
    "synthetic_val=32",
    "epochs=1",
    "warmup_epochs=0",
    "batch_size=16",
    "eval_runs=3",
    "images=8",
];

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vib-vit"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn small(out: &Path, extra: &[&str]) -> RunConfig {
    let mut c = RunConfig::resolve(None, &SMALL).unwrap();
    c.out_dir = out.to_path_buf();
    c.apply_overrides(extra).unwrap();
    c.validate().unwrap();
    c
}

#[test]
fn smoke_train_writes_loadable_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["--threads", "1", "train", "out_dir=run"];
    args.extend(SMALL);
    let out = bin(tmp.path(), &args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ck = Checkpoint::load(&tmp.path().join("run/checkpoint.bin")).unwrap();
    assert_eq!(ck.epoch, 1);
    let log = read_run_log(&tmp.path().join("run/epochs.csv")).unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].epoch, 1);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("run/train.json")).unwrap()).unwrap();
    assert_eq!(json["provenance"]["seed"], 0);
    assert_eq!(json["provenance"]["config"]["epochs"], "1");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(bin(tmp.path(), &["train", "beta=-1"]).status.code(), Some(2));
    assert_eq!(bin(tmp.path(), &["train", "no_such_key=1"]).status.code(), Some(2));
    assert_eq!(bin(tmp.path(), &["eval", "checkpoint=missing.bin"]).status.code(), Some(2));
    assert_eq!(bin(tmp.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(tmp.path(), &[]).status.code(), Some(2));
    assert_eq!(bin(tmp.path(), &["--threads", "0", "print-config"]).status.code(), Some(2));
    let out = bin(tmp.path(), &["analyze", "bogus", "checkpoint=missing.bin"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in vib_vit::cli::ANALYSES {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn print_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(tmp.path(), &["--print-config"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut c = RunConfig::default();
    c.apply_text(&text, "stdout").unwrap();
    assert_eq!(c, RunConfig::default());

    fs::write(tmp.path().join("run.cfg"), "beta = 0.25\nepochs = 7\n").unwrap();
    let out = bin(tmp.path(), &["--config", "run.cfg", "print-config", "epochs=9"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("beta = 0.25\n"));
    assert!(text.contains("epochs = 9\n"));
}

#[test]
fn eval_matches_training_and_mean_mode_has_no_spread() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), &["beta=0.1"]);
    let trained = run_train(&cfg).unwrap();
    let mut e = cfg.clone();
    e.checkpoint = Some(trained.checkpoint.clone());
    let m = run_eval(&e).unwrap();
    assert!((m.acc_mean - trained.final_eval.acc_mean).abs() <= 1e-6);
    assert!((m.acc_std - trained.final_eval.acc_std).abs() <= 1e-6);
    assert!((m.kl_per_image - trained.final_eval.kl_per_image).abs() <= 1e-6);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("eval.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["head_kl"].as_array().unwrap().len(), cfg.model.total_heads());

    e.eval_mode = Some(BottleneckMode::Mean);
    let mean = run_eval(&e).unwrap();
    assert_eq!(mean.acc_std, 0.0);

    let mut wrong = e.clone();
    wrong.model.depth = 2;
    assert_eq!(run_eval(&wrong).unwrap_err().exit_code(), 2);
}

#[test]
fn analyses_write_expected_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(&tmp.path().join("train"), &["beta=0"]);
    let trained = run_train(&cfg).unwrap();
    // one short epoch leaves the posteriors near the prior; widen the encoder
    // means so every channel carries information
    let mut ck = Checkpoint::load(&trained.checkpoint).unwrap();
    for p in ck.model.params_mut() {
        if p.name.ends_with("vib.enc_mu.weight") {
            for v in p.value.data_mut() {
                *v *= 40.0;
            }
        }
    }
    let informative = tmp.path().join("informative.bin");
    ck.save(&informative).unwrap();
    let mut a = small(&tmp.path().join("analysis"), &["mi_images=2", "draws=20000", "samples=4"]);
    a.checkpoint = Some(informative.clone());
    a.checkpoint_b = Some(informative);
    let dir = &a.out_dir;

    run_analyze(&a, "survival").unwrap();
    let rows = fs::read_to_string(dir.join("survival.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + a.model.depth * a.model.heads_per_block);

    run_analyze(&a, "voting").unwrap();
    let voting = fs::read_to_string(dir.join("voting.csv")).unwrap();
    let header = voting.lines().next().unwrap();
    assert!(header.contains("effective_classes") && header.contains("logit_range"));
    assert_eq!(voting.lines().count(), 1 + 8);

    run_analyze(&a, "kl-map").unwrap();
    assert_eq!(fs::read_to_string(dir.join("kl-map.csv")).unwrap().lines().count(), a.model.grid_side());

    run_analyze(&a, "nmi").unwrap();
    let mut r = csv::Reader::from_path(dir.join("nmi.csv")).unwrap();
    let mut pairs = 0;
    for rec in r.deserialize::<std::collections::HashMap<String, String>>() {
        let rec = rec.unwrap();
        assert_eq!(rec["layer_a"], rec["layer_b"]);
        assert_eq!(rec["head_a"], rec["head_b"]);
        if let (Ok(nmi), Ok(se)) = (rec["nmi"].parse::<f64>(), rec["stderr"].parse::<f64>()) {
            assert!((nmi - 1.0).abs() <= se, "self NMI {nmi} +- {se}");
            pairs += 1;
        }
    }
    assert!(pairs > 0, "no defined self pair");

    run_analyze(&a, "jsd-select").unwrap();
    let sel: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("jsd-select.json")).unwrap()).unwrap();
    assert!(sel["result"]["distances"].as_array().unwrap().iter().all(|d| d.as_f64().unwrap().abs() < 1e-9));

    let mut missing = a.clone();
    missing.checkpoint_b = None;
    assert_eq!(run_analyze(&missing, "nmi").unwrap_err().exit_code(), 2);
}

#[test]
fn sweep_writes_one_directory_per_beta() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), &["betas=0,1", "synthetic_train=32", "synthetic_val=16"]);
    run_sweep(&cfg).unwrap();
    assert!(tmp.path().join("beta_0/checkpoint.bin").exists());
    assert!(tmp.path().join("beta_1/epochs.csv").exists());
    let table = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}
