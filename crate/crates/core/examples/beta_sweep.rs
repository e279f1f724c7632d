//! Trains the same model at several betas through the CLI layer and prints
//! the resulting accuracy / KL table. Each run lands in its own
//! `beta_<b>/` directory with a checkpoint, epoch log and summary.
//!
//! Usage: cargo run --release --example beta_sweep -- [out_dir] [key=value ...]
//!
//! Defaults to a short run (3 epochs, 1000 synthetic training images); pass
//! e.g. `epochs=20 synthetic_train=5000` for the full desk setting.

use std::path::PathBuf;

use vib_vit::cli::{run_sweep, RunConfig};

fn main() -> vib_vit::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| PathBuf::from("runs/sweep"), PathBuf::from);
    let overrides: Vec<String> = args.collect();
    let mut cfg = RunConfig::resolve(
        None,
        &["epochs=3", "warmup_epochs=1", "synthetic_train=1000", "synthetic_val=200", "eval_runs=3", "betas=0,0.1,10"],
    )?;
    cfg.apply_overrides(&overrides)?;
    cfg.out_dir = out.clone();
    cfg.validate()?;
    run_sweep(&cfg)?;
    print!("{}", std::fs::read_to_string(out.join("sweep.csv"))?);
    Ok(())
}
