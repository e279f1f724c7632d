//! Copy-paste probe: duplicates a patch into N other positions and measures
//! how one head's latent mean at the original patch moves.
//!
//! Usage: cargo run --release --example repetition_probe -- [checkpoint] [layer] [head]
//!
//! Without a checkpoint a short model is trained on synthetic data first.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vib_vit::analysis::{copy_paste_augment, count_identical_patches, repetition_probe};
use vib_vit::training::synthetic::synthetic_splits;
use vib_vit::training::{Checkpoint, TrainConfig, Trainer};
use vib_vit::vit::ViTConfig;

fn main() -> vib_vit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let data = synthetic_splits(500, 50, 0)?;
    let model = match args.first() {
        Some(p) => Checkpoint::load(&PathBuf::from(p))?.model,
        None => {
            let cfg = TrainConfig { epochs: 2, warmup_epochs: 1, beta: 0.01, ..TrainConfig::default() };
            let mut t = Trainer::new(ViTConfig::desk(), cfg)?;
            while !t.is_done() {
                let m = t.run_epoch(&data.train)?;
                println!("epoch {}: ce {:.3} kl {:.2}", m.epoch + 1, m.train_ce, m.train_kl);
            }
            t.model
        }
    };
    let layer: usize = args.get(1).map_or(0, |s| s.parse().expect("layer"));
    let head: usize = args.get(2).map_or(0, |s| s.parse().expect("head"));
    let config = model.config().clone();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (aug, targets) = copy_paste_augment(&data.val.images[0], &config, 9, 4, &mut rng)?;
    println!("patch 9 copied to {targets:?}: {} identical patches", count_identical_patches(&aug, &config, 9)?);

    let images = &data.val.images[..20];
    let n_values = [4, 16, config.num_patches() - 1];
    let r = repetition_probe(&model, layer, head, images, &n_values, 64, 1e-2, 0)?;
    println!("\nlayer {layer} head {head}: active latent dims {:?}", r.active_dims);
    for (k, n) in r.n_values.iter().enumerate() {
        let mean_abs = r
            .samples
            .iter()
            .flat_map(|s| s.displacement[k].iter())
            .map(|d| d.abs())
            .sum::<f64>()
            / (r.samples.len() * r.active_dims.len()) as f64;
        println!("  N = {n:>2}: mean |latent displacement| {mean_abs:.4}");
    }
    Ok(())
}
