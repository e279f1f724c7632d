//! Patch voting: each patch's classifier contribution is a vote. Prints the
//! effective number of classes voted for and the logit range per image,
//! and ranks images by the prediction distance between two models.
//!
//! Usage: cargo run --release --example voting_stats

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vib_vit::analysis::{jsd_select, softmax, vote_stats};
use vib_vit::training::synthetic::{synthetic_splits, SHAPE_NAMES};
use vib_vit::training::{TrainConfig, Trainer};
use vib_vit::vib::BottleneckMode;
use vib_vit::vit::ViTConfig;

fn main() -> vib_vit::Result<()> {
    let data = synthetic_splits(1000, 40, 0)?;
    let mut models = Vec::new();
    for beta in [0.0, 1.0] {
        let cfg = TrainConfig { beta, epochs: 3, warmup_epochs: 1, ..TrainConfig::default() };
        let mut t = Trainer::new(ViTConfig::desk(), cfg)?;
        while !t.is_done() {
            t.run_epoch(&data.train)?;
        }
        let e = t.evaluate(&data.val, 1)?;
        println!("beta {beta}: val acc {:.3}, KL/image {:.2}", e.acc_mean, e.kl_per_image);
        models.push(t.model);
    }

    println!("\n{:>5} {:>9} {:>9} {:>10} {:>12} {:>10}", "image", "label", "predicted", "eff. cls", "logit range", "agreement");
    let mut probs = vec![Vec::new(), Vec::new()];
    for (i, image) in data.val.images.iter().enumerate() {
        for (m, p) in models.iter().zip(&mut probs) {
            p.push(softmax(&m.forward(image, BottleneckMode::Mean, None)?.logits));
        }
        if i < 10 {
            let t = models[0].forward(image, BottleneckMode::Mean, None)?;
            let s = vote_stats(&t, i, Some(data.val.labels[i]))?;
            println!(
                "{:>5} {:>9} {:>9} {:>10.3} {:>12.3} {:>10.3}",
                i,
                SHAPE_NAMES[data.val.labels[i]],
                SHAPE_NAMES[s.predicted],
                s.effective_classes,
                s.logit_range,
                s.prediction_agreement
            );
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let sel = jsd_select(&probs[0], &probs[1], 0.1, 3, &mut rng)?;
    println!("\nlargest prediction distance between beta 0 and beta 1:");
    for &i in &sel.top {
        println!("  image {i:>3} ({}): {:.4}", SHAPE_NAMES[data.val.labels[i]], sel.distances[i]);
    }
    println!("sampled for inspection: {:?}", sel.sampled);
    Ok(())
}
