//! One forward pass in each bottleneck mode, showing what a trace records:
//! logits, per-head KL, attention entropy and latent means.
//!
//! Usage: cargo run --release --example forward_trace

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vib_vit::training::synthetic::{synthetic_splits, SHAPE_NAMES};
use vib_vit::vib::BottleneckMode;
use vib_vit::vit::{ViTConfig, ViTModel};

fn main() -> vib_vit::Result<()> {
    let config = ViTConfig::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = ViTModel::<f32>::new(config.clone(), &mut rng)?;
    let data = synthetic_splits(10, 10, 0)?;
    let (image, label) = (&data.val.images[0], data.val.labels[0]);
    println!("image of a {} ({} patches of {} values)", SHAPE_NAMES[label], config.num_patches(), config.patch_dim());

    for mode in [BottleneckMode::Stochastic, BottleneckMode::Mean, BottleneckMode::PriorMean, BottleneckMode::Disabled] {
        let t = model.forward(image, mode, Some(&mut rng))?;
        let logits: Vec<String> = t.logits.iter().map(|v| format!("{v:+.3}")).collect();
        println!("\n{}: predicted {} logits [{}]", mode.as_str(), t.predicted_class(), logits.join(" "));
        println!("  total KL {:.4} nats", t.total_kl());
        for (k, kl) in t.head_kl_totals(config.heads_per_block, config.depth).iter().enumerate() {
            let (l, h) = (k / config.heads_per_block, k % config.heads_per_block);
            let attn = t.attention(l, h).expect("head exists");
            let n = attn.rows();
            let entropy: f64 = (0..n)
                .map(|i| attn.row(i).iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>())
                .sum::<f64>()
                / n as f64;
            let mu = t.latent_means(l, h).map(|m| m.data().iter().map(|v| v.abs()).sum::<f64>() / m.len() as f64);
            println!(
                "  layer {l} head {h}: KL {kl:.4}  attention entropy {entropy:.3} (uniform {:.3})  mean |mu| {}",
                (n as f64).ln(),
                mu.map_or("-".into(), |m| format!("{m:.4}"))
            );
        }
    }
    Ok(())
}
