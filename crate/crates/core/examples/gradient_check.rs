//! Compares reverse-mode gradients of the bottlenecked training loss with
//! central differences, in f64, on a small random model.
//!
//! Usage: cargo run --release --example gradient_check -- [samples]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vib_vit::compute::{Tape, Tensor};
use vib_vit::vib::BottleneckMode;
use vib_vit::vit::{ViTConfig, ViTModel};

const BETA: f64 = 0.5;
const LABEL: usize = 2;
const NOISE_SEED: u64 = 17;

/// Loss and, when `grads` is set, every parameter gradient. The noise stream
/// is reseeded on each call so the bottleneck samples stay frozen.
fn loss(model: &ViTModel<f64>, image: &Tensor<f64>, grads: bool) -> vib_vit::Result<(f64, Vec<Tensor<f64>>)> {
    let mut tape = Tape::new();
    let vars = model.load(&mut tape, grads);
    let mut noise = ChaCha8Rng::seed_from_u64(NOISE_SEED);
    let g = model.forward_graph(&mut tape, &vars, image, BottleneckMode::Stochastic, Some(&mut noise))?;
    let ce = tape.cross_entropy(g.logits, LABEL)?;
    let kl = tape.scale(g.kl_total.expect("bottlenecks enabled"), BETA);
    let total = tape.add(ce, kl)?;
    let value = tape.value(total).item()?;
    if !grads {
        return Ok((value, Vec::new()));
    }
    let mut gr = tape.backward(total)?;
    let out = vars
        .as_slice()
        .iter()
        .zip(model.params())
        .map(|(&v, p)| gr.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape().to_vec())))
        .collect();
    Ok((value, out))
}

fn main() -> vib_vit::Result<()> {
    let samples: usize = std::env::args().nth(1).map_or(12, |s| s.parse().expect("sample count"));
    let config = ViTConfig {
        image_size: 16,
        patch_size: 4,
        embed_dim: 32,
        depth: 2,
        latent_dim: 8,
        ..ViTConfig::desk()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = ViTModel::<f64>::new(config.clone(), &mut rng)?;
    // larger weights than the initialisation so every path carries signal
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let image = Tensor::new(
        vec![config.channels, config.image_size, config.image_size],
        (0..config.image_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;

    let (value, grads) = loss(&model, &image, true)?;
    println!("loss {value:.6}, {} parameters", model.num_scalars());
    println!("{:<40} {:>14} {:>14} {:>10}", "parameter", "analytic", "numeric", "rel err");
    let h = 1e-5;
    for _ in 0..samples {
        let p = rng.random_range(0..model.params().len());
        let i = rng.random_range(0..model.params()[p].value.len());
        let x0 = model.params()[p].value.data()[i];
        model.params_mut()[p].value.data_mut()[i] = x0 + h;
        let up = loss(&model, &image, false)?.0;
        model.params_mut()[p].value.data_mut()[i] = x0 - h;
        let down = loss(&model, &image, false)?.0;
        model.params_mut()[p].value.data_mut()[i] = x0;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[p].data()[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-300);
        let name = format!("{}[{i}]", model.params()[p].name);
        println!("{name:<40} {analytic:>14.6e} {numeric:>14.6e} {rel:>10.2e}");
    }
    Ok(())
}
