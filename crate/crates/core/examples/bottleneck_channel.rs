//! A single bottleneck channel in isolation: encode an update vector,
//! sample, decode, and watch the KL cost shrink as the encoder's log-sigma
//! bias moves toward the prior.
//!
//! Usage: cargo run --release --example bottleneck_channel

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vib_vit::vib::{bottleneck_apply, encode, kl_diag_gaussian, BottleneckChannel, BottleneckMode};

fn main() -> vib_vit::Result<()> {
    let (head_dim, latent) = (8, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let delta: Vec<f64> = (0..head_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut ch = BottleneckChannel::<f64>::zeros(head_dim, latent);
    for v in ch.enc_mu_w.data_mut().iter_mut().chain(ch.dec_w.data_mut()) {
        *v = rng.random_range(-0.5..0.5);
    }

    println!("{:>14} {:>10} {:>10} {:>12}", "log-sigma bias", "KL nats", "sigma", "|delta_hat|");
    for bias in [-4.0, -2.0, -1.0, -0.5, 0.0] {
        for v in ch.enc_log_sigma_b.data_mut() {
            *v = bias;
        }
        let (mu, sigma) = encode(&delta, &ch)?;
        let (kl, _) = kl_diag_gaussian(&mu, &sigma)?;
        let out = bottleneck_apply(&delta, &ch, BottleneckMode::Stochastic, Some(&mut rng))?;
        let norm = out.delta_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("{bias:>14.1} {kl:>10.4} {:>10.4} {norm:>12.4}", sigma[0]);
    }

    println!("\nmodes with log-sigma bias 0:");
    for mode in [BottleneckMode::Mean, BottleneckMode::PriorMean, BottleneckMode::Disabled] {
        let out = bottleneck_apply(&delta, &ch, mode, None)?;
        let first: Vec<String> = out.delta_hat.iter().take(4).map(|v| format!("{v:+.3}")).collect();
        println!("  {:<10} KL {:.4}  delta_hat[..4] [{}]", mode.as_str(), out.kl_nats, first.join(" "));
    }
    Ok(())
}
