//! Trains the desk model at one beta and prints the per-epoch log.
//!
//! Usage: cargo run --release --example train_beta -- [beta] [epochs] [train] [val] [stochastic|disabled] [augment|plain] [lr]
//!
//! Uses `$CIFAR10_DIR` when set, otherwise generates the synthetic shape
//! dataset in a temporary directory.

use std::env;
use std::path::PathBuf;

use vib_vit::training::{load_cifar10_subset, synthetic, EpochRecord, TrainConfig, Trainer};
use vib_vit::vib::BottleneckMode;
use vib_vit::vit::ViTConfig;

fn main() -> vib_vit::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let beta: f64 = arg(0, "0.1").parse().expect("beta");
    let epochs: usize = arg(1, "5").parse().expect("epochs");
    let n_train: usize = arg(2, "1000").parse().expect("train count");
    let n_val: usize = arg(3, "200").parse().expect("val count");
    let mode = BottleneckMode::parse(&arg(4, "stochastic"))?;
    let augment = arg(5, "augment") == "augment";
    let base_lr: f64 = arg(6, "1e-3").parse().expect("learning rate");

    let tmp = tempfile::tempdir()?;
    let dir = match env::var_os("CIFAR10_DIR") {
        Some(d) => PathBuf::from(d),
        None => {
            synthetic::write_synthetic_cifar10(tmp.path(), n_train, n_val, 0)?;
            tmp.path().to_path_buf()
        }
    };
    let data = load_cifar10_subset(&dir, Some(n_train), Some(n_val))?;

    let config = TrainConfig {
        beta,
        epochs,
        warmup_epochs: epochs.min(2),
        bottleneck: mode,
        eval_runs: 1,
        augment,
        base_lr,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(ViTConfig::desk(), config)?;
    println!("epoch  lr        ce      kl        train_acc  val_acc  val_kl");
    while !trainer.is_done() {
        let t = std::time::Instant::now();
        let m = trainer.run_epoch(&data.train)?;
        let v = trainer.evaluate(&data.val, 1)?;
        let r = EpochRecord::new(&m, &v);
        println!(
            "{:>5}  {:.2e}  {:.4}  {:>8.3}  {:.4}     {:.4}   {:.3}   ({:.0}s)",
            r.epoch,
            r.lr,
            r.train_ce,
            r.train_kl,
            r.train_acc,
            r.val_acc_mean,
            r.val_kl_per_image,
            t.elapsed().as_secs_f64()
        );
    }
    let e = trainer.evaluate(&data.val, 10)?;
    println!("final: val acc {:.4} ± {:.4}, KL/image {:.3}", e.acc_mean, e.acc_std, e.kl_per_image);
    let active = e.head_kl.iter().filter(|&&k| k > 1e-2).count();
    println!("head KL per image: {:?} ({active} heads above 1e-2 nats on average)", e.head_kl);
    Ok(())
}
