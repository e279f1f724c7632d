use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then cosine decay
/// to 0 at `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, warmup_steps: usize, base_lr: f64) -> Result<f64> {
    if warmup_steps > total_steps {
        return Err(Error::Config(format!(
            "warmup_steps {warmup_steps} exceeds total_steps {total_steps}"
        )));
    }
    if step > total_steps {
        return Err(Error::Usage(format!("step {step} beyond total_steps {total_steps}")));
    }
    if step < warmup_steps {
        return Ok(base_lr * step as f64 / warmup_steps as f64);
    }
    let decay = total_steps - warmup_steps;
    if decay == 0 {
        return Ok(base_lr);
    }
    let t = (step - warmup_steps) as f64 / decay as f64;
    Ok(0.5 * base_lr * (1.0 + (PI * t).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(lr_schedule(100, 1000, 100, 6e-4).unwrap(), 6e-4);
        assert!(lr_schedule(1000, 1000, 100, 6e-4).unwrap().abs() < 1e-20);
        assert!((lr_schedule(50, 1000, 100, 6e-4).unwrap() - 3e-4).abs() < 1e-18);
        assert_eq!(lr_schedule(0, 1000, 100, 6e-4).unwrap(), 0.0);
        assert_eq!(lr_schedule(0, 1000, 0, 6e-4).unwrap(), 6e-4);
        assert!((lr_schedule(550, 1000, 100, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(lr_schedule(0, 10, 11, 1.0), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn bounded_and_monotone_after_warmup(total in 1usize..500, wfrac in 0.0f64..1.0, base in 1e-5f64..1.0) {
            let warmup = ((total as f64) * wfrac) as usize;
            let mut prev = f64::INFINITY;
            for s in 0..=total {
                let lr = lr_schedule(s, total, warmup, base).unwrap();
                prop_assert!(lr >= 0.0 && lr <= base * (1.0 + 1e-12));
                if s >= warmup {
                    prop_assert!(lr <= prev + 1e-15);
                    prev = lr;
                }
            }
        }
    }
}
