use crate::compute::Tensor;
use crate::error::{dim_err, Result};
use crate::vit::ViTModel;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// AdamW moments for every model parameter, in parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
    pub decay_exempt: Vec<bool>,
}

impl OptimizerState {
    pub fn new(model: &ViTModel<f32>) -> Self {
        let zeros = || model.params().iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        OptimizerState {
            step: 0,
            m: zeros(),
            v: zeros(),
            decay_exempt: model.params().iter().map(|p| p.decay_exempt).collect(),
        }
    }

    fn check(&self, model: &ViTModel<f32>, grads: &[Tensor<f32>]) -> Result<()> {
        let params = model.params();
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(dim_err!(
                "{} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            ));
        }
        for (i, p) in params.iter().enumerate() {
            let shape = p.value.shape();
            if grads[i].shape() != shape || self.m[i].shape() != shape || self.v[i].shape() != shape {
                return Err(dim_err!("shape mismatch for {}", p.name));
            }
        }
        Ok(())
    }
}

/// One AdamW update: decoupled decay `p *= 1 - lr*wd` on non-exempt
/// parameters, then the bias-corrected Adam step.
pub fn adamw_step(
    model: &mut ViTModel<f32>,
    grads: &[Tensor<f32>],
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    state.check(model, grads)?;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    let decay = 1.0 - lr * weight_decay;
    for (i, p) in model.params_mut().iter_mut().enumerate() {
        let exempt = state.decay_exempt[i];
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.value.data_mut().iter_mut().enumerate() {
            let gj = g[j] as f64;
            let mj = ADAM_BETA1 * m[j] as f64 + (1.0 - ADAM_BETA1) * gj;
            let vj = ADAM_BETA2 * v[j] as f64 + (1.0 - ADAM_BETA2) * gj * gj;
            m[j] = mj as f32;
            v[j] = vj as f32;
            let mut x = *w as f64;
            if !exempt {
                x *= decay;
            }
            x -= lr * (mj / bc1) / ((vj / bc2).sqrt() + ADAM_EPS);
            *w = x as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vit::ViTConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ViTModel<f32> {
        let c = ViTConfig {
            image_size: 4,
            patch_size: 2,
            channels: 1,
            embed_dim: 8,
            depth: 1,
            heads_per_block: 2,
            mlp_ratio: 2,
            num_classes: 3,
            latent_dim: 4,
        };
        ViTModel::new(c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    fn zero_grads(m: &ViTModel<f32>) -> Vec<Tensor<f32>> {
        m.params().iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect()
    }

    #[test]
    fn zero_gradient_decays_only_non_exempt() {
        let mut m = tiny();
        let before = m.clone();
        let mut st = OptimizerState::new(&m);
        let g = zero_grads(&m);
        adamw_step(&mut m, &g, &mut st, 0.1, 0.5).unwrap();
        for (a, b) in before.params().iter().zip(m.params()) {
            for (x, y) in a.value.data().iter().zip(b.value.data()) {
                if a.decay_exempt {
                    assert_eq!(x, y, "{}", a.name);
                } else {
                    assert_eq!(*y, (*x as f64 * 0.95) as f32, "{}", a.name);
                }
            }
        }
    }

    #[test]
    fn bottleneck_params_frozen_under_zero_gradients() {
        let mut m = tiny();
        let before = m.clone();
        let mut st = OptimizerState::new(&m);
        for _ in 0..25 {
            let g = zero_grads(&m);
            adamw_step(&mut m, &g, &mut st, 1e-2, 0.05).unwrap();
        }
        for (a, b) in before.params().iter().zip(m.params()) {
            if a.name.contains(".vib.") {
                assert_eq!(a.value, b.value);
            }
        }
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        let mut m = tiny();
        let before = m.clone();
        let mut st = OptimizerState::new(&m);
        let ones: Vec<_> = m.params().iter().map(|p| Tensor::full(p.value.shape().to_vec(), 1.0f32)).collect();
        let lr = 1e-3;
        adamw_step(&mut m, &ones, &mut st, lr, 0.0).unwrap();
        for (a, b) in before.params().iter().zip(m.params()) {
            for (x, y) in a.value.data().iter().zip(b.value.data()) {
                let step = *x as f64 - *y as f64;
                // f32 storage bounds how well the step can be resolved
                let tol = lr * 1e-6 + (x.abs() as f64 + 1.0) * f32::EPSILON as f64;
                assert!((step - lr).abs() <= tol, "{} {step}", a.name);
            }
        }
        assert_eq!(st.step, 1);
        assert!((st.m[0].data()[0] - 0.1).abs() < 1e-7);
    }

    #[test]
    fn first_step_unrounded_update() {
        // m_hat = v_hat = 1, so the update is lr / (1 + eps)
        let g = 1.0f64;
        let m = (1.0 - ADAM_BETA1) * g;
        let v = (1.0 - ADAM_BETA2) * g * g;
        let upd = 1e-3 * (m / (1.0 - ADAM_BETA1)) / ((v / (1.0 - ADAM_BETA2)).sqrt() + ADAM_EPS);
        assert!(((upd - 1e-3) / 1e-3).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        let mut m = tiny();
        let mut st = OptimizerState::new(&m);
        let mut g = zero_grads(&m);
        g.pop();
        assert!(adamw_step(&mut m, &g, &mut st, 0.1, 0.0).is_err());
    }
}
