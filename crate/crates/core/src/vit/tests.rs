use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::compute::{Tape, Tensor};
use crate::error::Error;
use crate::vib::BottleneckMode;

fn small() -> ViTConfig {
    ViTConfig {
        image_size: 8,
        patch_size: 2,
        channels: 3,
        embed_dim: 16,
        depth: 2,
        heads_per_block: 2,
        mlp_ratio: 2,
        num_classes: 5,
        latent_dim: 8,
    }
}

/// Model with O(1) random weights so every pathway is exercised.
fn random_model(config: ViTConfig, seed: u64) -> ViTModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ViTModel::<f64>::zeros(config).unwrap();
    for p in m.params_mut() {
        let gain = p.name.ends_with("norm1.weight") || p.name.ends_with("norm2.weight") || p.name == "norm.weight";
        for v in p.value.data_mut() {
            *v = if gain { 1.0 + rng.random_range(-0.2..0.2) } else { rng.random_range(-0.4..0.4) };
        }
    }
    m
}

fn random_image(config: &ViTConfig, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let s = config.image_size;
    Tensor::new(
        vec![config.channels, s, s],
        (0..config.image_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

#[test]
fn config_validation() {
    assert!(ViTConfig::desk().validate().is_ok());
    assert!(ViTConfig::vit_tiny().validate().is_ok());
    let mut c = small();
    c.image_size = 9;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = small();
    c.heads_per_block = 3;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    assert_eq!(ViTConfig::desk().head_dim(), 32);
    assert_eq!(ViTConfig::desk().latent_dim, 32);
}

#[test]
fn patch_counts() {
    assert_eq!(ViTConfig::vit_tiny().num_patches(), 196);
    assert_eq!(ViTConfig::desk().num_patches(), 64);
    let tiny = ViTConfig::vit_tiny();
    let img = Tensor::<f32>::zeros(vec![3, 224, 224]);
    assert_eq!(patchify(&img, &tiny).unwrap().shape(), &[196, 768]);
    let desk = ViTConfig::desk();
    let img = Tensor::<f32>::zeros(vec![3, 32, 32]);
    assert_eq!(patchify(&img, &desk).unwrap().shape(), &[64, 48]);
    let wrong = Tensor::<f32>::zeros(vec![3, 30, 30]);
    assert!(patchify(&wrong, &desk).is_err());
}

#[test]
fn patchify_round_trip_and_layout() {
    let c = small();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = random_image(&c, &mut rng);
    let patches = patchify(&img, &c).unwrap();
    assert_eq!(unpatchify(&patches, &c).unwrap(), img);
    // patch 1 is the second patch in the top row: pixel (channel 0, y 0, x 2)
    assert_eq!(patches.row(1)[0], img.data()[2]);
    // first element of channel 1 inside patch 0
    assert_eq!(patches.row(0)[4], img.data()[64]);
}

#[test]
fn one_patch_count_for_parameter_layout() {
    let m = ViTModel::<f32>::zeros(ViTConfig::desk()).unwrap();
    let channels = m.params().iter().filter(|p| p.name.ends_with("vib.dec.weight")).count();
    assert_eq!(channels, 4 * 2);
    assert_eq!(m.param(m.layout().pos).shape(), &[64, 64]);
    let tiny = ViTModel::<f32>::zeros(ViTConfig::vit_tiny()).unwrap();
    let channels = tiny.params().iter().filter(|p| p.name.ends_with("vib.dec.weight")).count();
    assert_eq!(channels, 36);
}

#[test]
fn decay_exemptions() {
    let m = ViTModel::<f32>::zeros(ViTConfig::desk()).unwrap();
    for p in m.params() {
        let expected = p.name.ends_with(".bias") || p.value.rank() == 1 || p.name.contains(".vib.");
        assert_eq!(p.decay_exempt, expected, "{}", p.name);
    }
    let pos = m.find("pos_embed").unwrap();
    assert!(!m.params()[pos.0].decay_exempt);
    let pw = m.find("patch_embed.weight").unwrap();
    assert!(!m.params()[pw.0].decay_exempt);
}

#[test]
fn embed_examples() {
    let c = small();
    let m = random_model(c.clone(), 2);
    let mut tape = Tape::new();
    let vars = m.load(&mut tape, false);

    let mut m0 = m.clone();
    m0.set_param(m0.layout().patch_b, Tensor::zeros(vec![c.embed_dim])).unwrap();
    let mut tape0 = Tape::new();
    let vars0 = m0.load(&mut tape0, false);
    let zero = tape0.constant(Tensor::zeros(vec![c.num_patches(), c.patch_dim()]));
    let e = m0.embed(&mut tape0, &vars0, zero).unwrap();
    assert_eq!(tape0.value(e), m0.param(m0.layout().pos));
    assert_eq!(tape0.value(e).shape(), &[c.num_patches(), c.embed_dim]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let patch: Vec<f64> = (0..c.patch_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut data = vec![0.0; c.num_patches() * c.patch_dim()];
    data[..c.patch_dim()].copy_from_slice(&patch);
    data[5 * c.patch_dim()..6 * c.patch_dim()].copy_from_slice(&patch);
    let p = tape.constant(Tensor::new(vec![c.num_patches(), c.patch_dim()], data).unwrap());
    let e = m.embed(&mut tape, &vars, p).unwrap();
    let pos = m.param(m.layout().pos);
    for j in 0..c.embed_dim {
        let diff = tape.value(e).row(5)[j] - tape.value(e).row(0)[j];
        let pos_diff = pos.row(5)[j] - pos.row(0)[j];
        assert!((diff - pos_diff).abs() < 1e-12);
    }
}

#[test]
fn attention_single_patch_and_uniform_keys() {
    let mut c = small();
    c.image_size = 2;
    let m = random_model(c.clone(), 4);
    let mut tape = Tape::new();
    let vars = m.load(&mut tape, false);
    let x = tape.constant(Tensor::full(vec![1, c.embed_dim], 0.3));
    let (delta, attn) = m.attention_head_update(&mut tape, &vars, x, 0, 0).unwrap();
    assert_eq!(tape.value(attn).data(), &[1.0]);
    assert_eq!(tape.value(delta).shape(), &[1, c.head_dim()]);

    let c = small();
    let mut m = random_model(c.clone(), 5);
    let k_w = m.layout().blocks[1].heads[0].k_w;
    m.set_param(k_w, Tensor::zeros(vec![c.embed_dim, c.head_dim()])).unwrap();
    let mut tape = Tape::new();
    let vars = m.load(&mut tape, false);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = c.num_patches();
    let x = tape.constant(
        Tensor::new(vec![n, c.embed_dim], (0..n * c.embed_dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
    );
    let (_, attn) = m.attention_head_update(&mut tape, &vars, x, 1, 0).unwrap();
    for &a in tape.value(attn).data() {
        assert!((a - 1.0 / n as f64).abs() < 1e-12);
    }
    let (_, attn) = m.attention_head_update(&mut tape, &vars, x, 1, 1).unwrap();
    for r in 0..n {
        assert!((tape.value(attn).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn mlp_is_pointwise() {
    let c = small();
    let m = random_model(c.clone(), 7);
    let n = c.num_patches();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base: Vec<f64> = (0..n * c.embed_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut perturbed = base.clone();
    for v in &mut perturbed[3 * c.embed_dim..4 * c.embed_dim] {
        *v += 0.7;
    }
    let run = |data: Vec<f64>| {
        let mut tape = Tape::new();
        let vars = m.load(&mut tape, false);
        let x = tape.constant(Tensor::new(vec![n, c.embed_dim], data).unwrap());
        let y = m.mlp_block(&mut tape, &vars, x, 0).unwrap();
        tape.value(y).clone()
    };
    let (a, b) = (run(base.clone()), run(perturbed));
    assert_eq!(a.shape(), &[n, c.embed_dim]);
    for i in 0..n {
        if i == 3 {
            assert_ne!(a.row(i), b.row(i));
        } else {
            assert_eq!(a.row(i), b.row(i));
        }
    }

    let mut z = m.clone();
    let blk = z.layout().blocks[0].clone();
    z.set_param(blk.fc2_w, Tensor::zeros(vec![c.embed_dim * c.mlp_ratio, c.embed_dim])).unwrap();
    z.set_param(blk.fc2_b, Tensor::zeros(vec![c.embed_dim])).unwrap();
    let mut tape = Tape::new();
    let vars = z.load(&mut tape, false);
    let x = tape.constant(Tensor::new(vec![n, c.embed_dim], base.clone()).unwrap());
    let y = z.mlp_block(&mut tape, &vars, x, 0).unwrap();
    assert_eq!(tape.value(y).data(), &base[..]);
}

#[test]
fn gap_classify_examples() {
    let c = small();
    let m = random_model(c.clone(), 9);
    let n = c.num_patches();
    let r: Vec<f64> = (0..c.embed_dim).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut tape = Tape::new();
    let vars = m.load(&mut tape, false);
    let x = tape.constant(Tensor::new(vec![n, c.embed_dim], r.repeat(n)).unwrap());
    let (logits, per_patch) = m.gap_classify(&mut tape, &vars, x).unwrap();
    let w = m.param(m.layout().head_w);
    let b = m.param(m.layout().head_b);
    for i in 0..n {
        assert_eq!(tape.value(per_patch).row(i), tape.value(per_patch).row(0));
    }
    for k in 0..c.num_classes {
        let expected: f64 = (0..c.embed_dim).map(|j| r[j] * w.data()[j * c.num_classes + k]).sum::<f64>() + b.data()[k];
        assert!((tape.value(logits).data()[k] - expected).abs() < 1e-12);
    }

    let zero = tape.constant(Tensor::zeros(vec![n, c.embed_dim]));
    let (logits, _) = m.gap_classify(&mut tape, &vars, zero).unwrap();
    assert_eq!(tape.value(logits).data(), b.data());
}

/// The transformer assembled by hand from the same primitives, with no
/// bottleneck code on the path.
fn bottleneck_free_forward(m: &ViTModel<f64>, image: &Tensor<f64>) -> Vec<f64> {
    let c = m.config();
    let l = m.layout();
    let mut tape = Tape::new();
    let v = m.load(&mut tape, false);
    let p = tape.constant(patchify(image, c).unwrap());
    let mut x = m.embed(&mut tape, &v, p).unwrap();
    for (layer, b) in l.blocks.iter().enumerate() {
        let h = tape.layer_norm(x, v[b.ln1_g], v[b.ln1_b], LAYER_NORM_EPS).unwrap();
        let outs: Vec<_> = (0..c.heads_per_block)
            .map(|head| m.attention_head_update(&mut tape, &v, h, layer, head).unwrap().0)
            .collect();
        let cat = tape.concat_cols(&outs).unwrap();
        let u = tape.matmul(cat, v[b.out_w]).unwrap();
        let u = tape.add_row(u, v[b.out_b]).unwrap();
        x = tape.add(x, u).unwrap();
        x = m.mlp_block(&mut tape, &v, x, layer).unwrap();
    }
    let f = tape.layer_norm(x, v[l.norm_g], v[l.norm_b], LAYER_NORM_EPS).unwrap();
    let (logits, _) = m.gap_classify(&mut tape, &v, f).unwrap();
    tape.value(logits).data().to_vec()
}

#[test]
fn disabled_mode_matches_bottleneck_free_forward_exactly() {
    let c = small();
    let m = random_model(c.clone(), 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let img = random_image(&c, &mut rng);
        let t = m.forward(&img, BottleneckMode::Disabled, None).unwrap();
        assert_eq!(t.logits, bottleneck_free_forward(&m, &img));
        assert_eq!(t.total_kl(), 0.0);
        assert!(t.head_latent_means.is_empty());
        assert_eq!(t.kl_records.len(), c.total_heads() * c.num_patches());
    }
}

#[test]
fn prior_mean_mode_is_patch_local() {
    let c = small();
    let m = random_model(c.clone(), 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let img = random_image(&c, &mut rng);
    let base = m.forward(&img, BottleneckMode::PriorMean, None).unwrap();
    for target in [0usize, 6, 15] {
        let mut patches = patchify(&img, &c).unwrap();
        let pd = c.patch_dim();
        for v in &mut patches.data_mut()[target * pd..(target + 1) * pd] {
            *v += rng.random_range(-1.0..1.0);
        }
        let img2 = unpatchify(&patches, &c).unwrap();
        let t = m.forward(&img2, BottleneckMode::PriorMean, None).unwrap();
        for i in 0..c.num_patches() {
            if i == target {
                assert_ne!(t.final_stream.row(i), base.final_stream.row(i));
            } else {
                assert_eq!(t.final_stream.row(i), base.final_stream.row(i), "patch {i}");
            }
        }
    }
    // Mean mode does communicate.
    let mut patches = patchify(&img, &c).unwrap();
    patches.data_mut()[0] += 1.0;
    let img2 = unpatchify(&patches, &c).unwrap();
    let a = m.forward(&img, BottleneckMode::Mean, None).unwrap();
    let b = m.forward(&img2, BottleneckMode::Mean, None).unwrap();
    assert_ne!(a.final_stream.row(5), b.final_stream.row(5));
}

#[test]
fn mean_mode_is_deterministic_and_stochastic_needs_rng() {
    let c = small();
    let m = random_model(c.clone(), 14);
    let img = random_image(&c, &mut ChaCha8Rng::seed_from_u64(15));
    let a = m.forward(&img, BottleneckMode::Mean, Some(&mut ChaCha8Rng::seed_from_u64(1))).unwrap();
    let b = m.forward(&img, BottleneckMode::Mean, Some(&mut ChaCha8Rng::seed_from_u64(2))).unwrap();
    assert_eq!(a, b);
    assert!(matches!(m.forward(&img, BottleneckMode::Stochastic, None), Err(Error::Usage(_))));
    let s1 = m.forward(&img, BottleneckMode::Stochastic, Some(&mut ChaCha8Rng::seed_from_u64(1))).unwrap();
    let s2 = m.forward(&img, BottleneckMode::Stochastic, Some(&mut ChaCha8Rng::seed_from_u64(2))).unwrap();
    assert_ne!(s1.logits, s2.logits);
    // KL depends only on the posterior parameters, not the sample.
    assert_eq!(s1.kl_records[0].kl_nats, a.kl_records[0].kl_nats);
}

#[test]
fn trace_invariants() {
    let c = small();
    let m = random_model(c.clone(), 16);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let b = m.param(m.layout().head_b).clone();
    for _ in 0..5 {
        let img = random_image(&c, &mut rng);
        let t = m.forward(&img, BottleneckMode::Stochastic, Some(&mut rng)).unwrap();
        for a in &t.attention_maps {
            for r in 0..c.num_patches() {
                assert!((a.value.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-5);
            }
        }
        for k in 0..c.num_classes {
            let mean = (0..c.num_patches()).map(|i| t.per_patch_logits.row(i)[k]).sum::<f64>() / c.num_patches() as f64;
            assert!((mean - (t.logits[k] - b.data()[k])).abs() < 1e-5);
        }
        for r in &t.kl_records {
            assert!(r.kl_nats >= 0.0);
            assert!((r.kl_nats - r.per_dim_kl.iter().sum::<f64>()).abs() < 1e-6);
        }
    }
}

#[test]
fn single_patch_image_runs_end_to_end() {
    let mut c = small();
    c.image_size = 2;
    let m = random_model(c.clone(), 18);
    let img = random_image(&c, &mut ChaCha8Rng::seed_from_u64(19));
    for mode in [BottleneckMode::Stochastic, BottleneckMode::Mean, BottleneckMode::PriorMean, BottleneckMode::Disabled] {
        let t = m.forward(&img, mode, Some(&mut ChaCha8Rng::seed_from_u64(0))).unwrap();
        assert_eq!(t.logits.len(), c.num_classes);
        assert_eq!(t.attention_maps[0].value.data(), &[1.0]);
    }
}

#[test]
fn permutation_equivariance() {
    let c = small();
    let m = random_model(c.clone(), 20);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let img = random_image(&c, &mut rng);
    let n = c.num_patches();
    let perm: Vec<usize> = {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            p.swap(i, rng.random_range(0..=i));
        }
        p
    };
    let patches = patchify(&img, &c).unwrap();
    let pd = c.patch_dim();
    let mut permuted = vec![0.0; patches.len()];
    for (i, &src) in perm.iter().enumerate() {
        permuted[i * pd..(i + 1) * pd].copy_from_slice(patches.row(src));
    }
    let img2 = unpatchify(&Tensor::new(vec![n, pd], permuted).unwrap(), &c).unwrap();
    let mut m2 = m.clone();
    let pos = m.param(m.layout().pos).clone();
    let d = c.embed_dim;
    let mut pos2 = vec![0.0; pos.len()];
    for (i, &src) in perm.iter().enumerate() {
        pos2[i * d..(i + 1) * d].copy_from_slice(pos.row(src));
    }
    m2.set_param(m.layout().pos, Tensor::new(vec![n, d], pos2).unwrap()).unwrap();

    let a = m.forward(&img, BottleneckMode::Mean, None).unwrap();
    let b = m2.forward(&img2, BottleneckMode::Mean, None).unwrap();
    for (i, &src) in perm.iter().enumerate() {
        for (x, y) in b.final_stream.row(i).iter().zip(a.final_stream.row(src)) {
            assert!((x - y).abs() < 1e-5);
        }
    }
    for (x, y) in a.logits.iter().zip(&b.logits) {
        assert!((x - y).abs() < 1e-5);
    }
}
