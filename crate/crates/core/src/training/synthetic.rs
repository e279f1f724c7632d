//! Procedural ten-class image data in the CIFAR binary layout, used when no
//! real dataset directory is available.
//!
//! Each image holds one large shape drawn at a random position, size and slight
//! rotation, in a random foreground colour over a shaded, noisy background.
//! Classes: disk, ring, square, square outline, plus, diagonal cross,
//! horizontal bar, vertical bar, triangle, two dots. Half of the images use
//! a class-specific foreground colour, a weak cue readable from any single
//! patch; the shape itself spans many patches.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::data::{encode_cifar, ChannelStats, CifarRecords, CifarSplits, Dataset, Split, CIFAR_PIXELS, CIFAR_SIDE, CIFAR_TEST_FILE, CIFAR_TRAIN_FILES};
use crate::error::Result;

pub const SHAPE_NAMES: [&str; 10] = [
    "disk", "ring", "square", "outline", "plus", "cross", "hbar", "vbar", "triangle", "dots",
];

/// Foreground colour hinted for each class.
const PALETTE: [[f64; 3]; 10] = [
    [0.9, 0.15, 0.15],
    [0.15, 0.85, 0.2],
    [0.2, 0.25, 0.9],
    [0.9, 0.85, 0.15],
    [0.85, 0.2, 0.85],
    [0.15, 0.85, 0.85],
    [0.95, 0.55, 0.1],
    [0.55, 0.3, 0.1],
    [0.95, 0.95, 0.95],
    [0.05, 0.05, 0.05],
];

const TRAIN_STREAM: u64 = 1;
const VAL_STREAM: u64 = 2;

fn inside(class: u8, u: f64, v: f64) -> bool {
    let r = (u * u + v * v).sqrt();
    let m = u.abs().max(v.abs());
    let plus = |u: f64, v: f64| (u.abs() <= 0.25 && v.abs() <= 1.0) || (v.abs() <= 0.25 && u.abs() <= 1.0);
    match class {
        0 => r <= 1.0,
        1 => (0.55..=1.0).contains(&r),
        2 => m <= 0.8,
        3 => (0.5..=0.85).contains(&m),
        4 => plus(u, v),
        5 => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            plus(s * (u - v), s * (u + v))
        }
        6 => u.abs() <= 1.0 && v.abs() <= 0.28,
        7 => v.abs() <= 1.0 && u.abs() <= 0.28,
        8 => (-0.9..=0.8).contains(&v) && u.abs() <= (v + 0.9) / 1.7 * 0.95,
        _ => (u - 0.6).powi(2) + v * v <= 0.1225 || (u + 0.6).powi(2) + v * v <= 0.1225,
    }
}

fn colour(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)]
}

/// Renders one labelled image from its own rng.
pub fn render_shape(class: u8, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let side = CIFAR_SIDE as f64;
    let radius: f64 = rng.random_range(8.0..12.0);
    let cx = rng.random_range(radius + 1.0..side - radius - 1.0);
    let cy = rng.random_range(radius + 1.0..side - radius - 1.0);
    let angle = rng.random_range(-0.1..0.1f64);
    let (sa, ca) = angle.sin_cos();
    let hinted = rng.random_bool(0.5);
    let lum = |x: &[f64; 3]| (x[0] + x[1] + x[2]) / 3.0;
    let (fg, bg) = loop {
        let fg = if hinted {
            PALETTE[class as usize].map(|v| (v + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0))
        } else {
            colour(rng)
        };
        let bg = colour(rng);
        let dist: f64 = fg.iter().zip(&bg).map(|(a, b)| (a - b).abs()).sum();
        if dist >= 0.6 && (hinted || (lum(&fg) - lum(&bg)).abs() >= 0.2) {
            break (fg, bg);
        }
    };
    let grad_angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (gy, gx) = grad_angle.sin_cos();
    let grad_amp = rng.random_range(0.0..0.12);

    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut out = vec![0u8; CIFAR_PIXELS];
    for y in 0..CIFAR_SIDE {
        for x in 0..CIFAR_SIDE {
            let mut cover = 0.0;
            for (ox, oy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                let dx = x as f64 + ox - cx;
                let dy = y as f64 + oy - cy;
                let u = (ca * dx + sa * dy) / radius;
                let v = (-sa * dx + ca * dy) / radius;
                if inside(class, u, v) {
                    cover += 0.25;
                }
            }
            let shade = grad_amp * ((x as f64 / side - 0.5) * gx + (y as f64 / side - 0.5) * gy);
            for c in 0..3 {
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.05;
                let val = cover * fg[c] + (1.0 - cover) * (bg[c] + shade) + noise;
                out[c * plane + y * CIFAR_SIDE + x] = (val.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    out
}

/// `count` records with balanced, shuffled labels. `stream` separates
/// splits drawn from the same seed.
pub fn synthetic_records(count: usize, seed: u64, stream: u64) -> CifarRecords {
    let mut records = CifarRecords::default();
    let mut order = ChaCha8Rng::seed_from_u64(seed);
    order.set_stream(stream << 32);
    let mut labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
    for i in (1..labels.len()).rev() {
        labels.swap(i, order.random_range(0..=i));
    }
    for (i, &label) in labels.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((stream << 32) | (i as u64 + 1));
        records.push(label, &render_shape(label, &mut rng)).expect("valid record");
    }
    records
}

/// In-memory splits, normalised by the training records' statistics, equal
/// to loading the files [`write_synthetic_cifar10`] produces.
pub fn synthetic_splits(train: usize, val: usize, seed: u64) -> Result<CifarSplits> {
    let t = synthetic_records(train, seed, TRAIN_STREAM);
    let v = synthetic_records(val, seed, VAL_STREAM);
    let stats = ChannelStats::from_records(&t)?;
    Ok(CifarSplits {
        train: Dataset::from_records(&t, &stats, Split::Train)?,
        val: Dataset::from_records(&v, &stats, Split::Validation)?,
    })
}

/// Writes `data_batch_1.bin` and `test_batch.bin` into `dir`.
pub fn write_synthetic_cifar10(dir: &Path, train: usize, val: usize, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CIFAR_TRAIN_FILES[0]), encode_cifar(&synthetic_records(train, seed, TRAIN_STREAM)))?;
    fs::write(dir.join(CIFAR_TEST_FILE), encode_cifar(&synthetic_records(val, seed, VAL_STREAM)))?;
    Ok(())
}
