use rand::Rng;

use crate::compute::Tensor;
use crate::error::{dim_err, Result};

pub const CROP_SCALE: (f64, f64) = (0.08, 1.0);
pub const CROP_ASPECT: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);

/// A crop box in pixel coordinates plus the flip decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropSpec {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    pub flip: bool,
}

/// Test hooks pinning parts of the random draw.
#[derive(Clone, Copy, Debug, Default)]
pub struct AugmentOverrides {
    pub scale: Option<f64>,
    pub aspect: Option<f64>,
    pub flip: Option<bool>,
}

/// Draws a random resized crop for an `h x w` image: area fraction uniform
/// in [`CROP_SCALE`], aspect log-uniform in [`CROP_ASPECT`], ten attempts
/// before falling back to the largest centred crop within the aspect range.
pub fn sample_crop<R: Rng + ?Sized>(rng: &mut R, h: usize, w: usize, hooks: &AugmentOverrides) -> CropSpec {
    let area = (h * w) as f64;
    let (la, lb) = (CROP_ASPECT.0.ln(), CROP_ASPECT.1.ln());
    let mut chosen = None;
    for _ in 0..10 {
        let scale = match hooks.scale {
            Some(s) => s,
            None => rng.random_range(CROP_SCALE.0..=CROP_SCALE.1),
        };
        let aspect = match hooks.aspect {
            Some(a) => a,
            None => rng.random_range(la..=lb).exp(),
        };
        let target = scale * area;
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if cw > 0 && cw <= w && ch > 0 && ch <= h {
            let top = rng.random_range(0..=h - ch);
            let left = rng.random_range(0..=w - cw);
            chosen = Some((top, left, ch, cw));
            break;
        }
    }
    let (top, left, height, width) = chosen.unwrap_or_else(|| {
        let ratio = w as f64 / h as f64;
        let (ch, cw) = if ratio < CROP_ASPECT.0 {
            ((w as f64 / CROP_ASPECT.0).round() as usize, w)
        } else if ratio > CROP_ASPECT.1 {
            (h, (h as f64 * CROP_ASPECT.1).round() as usize)
        } else {
            (h, w)
        };
        ((h - ch) / 2, (w - cw) / 2, ch, cw)
    });
    let flip = match hooks.flip {
        Some(f) => f,
        None => rng.random_bool(0.5),
    };
    CropSpec { top, left, height, width, flip }
}

/// Bilinear resize of the crop back to the full image size, then the
/// optional horizontal flip. Sample points sit at pixel centres and are
/// clamped to the crop box, so outputs are convex combinations of inputs.
pub fn apply_crop(image: &Tensor<f32>, crop: &CropSpec) -> Result<Tensor<f32>> {
    let &[c, h, w] = image.shape() else {
        return Err(dim_err!("expected [C, H, W] image, got {:?}", image.shape()));
    };
    if crop.height == 0 || crop.width == 0 || crop.top + crop.height > h || crop.left + crop.width > w {
        return Err(dim_err!("crop {crop:?} outside {h}x{w} image"));
    }
    let axis = |n_out: usize, start: usize, len: usize| -> Vec<(usize, usize, f32)> {
        (0..n_out)
            .map(|o| {
                let s = start as f64 + (o as f64 + 0.5) * len as f64 / n_out as f64 - 0.5;
                let s = s.clamp(start as f64, (start + len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(start + len - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let ys = axis(h, crop.top, crop.height);
    let xs = axis(w, crop.left, crop.width);
    let src = image.data();
    let mut out = vec![0.0f32; src.len()];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                let v = top * (1.0 - fy) + bot * fy;
                let dx = if crop.flip { w - 1 - ox } else { ox };
                out[ch * h * w + oy * w + dx] = v;
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}

/// Random resized crop followed by a horizontal flip with probability 1/2.
pub fn augment_train<R: Rng + ?Sized>(image: &Tensor<f32>, rng: &mut R) -> Result<Tensor<f32>> {
    augment_with(image, rng, &AugmentOverrides::default())
}

pub fn augment_with<R: Rng + ?Sized>(image: &Tensor<f32>, rng: &mut R, hooks: &AugmentOverrides) -> Result<Tensor<f32>> {
    let &[_, h, w] = image.shape() else {
        return Err(dim_err!("expected [C, H, W] image, got {:?}", image.shape()));
    };
    let crop = sample_crop(rng, h, w, hooks);
    apply_crop(image, &crop)
}
