//! Random geometric augmentation: horizontal flip, vertical flip (the
//! "reflection"), isotropic scale about the centre and horizontal shear.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::tensor::Tensor;

/// Probabilities and ranges for [`augment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Probability of applying each transform independently.
    pub prob: f64,
    pub scale_range: (f64, f64),
    /// Shear angle range in degrees.
    pub shear_degrees: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { prob: 0.5, scale_range: (0.9, 1.1), shear_degrees: 10.0 }
    }
}

/// The concrete transforms chosen for one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AugmentPlan {
    pub hflip: bool,
    pub vflip: bool,
    pub scale: Option<f64>,
    /// Shear angle in degrees.
    pub shear: Option<f64>,
}

impl AugmentPlan {
    /// Draws each transform independently with probability `cfg.prob`.
    pub fn draw<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        let hflip = rng.random_bool(cfg.prob);
        let scale = rng.random_bool(cfg.prob).then(|| rng.random_range(cfg.scale_range.0..=cfg.scale_range.1));
        let shear = rng.random_bool(cfg.prob).then(|| rng.random_range(-cfg.shear_degrees..=cfg.shear_degrees));
        let vflip = rng.random_bool(cfg.prob);
        AugmentPlan { hflip, vflip, scale, shear }
    }

    pub fn is_identity(&self) -> bool {
        *self == AugmentPlan::default()
    }
}

/// Draws a plan and applies it. Labels are untouched; output stays in `[0, 1]`.
pub fn augment<R: Rng + ?Sized>(s: &Sample, cfg: &AugmentConfig, rng: &mut R) -> Sample {
    augment_with(s, &AugmentPlan::draw(cfg, rng))
}

/// Applies a fixed plan. An identity plan returns the input unchanged.
pub fn augment_with(s: &Sample, plan: &AugmentPlan) -> Sample {
    let mut image = s.image.clone();
    if plan.scale.is_some() || plan.shear.is_some() {
        image = affine(&image, plan.scale.unwrap_or(1.0), plan.shear.unwrap_or(0.0));
    }
    if plan.hflip {
        image = flip(&image, true);
    }
    if plan.vflip {
        image = flip(&image, false);
    }
    Sample { image, label: s.label, source: s.source.clone() }
}

fn flip(img: &Tensor<f32>, horizontal: bool) -> Tensor<f32> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let src = img.data();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = if horizontal { (y, w - 1 - x) } else { (h - 1 - y, x) };
            out.push(src[sy * w + sx]);
        }
    }
    Tensor::from_parts(img.shape(), out).expect("same shape")
}

/// Inverse-maps each output pixel through scale-about-centre and horizontal
/// shear, sampling bilinearly with edge clamp; clipped to `[0, 1]`.
fn affine(img: &Tensor<f32>, scale: f64, shear_deg: f64) -> Tensor<f32> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let src = img.data();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let tan = shear_deg.to_radians().tan();
    let sample = |y: f64, x: f64| -> f64 {
        let y = y.clamp(0.0, (h - 1) as f64);
        let x = x.clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let at = |yy: usize, xx: usize| src[yy * w + xx] as f64;
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let v = (y as f64 - cy) / scale;
            let u = (x as f64 - cx - tan * (y as f64 - cy)) / scale;
            out.push(sample(v + cy, u + cx).clamp(0.0, 1.0) as f32);
        }
    }
    Tensor::from_parts(img.shape(), out).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64, size: usize) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = Tensor::from_fn(&[1, size, size], |_| rng.random::<f32>());
        Sample { image, label: 2, source: "s".into() }
    }

    #[test]
    fn skip_everything_is_exact_identity() {
        let s = sample(1, 12);
        let cfg = AugmentConfig { prob: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(augment(&s, &cfg, &mut rng), s);
    }

    #[test]
    fn double_flips_are_identity() {
        let s = sample(2, 9);
        for plan in [AugmentPlan { hflip: true, ..Default::default() }, AugmentPlan { vflip: true, ..Default::default() }] {
            let once = augment_with(&s, &plan);
            assert_ne!(once, s);
            let twice = augment_with(&once, &plan);
            for (a, b) in twice.image.data().iter().zip(s.image.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn unit_scale_zero_shear_is_identity() {
        let s = sample(3, 10);
        let out = augment_with(&s, &AugmentPlan { scale: Some(1.0), shear: Some(0.0), ..Default::default() });
        for (a, b) in out.image.data().iter().zip(s.image.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn hflip_mirrors_columns() {
        let s = Sample { image: Tensor::from_fn(&[1, 2, 3], |i| i as f32 / 10.0), label: 0, source: String::new() };
        let out = augment_with(&s, &AugmentPlan { hflip: true, ..Default::default() });
        assert_eq!(out.image.data(), &[0.2, 0.1, 0.0, 0.5, 0.4, 0.3]);
    }

    proptest! {
        #[test]
        fn label_kept_and_range_respected(seed in 0u64..500, size in 4usize..14) {
            let s = sample(seed, size);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let out = augment(&s, &AugmentConfig { prob: 0.9, ..Default::default() }, &mut rng);
            prop_assert_eq!(out.label, s.label);
            prop_assert_eq!(out.image.shape(), s.image.shape());
            prop_assert!(out.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
