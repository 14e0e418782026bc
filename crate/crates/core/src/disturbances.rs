//! Controlled image disturbances at three severity levels.
//!
//! | kind                  | level 1 | level 2 | level 3 |
//! |-----------------------|---------|---------|---------|
//! | Gaussian blur σ (px)  | 1       | 2       | 3       |
//! | Gaussian noise σ²     | 0.05    | 0.10    | 0.15    |
//! | color jitter ratio    | 0.1     | 0.2     | 0.3     |
//! | contamination ratio   | 0.25    | 0.5     | 0.75    |
//!
//! Random draws for image `i` come from `Rng::derive(seed ^ tag, i)`, so the
//! result for one image never depends on how the set is partitioned.
//!
//! Color jitter applies, in order and with clipping to `[0, 1]` after each step:
//! 1. brightness: `x * b`
//! 2. contrast: `(x - m) * c + m`, `m` the mean luminance of the image
//! 3. saturation: `(x - g) * s + g`, `g` the per-pixel luminance
//! 4. hue: rotate HSV hue by `h` turns
//!
//! with `b, c, s ~ U[1 - r, 1 + r]`, `h ~ U[-r, r]`, and luminance
//! `0.299 R + 0.587 G + 0.114 B`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::images::ImageSet;
use crate::tensor::{Rng, Tensor};

const NOISE_TAG: u64 = 0x6e6f_6973_6500_0000;
const JITTER_TAG: u64 = 0x6a69_7474_6572_0000;
const CONTAMINATION_TAG: u64 = 0x636f_6e74_616d_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    GaussianBlur,
    GaussianNoise,
    ColorJitter,
    ClassContamination,
}

impl DisturbanceKind {
    pub const ALL: [DisturbanceKind; 4] = [
        DisturbanceKind::GaussianBlur,
        DisturbanceKind::GaussianNoise,
        DisturbanceKind::ColorJitter,
        DisturbanceKind::ClassContamination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DisturbanceKind::GaussianBlur => "gaussian_blur",
            DisturbanceKind::GaussianNoise => "gaussian_noise",
            DisturbanceKind::ColorJitter => "color_jitter",
            DisturbanceKind::ClassContamination => "class_contamination",
        }
    }

    /// Parameter for severity level 1, 2 or 3.
    pub fn level_parameter(self, level: u8) -> Result<f64> {
        let table = match self {
            DisturbanceKind::GaussianBlur => [1.0, 2.0, 3.0],
            DisturbanceKind::GaussianNoise => [0.05, 0.10, 0.15],
            DisturbanceKind::ColorJitter => [0.1, 0.2, 0.3],
            DisturbanceKind::ClassContamination => [0.25, 0.5, 0.75],
        };
        match level {
            1..=3 => Ok(table[level as usize - 1]),
            _ => Err(Error::Param(format!("disturbance level must be 1, 2 or 3, got {level}"))),
        }
    }
}

impl fmt::Display for DisturbanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DisturbanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_blur" | "blur" => Ok(DisturbanceKind::GaussianBlur),
            "gaussian_noise" | "noise" => Ok(DisturbanceKind::GaussianNoise),
            "color_jitter" | "jitter" => Ok(DisturbanceKind::ColorJitter),
            "class_contamination" | "contamination" => Ok(DisturbanceKind::ClassContamination),
            other => Err(Error::Param(format!("unknown disturbance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    pub level: Option<u8>,
    /// σ for blur, σ² for noise, ratio for jitter and contamination.
    pub param: f64,
    pub seed: u64,
    /// Dataset id of the contaminant pool (contamination only).
    pub contaminant: Option<String>,
}

impl DisturbanceSpec {
    pub fn at_level(kind: DisturbanceKind, level: u8, seed: u64) -> Result<Self> {
        Ok(Self {
            kind,
            level: Some(level),
            param: kind.level_parameter(level)?,
            seed,
            contaminant: None,
        })
    }

    pub fn with_param(kind: DisturbanceKind, param: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            kind,
            level: None,
            param,
            seed,
            contaminant: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(level) = self.level {
            let legal = self.kind.level_parameter(level)?;
            if legal != self.param {
                return Err(Error::Param(format!(
                    "{} level {level} has parameter {legal}, got {}",
                    self.kind, self.param
                )));
            }
        }
        let p = self.param;
        let ok = match self.kind {
            DisturbanceKind::GaussianBlur => p > 0.0 && p.is_finite(),
            DisturbanceKind::GaussianNoise => (0.0..f64::INFINITY).contains(&p),
            DisturbanceKind::ColorJitter => (0.0..1.0).contains(&p),
            DisturbanceKind::ClassContamination => (0.0..=1.0).contains(&p),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Param(format!("{} parameter {p} out of range", self.kind)))
        }
    }

    pub fn apply(&self, images: &ImageSet, contaminants: Option<&ImageSet>) -> Result<ImageSet> {
        self.validate()?;
        match self.kind {
            DisturbanceKind::GaussianBlur => gaussian_blur(images, self.param),
            DisturbanceKind::GaussianNoise => gaussian_noise(images, self.param, self.seed),
            DisturbanceKind::ColorJitter => color_jitter(images, self.param, self.seed),
            DisturbanceKind::ClassContamination => {
                let pool = contaminants.ok_or_else(|| {
                    Error::Param("class contamination needs a contaminant image set".into())
                })?;
                class_contamination(images, pool, self.param, self.seed)
            }
        }
    }
}

fn clip01(v: f32) -> f32 {
    v.clamp(0.0, 1.0)
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(i: i64, n: usize) -> usize {
    let period = 2 * n as i64;
    let m = i.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn blur_image(image: &Tensor, kernel: &[f64]) -> Result<Tensor> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::Shape(format!("blur expects C×H×W, got {:?}", image.shape())));
    };
    let r = (kernel.len() / 2) as i64;
    let mut out = Vec::with_capacity(c * h * w);
    let mut tmp = vec![0f64; h * w];
    for plane in image.data().chunks_exact(h * w) {
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * row[reflect(x as i64 + t as i64 - r, w)] as f64)
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * tmp[reflect(y as i64 + t as i64 - r, h) * w + x])
                    .sum();
                out.push(clip01(v as f32));
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur(images: &ImageSet, sigma: f64) -> Result<ImageSet> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Param(format!("blur sigma must be positive, got {sigma}")));
    }
    let kernel = gaussian_kernel(sigma);
    ImageSet::new(
        images
            .iter()
            .map(|img| blur_image(img, &kernel))
            .collect::<Result<_>>()?,
    )
}

/// Adds i.i.d. `N(0, variance)` noise to every pixel and clips to `[0, 1]`.
pub fn gaussian_noise(images: &ImageSet, variance: f64, seed: u64) -> Result<ImageSet> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::Param(format!("noise variance must be non-negative, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(images.clone());
    }
    let std = variance.sqrt();
    ImageSet::new(
        images
            .iter()
            .enumerate()
            .map(|(i, img)| {
                let mut rng = Rng::derive(seed ^ NOISE_TAG, i as u64);
                let data = img
                    .data()
                    .iter()
                    .map(|&v| clip01((v as f64 + std * rng.standard_normal()) as f32))
                    .collect();
                Tensor::new(img.shape().to_vec(), data)
            })
            .collect::<Result<_>>()?,
    )
}

/// Per-image color jitter factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterFactors {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    /// Hue rotation in turns.
    pub hue: f32,
}

impl JitterFactors {
    pub const IDENTITY: JitterFactors = JitterFactors {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
        hue: 0.0,
    };

    pub fn sample(ratio: f64, rng: &mut Rng) -> Self {
        Self {
            brightness: rng.uniform(1.0 - ratio, 1.0 + ratio) as f32,
            contrast: rng.uniform(1.0 - ratio, 1.0 + ratio) as f32,
            saturation: rng.uniform(1.0 - ratio, 1.0 + ratio) as f32,
            hue: rng.uniform(-ratio, ratio) as f32,
        }
    }
}

fn luminance(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as i32).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Applies fixed jitter factors to one `3×H×W` image.
pub fn apply_jitter(image: &Tensor, f: &JitterFactors) -> Result<Tensor> {
    let &[3, h, w] = image.shape() else {
        return Err(Error::Shape(format!("jitter expects 3×H×W, got {:?}", image.shape())));
    };
    let n = h * w;
    let mut px = image.data().to_vec();
    let (rs, rest) = px.split_at_mut(n);
    let (gs, bs) = rest.split_at_mut(n);

    if f.brightness != 1.0 {
        for v in rs.iter_mut().chain(gs.iter_mut()).chain(bs.iter_mut()) {
            *v = clip01(*v * f.brightness);
        }
    }
    if f.contrast != 1.0 {
        let mean = (0..n)
            .map(|i| luminance(rs[i], gs[i], bs[i]) as f64)
            .sum::<f64>()
            / n as f64;
        let m = mean as f32;
        for v in rs.iter_mut().chain(gs.iter_mut()).chain(bs.iter_mut()) {
            *v = clip01((*v - m) * f.contrast + m);
        }
    }
    if f.saturation != 1.0 {
        for i in 0..n {
            let g = luminance(rs[i], gs[i], bs[i]);
            rs[i] = clip01((rs[i] - g) * f.saturation + g);
            gs[i] = clip01((gs[i] - g) * f.saturation + g);
            bs[i] = clip01((bs[i] - g) * f.saturation + g);
        }
    }
    if f.hue != 0.0 {
        for i in 0..n {
            let (hh, s, v) = rgb_to_hsv(rs[i], gs[i], bs[i]);
            let (r, g, b) = hsv_to_rgb(hh + f.hue, s, v);
            rs[i] = clip01(r);
            gs[i] = clip01(g);
            bs[i] = clip01(b);
        }
    }
    Tensor::new(vec![3, h, w], px)
}

/// Random brightness, contrast, saturation and hue changes with strength `ratio`.
pub fn color_jitter(images: &ImageSet, ratio: f64, seed: u64) -> Result<ImageSet> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Param(format!("jitter ratio must be in [0, 1), got {ratio}")));
    }
    ImageSet::new(
        images
            .iter()
            .enumerate()
            .map(|(i, img)| {
                let mut rng = Rng::derive(seed ^ JITTER_TAG, i as u64);
                apply_jitter(img, &JitterFactors::sample(ratio, &mut rng))
            })
            .collect::<Result<_>>()?,
    )
}

/// Pairs `(target index, contaminant index)` replacing `round(ratio * n)` images.
///
/// Targets are a prefix of a seeded permutation, so for one seed the replaced
/// sets are nested as the ratio grows.
pub fn contamination_plan(n: usize, pool: usize, ratio: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Param(format!("contamination ratio must be in [0, 1], got {ratio}")));
    }
    let needed = (ratio * n as f64).ceil() as usize;
    if pool < needed {
        return Err(Error::PoolExhausted {
            needed,
            available: pool,
        });
    }
    let count = ((ratio * n as f64) + 0.5).floor() as usize;
    let targets = Rng::derive(seed ^ CONTAMINATION_TAG, 0).permutation(n);
    let sources = Rng::derive(seed ^ CONTAMINATION_TAG, 1).permutation(pool);
    Ok(targets
        .into_iter()
        .zip(sources)
        .take(count)
        .collect())
}

/// Replaces a seeded random subset of `images` with images from `contaminants`.
pub fn class_contamination(
    images: &ImageSet,
    contaminants: &ImageSet,
    ratio: f64,
    seed: u64,
) -> Result<ImageSet> {
    let plan = contamination_plan(images.len(), contaminants.len(), ratio, seed)?;
    let mut out = images.clone();
    for (target, source) in plan {
        out.replace(target, contaminants.get(source).clone())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::tensor::Rng;

    fn random_set(n: usize, h: usize, w: usize, seed: u64) -> ImageSet {
        let mut rng = Rng::new(seed);
        ImageSet::new(
            (0..n)
                .map(|_| Tensor::from_fn(&[3, h, w], |_| rng.next_f64() as f32).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn constant_set(n: usize, v: f32) -> ImageSet {
        ImageSet::new(vec![Tensor::filled(&[3, 9, 7], v).unwrap(); n]).unwrap()
    }

    #[test]
    fn level_tables() {
        use DisturbanceKind::*;
        assert_eq!(GaussianBlur.level_parameter(2).unwrap(), 2.0);
        assert_eq!(GaussianNoise.level_parameter(3).unwrap(), 0.15);
        assert_eq!(ColorJitter.level_parameter(1).unwrap(), 0.1);
        assert_eq!(ClassContamination.level_parameter(2).unwrap(), 0.5);
        assert!(GaussianBlur.level_parameter(4).is_err());
        let mut s = DisturbanceSpec::at_level(GaussianNoise, 2, 0).unwrap();
        s.param = 0.2;
        assert!(s.validate().is_err());
        assert!(DisturbanceSpec::with_param(ColorJitter, 1.0, 0).is_err());
        assert!(DisturbanceSpec::with_param(GaussianBlur, 0.0, 0).is_err());
    }

    #[test]
    fn blur_keeps_constant_image() {
        let out = gaussian_blur(&constant_set(2, 0.37), 2.0).unwrap();
        assert!(out.iter().flat_map(|t| t.data()).all(|&v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn blur_impulse_center_equals_kernel_peak() {
        let sigma = 1.0f64;
        let mut img = Tensor::zeros(&[3, 15, 15]).unwrap();
        for c in 0..3 {
            img.data_mut()[c * 225 + 7 * 15 + 7] = 1.0;
        }
        let out = gaussian_blur(&ImageSet::new(vec![img]).unwrap(), sigma).unwrap();
        // Independent evaluation of the 2-D discrete kernel's central weight.
        let mut total = 0.0f64;
        for y in -3i32..=3 {
            for x in -3i32..=3 {
                total += (-((x * x + y * y) as f64) / (2.0 * sigma * sigma)).exp();
            }
        }
        let center = 1.0 / total;
        assert!((out.get(0).data()[7 * 15 + 7] as f64 - center).abs() < 1e-4);
    }

    #[test]
    fn blur_preserves_mean() {
        let set = random_set(3, 20, 13, 5);
        for sigma in [1.0, 2.0, 3.0, 7.0] {
            let out = gaussian_blur(&set, sigma).unwrap();
            for (a, b) in set.iter().zip(out.iter()) {
                let ma = a.data().iter().map(|&v| v as f64).sum::<f64>() / a.len() as f64;
                let mb = b.data().iter().map(|&v| v as f64).sum::<f64>() / b.len() as f64;
                assert!((ma - mb).abs() < 1e-4, "sigma {sigma}: {ma} vs {mb}");
            }
        }
    }

    #[test]
    fn reflect_indexing() {
        let idx: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
    }

    #[test]
    fn zero_noise_is_identity() {
        let set = random_set(2, 5, 5, 1);
        assert_eq!(gaussian_noise(&set, 0.0, 3).unwrap(), set);
    }

    #[test]
    fn noise_variance_on_mid_gray() {
        let set = ImageSet::new(vec![Tensor::filled(&[3, 600, 600], 0.5).unwrap()]).unwrap();
        let out = gaussian_noise(&set, 0.05, 11).unwrap();
        let d: Vec<f64> = out.get(0).data().iter().map(|&v| v as f64 - 0.5).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.05).abs() / 0.05 < 0.05, "var = {var}");
    }

    #[test]
    fn noise_is_seeded() {
        let set = random_set(3, 6, 6, 2);
        assert_eq!(gaussian_noise(&set, 0.1, 4).unwrap(), gaussian_noise(&set, 0.1, 4).unwrap());
        assert_ne!(gaussian_noise(&set, 0.1, 4).unwrap(), gaussian_noise(&set, 0.1, 5).unwrap());
    }

    #[test]
    fn jitter_zero_ratio_is_identity() {
        let set = random_set(3, 6, 6, 3);
        assert_eq!(color_jitter(&set, 0.0, 9).unwrap(), set);
    }

    #[test]
    fn brightness_scales_gray_exactly() {
        let img = Tensor::filled(&[3, 4, 4], 0.4).unwrap();
        let f = JitterFactors {
            brightness: 1.2,
            ..JitterFactors::IDENTITY
        };
        let out = apply_jitter(&img, &f).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.4f32 * 1.2f32));
    }

    #[test]
    fn hue_roundtrip_and_full_turn() {
        let img = random_set(1, 5, 5, 4).get(0).clone();
        let f = JitterFactors {
            hue: 1.0,
            ..JitterFactors::IDENTITY
        };
        let out = apply_jitter(&img, &f).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let set = random_set(3, 6, 6, 5);
        assert_eq!(color_jitter(&set, 0.3, 1).unwrap(), color_jitter(&set, 0.3, 1).unwrap());
    }

    #[test]
    fn contamination_counts_and_determinism() {
        let set = constant_set(100, 0.2);
        let pool = constant_set(100, 0.9);
        assert_eq!(class_contamination(&set, &pool, 0.0, 1).unwrap(), set);
        let out = class_contamination(&set, &pool, 0.25, 1).unwrap();
        let replaced = out.iter().filter(|t| t.data()[0] == 0.9).count();
        assert_eq!(replaced, 25);
        let a = contamination_plan(100, 100, 0.25, 7).unwrap();
        let b = contamination_plan(100, 100, 0.25, 7).unwrap();
        assert_eq!(a, b);
        let c = contamination_plan(100, 100, 0.5, 7).unwrap();
        assert_eq!(&c[..25], &a[..]);
    }

    #[test]
    fn contamination_needs_enough_contaminants() {
        let set = constant_set(10, 0.2);
        let pool = constant_set(7, 0.9);
        assert!(matches!(
            class_contamination(&set, &pool, 0.75, 0),
            Err(Error::PoolExhausted { needed: 8, available: 7 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn outputs_stay_in_unit_range(seed in 0u64..1000, level in 1u8..=3) {
            let set = random_set(2, 8, 6, seed);
            let pool = random_set(2, 8, 6, seed + 1);
            for kind in DisturbanceKind::ALL {
                let spec = DisturbanceSpec::at_level(kind, level, seed).unwrap();
                let out = spec.apply(&set, Some(&pool)).unwrap();
                prop_assert_eq!(out.len(), set.len());
                for t in out.iter() {
                    prop_assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
                }
            }
        }
    }
}
