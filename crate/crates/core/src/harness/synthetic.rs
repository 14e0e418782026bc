//! Seeded procedural images for demos and tests that need no files on disk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::images::ImageSet;
use crate::tensor::{Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
}

/// Smooth color fields: a random gradient plus a few soft blobs and a
/// sinusoidal texture per image, with all values in `[0, 1]`.
pub fn synthetic_images(spec: &SyntheticData) -> Result<ImageSet> {
    if spec.count == 0 || spec.size == 0 {
        return Err(Error::Param("synthetic data needs positive count and size".into()));
    }
    let s = spec.size;
    let images = (0..spec.count)
        .map(|i| {
            let mut rng = Rng::derive(spec.seed, i as u64);
            let base: Vec<f64> = (0..3).map(|_| rng.uniform(0.2, 0.8)).collect();
            let grad: Vec<[f64; 2]> = (0..3)
                .map(|_| [rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)])
                .collect();
            let blobs: Vec<([f64; 2], f64, [f64; 3])> = (0..3)
                .map(|_| {
                    (
                        [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)],
                        rng.uniform(0.05, 0.25),
                        [rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)],
                    )
                })
                .collect();
            let freq = rng.uniform(2.0, 12.0);
            let angle = rng.uniform(0.0, std::f64::consts::PI);
            let amp = rng.uniform(0.0, 0.15);
            Tensor::from_fn(&[3, s, s], |idx| {
                let (c, y, x) = (idx / (s * s), idx / s % s, idx % s);
                let u = (x as f64 + 0.5) / s as f64;
                let v = (y as f64 + 0.5) / s as f64;
                let mut val = base[c] + grad[c][0] * (u - 0.5) + grad[c][1] * (v - 0.5);
                for (center, radius, color) in &blobs {
                    let d2 = (u - center[0]).powi(2) + (v - center[1]).powi(2);
                    val += color[c] * (-d2 / (2.0 * radius * radius)).exp();
                }
                let phase = (u * angle.cos() + v * angle.sin()) * freq * std::f64::consts::TAU;
                val += amp * phase.sin();
                val.clamp(0.0, 1.0) as f32
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ImageSet::new(images)
}
