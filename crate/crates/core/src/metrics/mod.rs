//! Distribution distances and rank statistics over feature matrices.

mod gaussian;
mod kid;
mod precision_recall;
mod rank;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gaussian::{fid, fid_features, fid_with_root, fit_gaussian, matrix_sqrt_psd, GaussianStats};
pub use kid::{kid, polynomial_kernel};
pub use precision_recall::{manifold_coverage, precision_recall, PrecisionRecall, DEFAULT_K};
pub use rank::{average_ranks, spearman};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Scalar metric between a reference (real) set and a compared set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Fid,
    Kid,
    Precision,
    Recall,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Fid => "fid",
            Metric::Kid => "kid",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
        }
    }

    /// Evaluates the metric; `k` is only used by precision and recall.
    pub fn evaluate(self, real: &FeatureMatrix, other: &FeatureMatrix, k: usize) -> Result<f64> {
        match self {
            Metric::Fid => fid_features(other, real),
            Metric::Kid => kid(other, real),
            Metric::Precision => manifold_coverage(real, other, k),
            Metric::Recall => manifold_coverage(other, real, k),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fid" => Ok(Metric::Fid),
            "kid" => Ok(Metric::Kid),
            "precision" => Ok(Metric::Precision),
            "recall" => Ok(Metric::Recall),
            other => Err(Error::Param(format!("unknown metric `{other}`"))),
        }
    }
}

/// A fixed reference set whose Gaussian fit and covariance root are computed
/// once, for comparing many sets against the same real features.
#[derive(Debug, Clone)]
pub struct Reference<'a> {
    features: &'a FeatureMatrix,
    gaussian: Option<(GaussianStats, nalgebra::DMatrix<f64>)>,
}

impl<'a> Reference<'a> {
    pub fn new(features: &'a FeatureMatrix) -> Self {
        Self {
            features,
            gaussian: None,
        }
    }

    pub fn features(&self) -> &FeatureMatrix {
        self.features
    }

    /// Same value as [`Metric::evaluate`] with this set as `real`.
    pub fn evaluate(&mut self, metric: Metric, other: &FeatureMatrix, k: usize) -> Result<f64> {
        if metric != Metric::Fid {
            return metric.evaluate(self.features, other, k);
        }
        if self.gaussian.is_none() {
            let stats = fit_gaussian(self.features)?;
            let root = matrix_sqrt_psd(&stats.sigma)?;
            self.gaussian = Some((stats, root));
        }
        let (stats, root) = self.gaussian.as_ref().expect("fitted above");
        fid_with_root(&fit_gaussian(other)?, stats, root)
    }
}

/// Mean, sample standard deviation and range of per-seed values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub mean: f64,
    /// Divisor `n - 1`; zero for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SeedSummary {
    /// `std / mean`, or zero when the mean is zero.
    pub fn coefficient_of_variation(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.std / self.mean.abs()
        }
    }
}

pub fn aggregate_seeds(values: &[f64]) -> Result<SeedSummary> {
    if values.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(SeedSummary {
        mean,
        std,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// One metric evaluated under each seed of a sweep, plus its summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub extractor: String,
    pub tap: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<f64>,
    #[serde(flatten)]
    pub summary: SeedSummary,
}

impl MetricReport {
    pub fn new(
        metric: impl Into<String>,
        extractor: impl Into<String>,
        tap: impl Into<String>,
        seeds: Vec<u64>,
        per_seed: Vec<f64>,
    ) -> Result<Self> {
        if seeds.len() != per_seed.len() {
            return Err(Error::Shape(format!(
                "{} seeds but {} values",
                seeds.len(),
                per_seed.len()
            )));
        }
        let summary = aggregate_seeds(&per_seed)?;
        Ok(Self {
            metric: metric.into(),
            extractor: extractor.into(),
            tap: tap.into(),
            seeds,
            per_seed,
            summary,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matches_direct_evaluation() {
        let mut rng = crate::tensor::Rng::new(2);
        let mut rows = |shift: f64| -> Vec<Vec<f32>> {
            (0..40)
                .map(|_| (0..3).map(|_| (rng.standard_normal() + shift) as f32).collect())
                .collect()
        };
        let meta = crate::features::FeatureMeta::default;
        let real = FeatureMatrix::from_rows(&rows(0.0), meta()).unwrap();
        let other = FeatureMatrix::from_rows(&rows(0.5), meta()).unwrap();
        let mut reference = Reference::new(&real);
        for metric in [Metric::Fid, Metric::Kid, Metric::Precision, Metric::Recall] {
            let a = reference.evaluate(metric, &other, 3).unwrap();
            assert_eq!(a, metric.evaluate(&real, &other, 3).unwrap(), "{metric}");
        }
        assert_eq!(reference.evaluate(Metric::Fid, &real, 3).unwrap(), 0.0);
    }

    #[test]
    fn aggregate_single_value() {
        let s = aggregate_seeds(&[4.5]).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (4.5, 0.0, 4.5, 4.5));
    }

    #[test]
    fn aggregate_constant_and_ramp() {
        let s = aggregate_seeds(&[1.0; 5]).unwrap();
        assert_eq!((s.mean, s.std), (1.0, 0.0));
        let s = aggregate_seeds(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max), (1.0, 5.0));
    }

    #[test]
    fn report_preserves_per_seed_values() {
        let r = MetricReport::new("fid", "vit-t@64", "final", vec![0, 1, 2], vec![1.0, 2.0, 4.0])
            .unwrap();
        assert_eq!(r.per_seed, vec![1.0, 2.0, 4.0]);
        assert!((r.summary.mean - 7.0 / 3.0).abs() < 1e-15);
        assert!(MetricReport::new("fid", "x", "final", vec![0], vec![1.0, 2.0]).is_err());
    }
}
