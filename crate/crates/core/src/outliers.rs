//! Two-space outlier analysis, replacement sweeps, and nearest-neighbor retrieval.
//!
//! A sample's outlier score in a feature space is the distance to its k-th
//! nearest neighbor. With a high-level space (semantic features) and a
//! low-level space (stem features), high-level outliers are samples ranked in
//! the top α% of the high-level score but not in the top α% of the low-level
//! score, and low-level outliers the reverse.
//!
//! Percentile sets use the nearest-rank rule: the top α% of `n` samples are
//! the first `ceil(α n / 100)` in descending score order, ties broken by lower
//! sample index first. The bottom `(100 - α)%` is the complement, which makes
//! the two outlier sets disjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractors::Embedder;
use crate::features::FeatureMatrix;
use crate::images::ImageSet;
use crate::metrics::{Metric, Reference};
use crate::tensor::Rng;

pub use crate::neighbors::knn_distance;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_ALPHA: f64 = 67.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierParams {
    pub k: usize,
    /// Percentage in `(0, 100)`.
    pub alpha: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl OutlierParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 100.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("alpha must be in (0, 100), got {alpha}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSplit {
    pub high_indices: Vec<usize>,
    pub low_indices: Vec<usize>,
    pub d_high: Vec<f64>,
    pub d_low: Vec<f64>,
}

/// Membership mask of the nearest-rank top `alpha`% by descending score.
pub fn top_percent(scores: &[f64], alpha: f64) -> Result<Vec<bool>> {
    check_alpha(alpha)?;
    let n = scores.len();
    let count = ((alpha / 100.0) * n as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut mask = vec![false; n];
    for &i in &order[..count.min(n)] {
        mask[i] = true;
    }
    Ok(mask)
}

pub fn split_outliers(d_high: &[f64], d_low: &[f64], alpha: f64) -> Result<OutlierSplit> {
    if d_high.len() != d_low.len() {
        return Err(Error::Shape(format!(
            "score lists differ in length: {} vs {}",
            d_high.len(),
            d_low.len()
        )));
    }
    let top_high = top_percent(d_high, alpha)?;
    let top_low = top_percent(d_low, alpha)?;
    let high_indices = (0..d_high.len()).filter(|&i| top_high[i] && !top_low[i]).collect();
    let low_indices = (0..d_high.len()).filter(|&i| top_low[i] && !top_high[i]).collect();
    Ok(OutlierSplit {
        high_indices,
        low_indices,
        d_high: d_high.to_vec(),
        d_low: d_low.to_vec(),
    })
}

/// Scores both spaces and splits. Rows of the two matrices must describe the
/// same samples in the same order.
pub fn split_outliers_features(
    high: &FeatureMatrix,
    low: &FeatureMatrix,
    params: &OutlierParams,
) -> Result<OutlierSplit> {
    params.validate()?;
    if high.rows() != low.rows() {
        return Err(Error::Shape(format!(
            "feature spaces cover {} and {} samples",
            high.rows(),
            low.rows()
        )));
    }
    let d_high = knn_distance(high, params.k)?;
    let d_low = knn_distance(low, params.k)?;
    split_outliers(&d_high, &d_low, params.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub replaced: usize,
    pub proportion: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    /// Images replaced per step.
    pub step: usize,
    /// Number of steps after the initial point; `None` runs until the pool or
    /// the real set is used up.
    pub steps: Option<usize>,
    /// Seeds the order in which real images are replaced.
    pub seed: u64,
    pub metric: Metric,
    /// Neighborhood size for precision / recall.
    pub k: usize,
}

/// Replacement sweep on precomputed features.
///
/// Real rows are replaced in a seeded random order, `step` at a time, by
/// outlier rows taken in order; earlier replacements are kept. The first point
/// is the unmodified set.
pub fn replacement_sweep_features(
    real: &FeatureMatrix,
    outliers: &FeatureMatrix,
    params: &SweepParams,
) -> Result<Vec<SweepPoint>> {
    if params.step == 0 {
        return Err(Error::Param("sweep step must be at least 1".into()));
    }
    if real.dim() != outliers.dim() {
        return Err(Error::Shape(format!(
            "real features are {}-d, outliers {}-d",
            real.dim(),
            outliers.dim()
        )));
    }
    let n = real.rows();
    let max_steps = outliers.rows().min(n) / params.step;
    let steps = params.steps.unwrap_or(max_steps);
    let needed = steps * params.step;
    if needed > outliers.rows() {
        return Err(Error::PoolExhausted {
            needed,
            available: outliers.rows(),
        });
    }
    if needed > n {
        return Err(Error::Param(format!(
            "{steps} steps of {} exceed the {n} real samples",
            params.step
        )));
    }

    let mut reference = Reference::new(real);
    let mut evaluate = |set: &FeatureMatrix| reference.evaluate(params.metric, set, params.k);

    let order = Rng::new(params.seed).permutation(n);
    let mut current = real.clone();
    let mut curve = Vec::with_capacity(steps + 1);
    curve.push(SweepPoint {
        replaced: 0,
        proportion: 0.0,
        value: evaluate(&current)?,
    });
    for s in 0..steps {
        for (j, &target) in order.iter().enumerate().skip(s * params.step).take(params.step) {
            current.set_row(target, outliers.row(j))?;
        }
        let replaced = (s + 1) * params.step;
        curve.push(SweepPoint {
            replaced,
            proportion: replaced as f64 / n as f64,
            value: evaluate(&current)?,
        });
    }
    Ok(curve)
}

/// Replacement sweep on images. Each image is embedded once; because
/// extraction is per-image deterministic, the replaced set's features equal
/// a fresh extraction of the replaced images.
pub fn replacement_sweep(
    real: &ImageSet,
    outliers: &ImageSet,
    embedder: &dyn Embedder,
    params: &SweepParams,
) -> Result<Vec<SweepPoint>> {
    let real_f = embedder.embed(real)?;
    let out_f = embedder.embed(outliers)?;
    replacement_sweep_features(&real_f, &out_f, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// The `top` corpus rows closest to `query`, nearest first.
pub fn retrieve_nearest_features(
    query: &[f32],
    corpus: &FeatureMatrix,
    top: usize,
) -> Result<Vec<Neighbor>> {
    Ok(crate::neighbors::nearest(query, corpus, top)?
        .into_iter()
        .map(|(index, distance)| Neighbor { index, distance })
        .collect())
}

/// Embeds a single query image and the corpus, then ranks the corpus.
pub fn retrieve_nearest(
    query: &ImageSet,
    corpus: &ImageSet,
    embedder: &dyn Embedder,
    top: usize,
) -> Result<Vec<Neighbor>> {
    if query.len() != 1 {
        return Err(Error::Input(format!("expected one query image, got {}", query.len())));
    }
    let q = embedder.embed(query)?;
    let c = embedder.embed(corpus)?;
    retrieve_nearest_features(q.row(0), &c, top)
}
