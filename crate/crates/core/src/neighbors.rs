//! Exact brute-force Euclidean neighbor queries.
//!
//! Distances are accumulated in f64 from per-coordinate differences, so a
//! point is always at distance exactly zero from itself and duplicates.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Squared distance from each row to its k-th nearest other row.
pub fn kth_neighbor_squared(features: &FeatureMatrix, k: usize) -> Result<Vec<f64>> {
    let n = features.rows();
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    if n <= k {
        return Err(Error::InsufficientSamples {
            needed: k + 1,
            got: n,
        });
    }
    let mut dists = vec![0f64; n - 1];
    Ok((0..n)
        .map(|i| {
            let a = features.row(i);
            for (slot, j) in (0..n).filter(|&j| j != i).enumerate() {
                dists[slot] = squared_distance(a, features.row(j));
            }
            *dists
                .select_nth_unstable_by(k - 1, |x, y| x.total_cmp(y))
                .1
        })
        .collect())
}

/// Euclidean distance from each row to its k-th nearest other row.
pub fn knn_distance(features: &FeatureMatrix, k: usize) -> Result<Vec<f64>> {
    Ok(kth_neighbor_squared(features, k)?
        .into_iter()
        .map(f64::sqrt)
        .collect())
}

/// Indices of the `top` nearest rows of `corpus` to `query`, with distances,
/// ascending; ties keep corpus order.
pub fn nearest(query: &[f32], corpus: &FeatureMatrix, top: usize) -> Result<Vec<(usize, f64)>> {
    if query.len() != corpus.dim() {
        return Err(Error::Shape(format!(
            "query has dimension {}, corpus {}",
            query.len(),
            corpus.dim()
        )));
    }
    let mut all: Vec<(usize, f64)> = corpus
        .iter_rows()
        .enumerate()
        .map(|(i, r)| (i, squared_distance(query, r)))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(top.min(corpus.rows()));
    Ok(all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect())
}
