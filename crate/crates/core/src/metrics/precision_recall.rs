//! k-NN manifold precision and recall.
//!
//! Each reference point owns a ball whose radius is the distance to its k-th
//! nearest neighbor within its own set. A query point is covered when it lies
//! inside (or on) at least one ball. Precision is the covered fraction of
//! generated points against the real manifold; recall swaps the roles.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::neighbors::{kth_neighbor_squared, squared_distance};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
}

/// Fraction of `queries` inside the k-NN manifold of `reference`.
pub fn manifold_coverage(reference: &FeatureMatrix, queries: &FeatureMatrix, k: usize) -> Result<f64> {
    if reference.dim() != queries.dim() {
        return Err(Error::Shape(format!(
            "cannot compare {}-d and {}-d features",
            reference.dim(),
            queries.dim()
        )));
    }
    if k >= reference.rows() {
        return Err(Error::Param(format!(
            "k = {k} must be smaller than the reference set size {}",
            reference.rows()
        )));
    }
    let radii = kth_neighbor_squared(reference, k)?;
    let covered = queries
        .iter_rows()
        .filter(|q| {
            reference
                .iter_rows()
                .zip(&radii)
                .any(|(r, &rad)| squared_distance(q, r) <= rad)
        })
        .count();
    Ok(covered as f64 / queries.rows() as f64)
}

pub fn precision_recall(real: &FeatureMatrix, gen: &FeatureMatrix, k: usize) -> Result<PrecisionRecall> {
    Ok(PrecisionRecall {
        precision: manifold_coverage(real, gen, k)?,
        recall: manifold_coverage(gen, real, k)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMeta;
    use crate::tensor::Rng;

    fn fm(rows: &[[f32; 2]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, FeatureMeta::default()).unwrap()
    }

    #[test]
    fn identical_sets_are_fully_covered() {
        let mut rng = Rng::new(0);
        let rows: Vec<[f32; 2]> = (0..30)
            .map(|_| [rng.standard_normal() as f32, rng.standard_normal() as f32])
            .collect();
        let x = fm(&rows);
        let pr = precision_recall(&x, &x, 3).unwrap();
        assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
    }

    #[test]
    fn separated_clusters_have_no_overlap() {
        let a: Vec<[f32; 2]> = (0..10).map(|i| [i as f32 * 0.1, 0.0]).collect();
        let b: Vec<[f32; 2]> = (0..10).map(|i| [1000.0 + i as f32 * 0.1, 0.0]).collect();
        let pr = precision_recall(&fm(&a), &fm(&b), 3).unwrap();
        assert_eq!((pr.precision, pr.recall), (0.0, 0.0));
    }

    #[test]
    fn ten_point_configuration_matches_exhaustive_oracle() {
        let real = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [5.0, 5.0]];
        let gen = [[0.5, 0.5], [3.0, 3.0], [5.5, 5.0], [1.2, 0.0], [9.0, 0.0]];
        // Oracle: full distance table, k-th smallest by sorting.
        let d = |a: [f32; 2], b: [f32; 2]| (((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)) as f64).sqrt();
        let radius = |set: &[[f32; 2]], i: usize, k: usize| {
            let mut ds: Vec<f64> = (0..set.len()).filter(|&j| j != i).map(|j| d(set[i], set[j])).collect();
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ds[k - 1]
        };
        let cover = |refs: &[[f32; 2]], qs: &[[f32; 2]], k: usize| {
            qs.iter()
                .filter(|&&q| (0..refs.len()).any(|i| d(q, refs[i]) <= radius(refs, i, k)))
                .count() as f64
                / qs.len() as f64
        };
        for k in 1..=3 {
            let pr = precision_recall(&fm(&real), &fm(&gen), k).unwrap();
            assert_eq!(pr.precision, cover(&real, &gen, k), "k={k}");
            assert_eq!(pr.recall, cover(&gen, &real, k), "k={k}");
        }
    }

    #[test]
    fn k_must_be_smaller_than_set() {
        let x = fm(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert!(precision_recall(&x, &x, 3).is_err());
    }
}
