use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Sample mean and unbiased (divisor `N-1`) covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

pub fn fit_gaussian(features: &FeatureMatrix) -> Result<GaussianStats> {
    let (n, d) = (features.rows(), features.dim());
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mut mu = DVector::<f64>::zeros(d);
    for row in features.iter_rows() {
        for (m, &v) in mu.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mu /= n as f64;
    let centered = DMatrix::<f64>::from_fn(n, d, |i, j| features.row(i)[j] as f64 - mu[j]);
    let scatter = centered.tr_mul(&centered);
    let sigma = (&scatter + scatter.transpose()) * (0.5 / (n - 1) as f64);
    Ok(GaussianStats { mu, sigma, n })
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Asymmetry beyond `1e-6` (relative to the largest entry, floored at 1) is
/// rejected. Eigenvalues that are negative by no more than `1e-6` of the
/// largest eigenvalue are treated as zero.
pub fn matrix_sqrt_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (eig, _) = psd_eigen(a)?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let scaled = v * DMatrix::from_diagonal(&roots);
    let s = scaled * v.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Symmetric eigendecomposition with the PSD checks shared by the root routines.
fn psd_eigen(a: &DMatrix<f64>) -> Result<(SymmetricEigen<f64, nalgebra::Dyn>, f64)> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "matrix square root needs a square matrix, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = max_abs(a).max(1.0);
    let asym = max_abs(&(a - a.transpose()));
    if asym > 1e-6 * scale {
        return Err(Error::Input(format!(
            "matrix is not symmetric (max |A - Aᵀ| = {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new((a + a.transpose()) * 0.5);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
    let low = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &l| m.min(l));
    if low < -1e-6 * top.max(f64::MIN_POSITIVE) && low < -1e-12 * scale {
        return Err(Error::Input(format!(
            "matrix is not positive semi-definite (eigenvalue {low:e})"
        )));
    }
    Ok((eig, top))
}

/// `tr(A^{1/2})` for symmetric PSD `A`.
fn trace_sqrt_psd(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new((a + a.transpose()) * 0.5);
    eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum()
}

/// Fréchet distance between two Gaussians:
/// `|mu_g - mu_r|² + tr(S_g + S_r - 2 (S_g S_r)^{1/2})`.
///
/// The cross term uses `tr((S_r^{1/2} S_g S_r^{1/2})^{1/2})`, which has the
/// same eigenvalues as `(S_g S_r)^{1/2}` but stays symmetric. Slightly
/// negative results from rounding are clamped to zero.
pub fn fid(g: &GaussianStats, r: &GaussianStats) -> Result<f64> {
    let sqrt_r = matrix_sqrt_psd(&r.sigma)?;
    fid_with_root(g, r, &sqrt_r)
}

/// [`fid`] with a precomputed `S_r^{1/2}`, for repeated comparisons against one
/// reference set.
pub fn fid_with_root(g: &GaussianStats, r: &GaussianStats, sqrt_r: &DMatrix<f64>) -> Result<f64> {
    if g.dim() != r.dim() || sqrt_r.nrows() != r.dim() {
        return Err(Error::Shape(format!(
            "cannot compare {}-d and {}-d statistics",
            g.dim(),
            r.dim()
        )));
    }
    // Identical statistics are exactly zero apart; skip the rounding noise.
    if g == r {
        return Ok(0.0);
    }
    let mean_term = (&g.mu - &r.mu).norm_squared();
    let product = sqrt_r * &g.sigma * sqrt_r;
    let cross = trace_sqrt_psd(&product);
    let value = mean_term + g.sigma.trace() + r.sigma.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

/// FID straight from two feature sets.
pub fn fid_features(gen: &FeatureMatrix, real: &FeatureMatrix) -> Result<f64> {
    fid(&fit_gaussian(gen)?, &fit_gaussian(real)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMeta;
    use crate::tensor::Rng;

    fn stats(mu: &[f64], sigma: &[f64]) -> GaussianStats {
        let d = mu.len();
        GaussianStats {
            mu: DVector::from_column_slice(mu),
            sigma: DMatrix::from_row_slice(d, d, sigma),
            n: 100,
        }
    }

    #[test]
    fn fit_two_points() {
        let f = FeatureMatrix::from_rows(&[[0.0, 0.0], [2.0, 2.0]], FeatureMeta::default()).unwrap();
        let s = fit_gaussian(&f).unwrap();
        assert_eq!(s.mu.as_slice(), &[1.0, 1.0]);
        assert_eq!(s.sigma, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
    }

    #[test]
    fn fit_repeated_row_has_zero_covariance() {
        let f = FeatureMatrix::from_rows(&[[1.5, -2.0, 3.0]; 7], FeatureMeta::default()).unwrap();
        let s = fit_gaussian(&f).unwrap();
        assert!(s.sigma.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_is_symmetric_and_needs_two_rows() {
        let mut rng = Rng::new(4);
        let rows: Vec<Vec<f32>> =
            (0..30).map(|_| (0..6).map(|_| rng.standard_normal() as f32).collect()).collect();
        let s = fit_gaussian(&FeatureMatrix::from_rows(&rows, FeatureMeta::default()).unwrap())
            .unwrap();
        assert_eq!(s.sigma, s.sigma.transpose());
        let one = FeatureMatrix::from_rows(&[[1.0f32]], FeatureMeta::default()).unwrap();
        assert!(matches!(
            fit_gaussian(&one),
            Err(Error::InsufficientSamples { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn sqrt_of_simple_matrices() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert!((matrix_sqrt_psd(&i).unwrap() - &i).norm() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[4.0, 9.0]));
        let s = matrix_sqrt_psd(&d).unwrap();
        assert!((s - DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 3.0]))).norm() < 1e-12);
    }

    #[test]
    fn sqrt_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(matrix_sqrt_psd(&a), Err(Error::Input(_))));
    }

    #[test]
    fn fid_identical_is_zero() {
        let s = stats(&[1.0, -2.0], &[2.0, 0.3, 0.3, 1.0]);
        assert!(fid(&s, &s).unwrap().abs() < 1e-12);
    }

    #[test]
    fn fid_one_dimensional_closed_form() {
        let a = stats(&[0.0], &[1.0]);
        let b = stats(&[1.0], &[1.0]);
        assert!((fid(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fid_diagonal_closed_form() {
        let mu_g = [0.5, -1.0, 2.0];
        let mu_r = [0.0, 1.0, 2.5];
        let var_g = [1.0, 4.0, 0.25];
        let var_r = [2.0, 1.0, 9.0];
        let diag = |v: &[f64; 3]| {
            let mut m = vec![0.0; 9];
            for i in 0..3 {
                m[i * 4] = v[i];
            }
            m
        };
        let g = stats(&mu_g, &diag(&var_g));
        let r = stats(&mu_r, &diag(&var_r));
        let want: f64 = (0..3)
            .map(|i| (mu_g[i] - mu_r[i]).powi(2) + (var_g[i].sqrt() - var_r[i].sqrt()).powi(2))
            .sum();
        assert!((fid(&g, &r).unwrap() - want).abs() < 1e-6);
    }

    #[test]
    fn fid_dimension_mismatch() {
        let a = stats(&[0.0], &[1.0]);
        let b = stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(fid(&a, &b), Err(Error::Shape(_))));
    }
}
