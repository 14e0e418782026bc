use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const ROW_BLOCK: usize = 512;

/// Cubic polynomial kernel `(aᵀb / D + 1)³`.
pub fn polynomial_kernel(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    (dot / a.len() as f64 + 1.0).powi(3)
}

fn to_matrix(f: &FeatureMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(f.rows(), f.dim(), |i, j| f.row(i)[j] as f64)
}

/// Sum of `k(x_i, y_j)` over all pairs, optionally skipping `i == j`.
/// Rows are processed in fixed blocks so memory stays bounded.
fn kernel_sum(x: &DMatrix<f64>, y: &DMatrix<f64>, skip_diagonal: bool) -> f64 {
    let d = x.ncols() as f64;
    let yt = y.transpose();
    let mut total = 0.0;
    for start in (0..x.nrows()).step_by(ROW_BLOCK) {
        let len = ROW_BLOCK.min(x.nrows() - start);
        let gram = x.rows(start, len) * &yt;
        for r in 0..len {
            let i = start + r;
            let mut row_sum = 0.0;
            for j in 0..gram.ncols() {
                if skip_diagonal && i == j {
                    continue;
                }
                row_sum += (gram[(r, j)] / d + 1.0).powi(3);
            }
            total += row_sum;
        }
    }
    total
}

/// Unbiased squared MMD with the cubic polynomial kernel.
pub fn kid(x: &FeatureMatrix, y: &FeatureMatrix) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "cannot compare {}-d and {}-d features",
            x.dim(),
            y.dim()
        )));
    }
    for f in [x, y] {
        if f.rows() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: f.rows(),
            });
        }
    }
    let (m, n) = (x.rows() as f64, y.rows() as f64);
    let xm = to_matrix(x);
    let ym = to_matrix(y);
    let kxx = kernel_sum(&xm, &xm, true) / (m * (m - 1.0));
    let kyy = kernel_sum(&ym, &ym, true) / (n * (n - 1.0));
    let kxy = kernel_sum(&xm, &ym, false) / (m * n);
    Ok(kxx + kyy - 2.0 * kxy)
}
