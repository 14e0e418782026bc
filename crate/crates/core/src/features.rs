//! Embedding matrices and their provenance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a feature matrix came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub extractor: String,
    pub seed: Option<u64>,
    pub tap: String,
    pub preprocessing: String,
    pub dataset: String,
}

/// `N×D` row-major embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    pub meta: FeatureMeta,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>, meta: FeatureMeta) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "feature matrix must be non-empty, got {rows}×{dim}"
            )));
        }
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "{rows}×{dim} feature matrix needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite feature value in row {}",
                pos / dim
            )));
        }
        Ok(Self {
            rows,
            dim,
            data,
            meta,
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], meta: FeatureMeta) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != dim {
                return Err(Error::Shape(format!(
                    "row {i} has length {}, expected {dim}",
                    r.as_ref().len()
                )));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), dim, data, meta)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::Input(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.dim, data, self.meta.clone())
    }

    /// Overwrites row `i` with `values`.
    pub fn set_row(&mut self, i: usize, values: &[f32]) -> Result<()> {
        if i >= self.rows || values.len() != self.dim {
            return Err(Error::Shape(format!(
                "cannot write a {}-vector into row {i} of a {}×{} matrix",
                values.len(),
                self.rows,
                self.dim
            )));
        }
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(values);
        Ok(())
    }

    /// Stacks row blocks that share a dimension; metadata is taken from the first.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Input("cannot concatenate zero feature matrices".into()))?;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.dim != first.dim {
                return Err(Error::Shape(format!(
                    "cannot concatenate dims {} and {}",
                    first.dim, p.dim
                )));
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Self::new(rows, first.dim, data, first.meta.clone())
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}
