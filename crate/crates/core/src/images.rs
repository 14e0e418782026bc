//! RGB image collections with values in `[0, 1]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered set of `3×H×W` images. Sizes may differ between images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    images: Vec<Tensor>,
}

impl ImageSet {
    pub fn new(images: Vec<Tensor>) -> Result<Self> {
        for (i, img) in images.iter().enumerate() {
            if img.ndim() != 3 || img.shape()[0] != 3 {
                return Err(Error::Shape(format!(
                    "image {i} must be 3×H×W, got {:?}",
                    img.shape()
                )));
            }
        }
        Ok(Self { images })
    }

    /// Splits a `B×3×H×W` batch into individual images.
    pub fn from_batch(batch: &Tensor) -> Result<Self> {
        if batch.ndim() != 4 {
            return Err(Error::Shape(format!(
                "expected a BCHW batch, got {:?}",
                batch.shape()
            )));
        }
        let images = (0..batch.shape()[0])
            .map(|i| batch.index_axis0(i))
            .collect::<Result<Vec<_>>>()?;
        Self::new(images)
    }

    /// Stacks into a `B×3×H×W` batch; all images must share a size.
    pub fn to_batch(&self) -> Result<Tensor> {
        Tensor::stack(&self.images)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.images[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tensor> {
        self.images.iter()
    }

    pub fn as_slice(&self) -> &[Tensor] {
        &self.images
    }

    pub fn into_vec(self) -> Vec<Tensor> {
        self.images
    }

    pub fn replace(&mut self, i: usize, image: Tensor) -> Result<()> {
        if image.ndim() != 3 || image.shape()[0] != 3 {
            return Err(Error::Shape(format!(
                "replacement must be 3×H×W, got {:?}",
                image.shape()
            )));
        }
        self.images[i] = image;
        Ok(())
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> ImageSet {
        ImageSet {
            images: self.images[range].to_vec(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> ImageSet {
        ImageSet {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
        }
    }

    pub fn concat(mut self, other: ImageSet) -> ImageSet {
        self.images.extend(other.images);
        self
    }
}

/// Bilinear resize of a `C×H×W` image with half-pixel centers (edge-clamped).
pub fn resize_bilinear(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::Shape(format!("resize expects C×H×W, got {:?}", image.shape())));
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::Param("resize target must be positive".into()));
    }
    if h == out_h && w == out_w {
        return Ok(image.clone());
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, (src - i0 as f64) as f32)
            })
            .collect()
    };
    let ys = taps(h, out_h);
    let xs = taps(w, out_w);
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for plane in image.data().chunks_exact(h * w) {
        for &(y0, y1, fy) in &ys {
            let r0 = &plane[y0 * w..(y0 + 1) * w];
            let r1 = &plane[y1 * w..(y1 + 1) * w];
            for &(x0, x1, fx) in &xs {
                let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                out.push(top + (bot - top) * fy);
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}
