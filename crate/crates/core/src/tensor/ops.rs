use super::Tensor;
use crate::error::{Error, Result};

/// Row-major `c = a · b` where `a` is `m×k` with strides `(rsa, csa)` and
/// `b` is `k×n` with strides `(rsb, csb)`. `c` is overwritten.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    c: &mut [f32],
) {
    assert!(c.len() >= m * n);
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    gemm_strided(m, k, n, a, k, 1, b, n, 1, c);
}

/// 2-D cross-correlation over a `B×C×H×W` batch with an `O×C×K×K` kernel.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let &[batch, channels, height, width] = input.shape() else {
        return Err(Error::Shape(format!("conv2d input must be BCHW, got {:?}", input.shape())));
    };
    let &[out_ch, in_ch, kh, kw] = weight.shape() else {
        return Err(Error::Shape(format!("conv2d weight must be OIKK, got {:?}", weight.shape())));
    };
    if in_ch != channels {
        return Err(Error::Shape(format!(
            "conv2d weight expects {in_ch} input channels, input has {channels}"
        )));
    }
    if kh != kw {
        return Err(Error::Shape(format!("conv2d kernel must be square, got {kh}×{kw}")));
    }
    if bias.shape() != [out_ch] {
        return Err(Error::Shape(format!(
            "conv2d bias must have shape [{out_ch}], got {:?}",
            bias.shape()
        )));
    }
    if stride == 0 {
        return Err(Error::Param("conv2d stride must be positive".into()));
    }
    let k = kh;
    if height + 2 * padding < k || width + 2 * padding < k {
        return Err(Error::Shape(format!(
            "conv2d kernel {k} larger than padded input {height}×{width} (padding {padding})"
        )));
    }
    let oh = (height + 2 * padding - k) / stride + 1;
    let ow = (width + 2 * padding - k) / stride + 1;
    let patch = channels * k * k;
    let plane = oh * ow;

    // Samples are grouped into one gemm over a `patch × (group·plane)` column
    // matrix. Every output column accumulates over the patch in the same order
    // however many columns there are, so grouping never changes results.
    const COLUMN_BUDGET: usize = 1 << 23;
    let group = (COLUMN_BUDGET / (patch * plane).max(1)).clamp(1, batch.max(1));
    let img_len = channels * height * width;
    let mut out = vec![0f32; batch * out_ch * plane];
    for first in (0..batch).step_by(group) {
        let n = group.min(batch - first);
        let cols_n = n * plane;
        let mut cols = vec![0f32; patch * cols_n];
        for j in 0..n {
            let img = &input.data()[(first + j) * img_len..][..img_len];
            im2col(img, channels, height, width, k, stride, padding, oh, ow, &mut cols, cols_n, j * plane);
        }
        let mut prod = vec![0f32; out_ch * cols_n];
        gemm(out_ch, patch, cols_n, weight.data(), &cols, &mut prod);
        for (o, row) in prod.chunks_exact(cols_n).enumerate() {
            let bo = bias.data()[o];
            for j in 0..n {
                let dst = &mut out[((first + j) * out_ch + o) * plane..][..plane];
                for (d, &v) in dst.iter_mut().zip(&row[j * plane..(j + 1) * plane]) {
                    *d = v + bo;
                }
            }
        }
    }
    Tensor::new(vec![batch, out_ch, oh, ow], out)
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    img: &[f32],
    channels: usize,
    height: usize,
    width: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f32],
    row_len: usize,
    offset: usize,
) {
    let plane = oh * ow;
    for c in 0..channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * row_len + offset..][..plane];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= height as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &img[(c * height + iy as usize) * width..][..width];
                    if stride == 1 {
                        // Output column ox reads input column ox + kx - padding.
                        let lo = padding.saturating_sub(kx).min(ow);
                        let hi = (width + padding).saturating_sub(kx).clamp(lo, ow);
                        dst[..lo].fill(0.0);
                        dst[lo..hi].copy_from_slice(&src[lo + kx - padding..hi + kx - padding]);
                        dst[hi..].fill(0.0);
                        continue;
                    }
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        *d = if ix < 0 || ix >= width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// `input (…×D) · weight (D×E) + bias (E)`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let &[d, e] = weight.shape() else {
        return Err(Error::Shape(format!("linear weight must be D×E, got {:?}", weight.shape())));
    };
    if input.last_dim() != d {
        return Err(Error::Shape(format!(
            "linear expects trailing dim {d}, input has shape {:?}",
            input.shape()
        )));
    }
    if bias.shape() != [e] {
        return Err(Error::Shape(format!(
            "linear bias must have shape [{e}], got {:?}",
            bias.shape()
        )));
    }
    let rows = input.len() / d;
    let mut out = vec![0f32; rows * e];
    gemm(rows, d, e, input.data(), weight.data(), &mut out);
    for row in out.chunks_exact_mut(e) {
        row.iter_mut().zip(bias.data()).for_each(|(v, b)| *v += b);
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = e;
    Tensor::new(shape, out)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// GELU, tanh approximation.
pub fn gelu(input: &Tensor) -> Tensor {
    const C: f32 = 0.797_884_6; // sqrt(2 / pi)
    // 0.5 x (1 + tanh u) == x / (1 + exp(-2u)), which needs a single exp.
    input.map(|x| x / (1.0 + (-2.0 * C * (x + 0.044_715 * x * x * x)).exp()))
}

/// Max over `kernel×kernel` windows, no padding.
pub fn max_pool2d(input: &Tensor, kernel: usize, stride: usize) -> Result<Tensor> {
    let &[batch, channels, height, width] = input.shape() else {
        return Err(Error::Shape(format!("max_pool2d input must be BCHW, got {:?}", input.shape())));
    };
    if kernel == 0 || stride == 0 {
        return Err(Error::Param("max_pool2d kernel and stride must be positive".into()));
    }
    if kernel > height || kernel > width {
        return Err(Error::Shape(format!(
            "max_pool2d window {kernel} larger than input {height}×{width}"
        )));
    }
    let oh = (height - kernel) / stride + 1;
    let ow = (width - kernel) / stride + 1;
    let mut out = Vec::with_capacity(batch * channels * oh * ow);
    for plane in input.data().chunks_exact(height * width) {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..kernel {
                    let row = &plane[(oy * stride + ky) * width + ox * stride..][..kernel];
                    m = row.iter().copied().fold(m, f32::max);
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![batch, channels, oh, ow], out)
}

/// Mean over all spatial positions: `B×C×H×W -> B×C`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let &[batch, channels, height, width] = input.shape() else {
        return Err(Error::Shape(format!(
            "global_avg_pool input must be BCHW, got {:?}",
            input.shape()
        )));
    };
    let area = (height * width) as f64;
    let out = input
        .data()
        .chunks_exact(height * width)
        .map(|plane| (plane.iter().map(|&v| v as f64).sum::<f64>() / area) as f32)
        .collect();
    Tensor::new(vec![batch, channels], out)
}

/// Standardizes each row of the trailing axis, then applies `gamma`/`beta`.
pub fn layer_norm(input: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let d = input.last_dim();
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::Shape(format!(
            "layer_norm affine params must have shape [{d}], got {:?} and {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let mut out = Vec::with_capacity(input.len());
    for row in input.data().chunks_exact(d) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        out.extend(row.iter().zip(gamma.data()).zip(beta.data()).map(|((&x, &g), &b)| {
            ((x as f64 - mean) * inv) as f32 * g + b
        }));
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// Softmax along the trailing axis.
pub fn softmax(input: &Tensor) -> Tensor {
    let d = input.last_dim();
    let mut out = input.data().to_vec();
    softmax_rows(&mut out, d);
    Tensor::new(input.shape().to_vec(), out).expect("shape unchanged")
}

pub(crate) fn softmax_rows(data: &mut [f32], d: usize) {
    for row in data.chunks_exact_mut(d) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0f64;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v as f64;
        }
        let inv = 1.0 / sum;
        row.iter_mut().for_each(|v| *v = (*v as f64 * inv) as f32);
    }
}

/// Elementwise `acc += other`.
pub fn add_assign(acc: &mut Tensor, other: &Tensor) -> Result<()> {
    if acc.shape() != other.shape() {
        return Err(Error::Shape(format!(
            "cannot add {:?} to {:?}",
            other.shape(),
            acc.shape()
        )));
    }
    acc.data_mut()
        .iter_mut()
        .zip(other.data())
        .for_each(|(a, b)| *a += b);
    Ok(())
}
