use super::ops::{gemm_strided, linear, softmax_rows};
use super::Tensor;
use crate::error::{Error, Result};

/// Parameters of one multi-head self-attention layer.
///
/// `qkv` maps `D -> 3D` with output columns laid out as `[q | k | v]`; head
/// `h` owns columns `h*D/heads .. (h+1)*D/heads` of each part.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub qkv: Tensor,
    pub qkv_bias: Tensor,
    pub proj: Tensor,
    pub proj_bias: Tensor,
}

impl AttentionWeights {
    pub fn dim(&self) -> usize {
        self.proj.shape()[0]
    }

    pub fn parameter_count(&self) -> usize {
        self.qkv.len() + self.qkv_bias.len() + self.proj.len() + self.proj_bias.len()
    }
}

/// Scaled dot-product self-attention over `N×T×D` tokens.
pub fn multi_head_attention(
    tokens: &Tensor,
    weights: &AttentionWeights,
    heads: usize,
) -> Result<Tensor> {
    let &[n, t, d] = tokens.shape() else {
        return Err(Error::Shape(format!(
            "attention input must be N×T×D, got {:?}",
            tokens.shape()
        )));
    };
    if heads == 0 || d % heads != 0 {
        return Err(Error::Param(format!("dim {d} not divisible by {heads} heads")));
    }
    if weights.qkv.shape() != [d, 3 * d] || weights.proj.shape() != [d, d] {
        return Err(Error::Shape(format!(
            "attention weights {:?}/{:?} do not match dim {d}",
            weights.qkv.shape(),
            weights.proj.shape()
        )));
    }
    let hd = d / heads;
    let scale = 1.0 / (hd as f32).sqrt();
    let qkv = linear(tokens, &weights.qkv, &weights.qkv_bias)?;
    let row = 3 * d;

    let mut ctx = vec![0f32; n * t * d];
    let mut scores = vec![0f32; t * t];
    let mut head_out = vec![0f32; t * hd];
    for s in 0..n {
        let base = &qkv.data()[s * t * row..(s + 1) * t * row];
        for h in 0..heads {
            let q = &base[h * hd..];
            let k = &base[d + h * hd..];
            let v = &base[2 * d + h * hd..];
            // scores = Q_h · K_hᵀ
            gemm_strided(t, hd, t, q, row, 1, k, 1, row, &mut scores);
            scores.iter_mut().for_each(|x| *x *= scale);
            softmax_rows(&mut scores, t);
            gemm_strided(t, t, hd, &scores, t, 1, v, row, 1, &mut head_out);
            for (i, chunk) in head_out.chunks_exact(hd).enumerate() {
                ctx[(s * t + i) * d + h * hd..][..hd].copy_from_slice(chunk);
            }
        }
    }
    let ctx = Tensor::new(vec![n, t, d], ctx)?;
    linear(&ctx, &weights.proj, &weights.proj_bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0) as f32).unwrap()
    }

    fn random_weights(d: usize, rng: &mut Rng) -> AttentionWeights {
        AttentionWeights {
            qkv: random(&[d, 3 * d], rng),
            qkv_bias: random(&[3 * d], rng),
            proj: random(&[d, d], rng),
            proj_bias: random(&[d], rng),
        }
    }

    /// Scalar-loop oracle for one sample.
    fn oracle(x: &[f32], t: usize, d: usize, w: &AttentionWeights, heads: usize) -> Vec<f64> {
        let hd = d / heads;
        let proj = |inp: &[f64], wt: &Tensor, b: &Tensor, e: usize| -> Vec<f64> {
            let din = inp.len() / t;
            let mut out = vec![0.0; t * e];
            for i in 0..t {
                for j in 0..e {
                    let mut acc = b.data()[j] as f64;
                    for k in 0..din {
                        acc += inp[i * din + k] * wt.data()[k * e + j] as f64;
                    }
                    out[i * e + j] = acc;
                }
            }
            out
        };
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let qkv = proj(&xf, &w.qkv, &w.qkv_bias, 3 * d);
        let mut ctx = vec![0.0; t * d];
        for h in 0..heads {
            for i in 0..t {
                let mut logits = vec![0.0; t];
                for j in 0..t {
                    let mut s = 0.0;
                    for c in 0..hd {
                        s += qkv[i * 3 * d + h * hd + c] * qkv[j * 3 * d + d + h * hd + c];
                    }
                    logits[j] = s / (hd as f64).sqrt();
                }
                let m = logits.iter().cloned().fold(f64::MIN, f64::max);
                let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
                for j in 0..t {
                    let p = (logits[j] - m).exp() / z;
                    for c in 0..hd {
                        ctx[i * d + h * hd + c] += p * qkv[j * 3 * d + 2 * d + h * hd + c];
                    }
                }
            }
        }
        proj(&ctx, &w.proj, &w.proj_bias, d)
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = Rng::new(1);
        let (n, t, d, heads) = (2, 5, 12, 3);
        let w = random_weights(d, &mut rng);
        let x = random(&[n, t, d], &mut rng);
        let y = multi_head_attention(&x, &w, heads).unwrap();
        assert_eq!(y.shape(), &[n, t, d]);
        for s in 0..n {
            let want = oracle(&x.data()[s * t * d..(s + 1) * t * d], t, d, &w, heads);
            for (g, w) in y.data()[s * t * d..(s + 1) * t * d].iter().zip(&want) {
                assert!((*g as f64 - w).abs() <= 1e-5 * (1.0 + w.abs()), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn single_token_returns_projected_value() {
        let mut rng = Rng::new(2);
        let d = 8;
        let w = random_weights(d, &mut rng);
        let x = random(&[1, 1, d], &mut rng);
        let y = multi_head_attention(&x, &w, 2).unwrap();
        // attention is [[1]], so output = proj(v)
        let qkv = linear(&x, &w.qkv, &w.qkv_bias).unwrap();
        let v = Tensor::new(vec![1, 1, d], qkv.data()[2 * d..].to_vec()).unwrap();
        let want = linear(&v, &w.proj, &w.proj_bias).unwrap();
        for (a, b) in y.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_query_key_weights_average_values() {
        let mut rng = Rng::new(3);
        let (t, d) = (6, 8);
        let mut w = random_weights(d, &mut rng);
        for r in 0..d {
            w.qkv.data_mut()[r * 3 * d..r * 3 * d + 2 * d].fill(0.0);
        }
        w.qkv_bias.data_mut()[..2 * d].fill(0.0);
        let x = random(&[1, t, d], &mut rng);
        let y = multi_head_attention(&x, &w, 2).unwrap();

        let qkv = linear(&x, &w.qkv, &w.qkv_bias).unwrap();
        let mut mean_v = vec![0f32; d];
        for i in 0..t {
            for (c, m) in mean_v.iter_mut().enumerate() {
                *m += qkv.data()[i * 3 * d + 2 * d + c] / t as f32;
            }
        }
        let want = linear(&Tensor::new(vec![1, d], mean_v).unwrap(), &w.proj, &w.proj_bias).unwrap();
        for row in y.data().chunks(d) {
            for (a, b) in row.iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut rng = Rng::new(4);
        let w = random_weights(8, &mut rng);
        let x = random(&[1, 2, 8], &mut rng);
        assert!(matches!(multi_head_attention(&x, &w, 3), Err(Error::Param(_))));
    }
}
