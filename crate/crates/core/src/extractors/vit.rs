//! Pre-norm Vision Transformer without a class token; features are the
//! mean of the final (layer-normalized) tokens.

use crate::error::{Error, Result};
use crate::tensor::{
    add_assign, conv2d, gelu, kaiming_uniform_init, layer_norm, linear, multi_head_attention,
    AttentionWeights, Rng, Tensor,
};

const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNormParams {
    fn new(dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::filled(&[dim], 1.0)?,
            beta: Tensor::zeros(&[dim])?,
        })
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, &self.gamma, &self.beta, LN_EPS)
    }

    fn len(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub norm1: LayerNormParams,
    pub attn: AttentionWeights,
    pub norm2: LayerNormParams,
    pub fc1: Tensor,
    pub fc1_bias: Tensor,
    pub fc2: Tensor,
    pub fc2_bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct VitWeights {
    pub patch_size: usize,
    pub heads: usize,
    pub patch_weight: Tensor,
    pub patch_bias: Tensor,
    pub pos_embed: Tensor,
    pub blocks: Vec<Block>,
    pub norm: LayerNormParams,
}

pub(crate) struct VitShape {
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub patch_size: usize,
    pub mlp_ratio: usize,
    pub tokens: usize,
}

impl VitWeights {
    pub fn build(s: &VitShape, rng: &mut Rng) -> Result<Self> {
        let d = s.dim;
        let hidden = d * s.mlp_ratio;
        let p = s.patch_size;
        let patch_weight = kaiming_uniform_init(rng, &[d, 3, p, p], 3 * p * p)?;
        let pos_embed = kaiming_uniform_init(rng, &[s.tokens, d], d)?;
        let mut blocks = Vec::with_capacity(s.depth);
        for _ in 0..s.depth {
            let qkv = kaiming_uniform_init(rng, &[d, 3 * d], d)?;
            let proj = kaiming_uniform_init(rng, &[d, d], d)?;
            let fc1 = kaiming_uniform_init(rng, &[d, hidden], d)?;
            let fc2 = kaiming_uniform_init(rng, &[hidden, d], hidden)?;
            blocks.push(Block {
                norm1: LayerNormParams::new(d)?,
                attn: AttentionWeights {
                    qkv,
                    qkv_bias: Tensor::zeros(&[3 * d])?,
                    proj,
                    proj_bias: Tensor::zeros(&[d])?,
                },
                norm2: LayerNormParams::new(d)?,
                fc1,
                fc1_bias: Tensor::zeros(&[hidden])?,
                fc2,
                fc2_bias: Tensor::zeros(&[d])?,
            });
        }
        Ok(Self {
            patch_size: p,
            heads: s.heads,
            patch_weight,
            patch_bias: Tensor::zeros(&[d])?,
            pos_embed,
            blocks,
            norm: LayerNormParams::new(d)?,
        })
    }

    pub fn parameter_count(&self) -> usize {
        let blocks: usize = self
            .blocks
            .iter()
            .map(|b| {
                b.norm1.len()
                    + b.attn.parameter_count()
                    + b.norm2.len()
                    + b.fc1.len()
                    + b.fc1_bias.len()
                    + b.fc2.len()
                    + b.fc2_bias.len()
            })
            .sum();
        self.patch_weight.len()
            + self.patch_bias.len()
            + self.pos_embed.len()
            + blocks
            + self.norm.len()
    }

    fn dim(&self) -> usize {
        self.patch_bias.len()
    }

    /// Patch embeddings of a `B×3×S×S` batch as a `B×T×D` token tensor.
    fn embed_patches(&self, batch: &Tensor) -> Result<Tensor> {
        let p = self.patch_size;
        let conv = conv2d(batch, &self.patch_weight, &self.patch_bias, p, 0)?;
        let (n, d) = (conv.shape()[0], self.dim());
        let t = conv.shape()[2] * conv.shape()[3];
        let mut tokens = vec![0f32; n * t * d];
        for (bc, plane) in conv.data().chunks_exact(t).enumerate() {
            let (b, c) = (bc / d, bc % d);
            for (i, &v) in plane.iter().enumerate() {
                tokens[(b * t + i) * d + c] = v;
            }
        }
        Tensor::new(vec![n, t, d], tokens)
    }

    /// Token-averaged patch embeddings (the stem tap), `B×D`.
    pub fn stem(&self, batch: &Tensor) -> Result<Tensor> {
        mean_tokens(&self.embed_patches(batch)?)
    }

    /// Token-averaged final features, `B×D`.
    ///
    /// Every stage is row-wise or per-sample, so a row never depends on which
    /// other images share the batch.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let mut x = self.embed_patches(batch)?;
        let td = self.pos_embed.len();
        for sample in x.data_mut().chunks_exact_mut(td) {
            sample.iter_mut().zip(self.pos_embed.data()).for_each(|(v, p)| *v += p);
        }
        for b in &self.blocks {
            let h = b.norm1.apply(&x)?;
            add_assign(&mut x, &multi_head_attention(&h, &b.attn, self.heads)?)?;
            let h = b.norm2.apply(&x)?;
            let h = gelu(&linear(&h, &b.fc1, &b.fc1_bias)?);
            add_assign(&mut x, &linear(&h, &b.fc2, &b.fc2_bias)?)?;
        }
        mean_tokens(&self.norm.apply(&x)?)
    }
}

/// Mean over the token axis of `B×T×D`, accumulated in f64.
fn mean_tokens(tokens: &Tensor) -> Result<Tensor> {
    let &[n, t, d] = tokens.shape() else {
        return Err(Error::Shape(format!("expected B×T×D tokens, got {:?}", tokens.shape())));
    };
    let mut out = Vec::with_capacity(n * d);
    for sample in tokens.data().chunks_exact(t * d) {
        let mut acc = vec![0f64; d];
        for row in sample.chunks_exact(d) {
            acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v as f64);
        }
        out.extend(acc.iter().map(|a| (a / t as f64) as f32));
    }
    Tensor::new(vec![n, d], out)
}
