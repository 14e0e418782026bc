//! VGG-style convolutional stack: 3×3 convolutions (padding 1) with ReLU,
//! 2×2 max-pooling between stages, global average pooling at the end.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{conv2d, global_avg_pool, kaiming_uniform_init, max_pool2d, relu, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VggLayer {
    Conv(usize),
    Pool,
}

/// VGG-11 layer plan (configuration "A"), without the trailing pool.
pub fn vgg11_layers() -> Vec<VggLayer> {
    use VggLayer::*;
    vec![
        Conv(64),
        Pool,
        Conv(128),
        Pool,
        Conv(256),
        Conv(256),
        Pool,
        Conv(512),
        Conv(512),
        Pool,
        Conv(512),
        Conv(512),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum VggOp {
    Conv(ConvLayer),
    Pool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct VggWeights {
    pub ops: Vec<VggOp>,
}

impl VggWeights {
    pub fn build(layers: &[VggLayer], rng: &mut Rng) -> Result<Self> {
        let mut in_ch = 3;
        let mut ops = Vec::with_capacity(layers.len());
        for layer in layers {
            match *layer {
                VggLayer::Conv(out_ch) => {
                    let fan_in = in_ch * 9;
                    let weight = kaiming_uniform_init(rng, &[out_ch, in_ch, 3, 3], fan_in)?;
                    let bias = Tensor::zeros(&[out_ch])?;
                    ops.push(VggOp::Conv(ConvLayer { weight, bias }));
                    in_ch = out_ch;
                }
                VggLayer::Pool => ops.push(VggOp::Pool),
            }
        }
        Ok(Self { ops })
    }

    pub fn parameter_count(&self) -> usize {
        self.ops
            .iter()
            .map(|op| match op {
                VggOp::Conv(c) => c.weight.len() + c.bias.len(),
                VggOp::Pool => 0,
            })
            .sum()
    }

    fn first_conv(&self) -> &ConvLayer {
        match &self.ops[0] {
            VggOp::Conv(c) => c,
            VggOp::Pool => unreachable!("config validation requires a leading conv"),
        }
    }

    /// Globally pooled first-convolution outputs (pre-activation), `B×C1`.
    pub fn stem(&self, batch: &Tensor) -> Result<Tensor> {
        let c = self.first_conv();
        global_avg_pool(&conv2d(batch, &c.weight, &c.bias, 1, 1)?)
    }

    /// Globally pooled final activations, `B×C_last`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let mut x = batch.clone();
        for op in &self.ops {
            x = match op {
                VggOp::Conv(c) => relu(&conv2d(&x, &c.weight, &c.bias, 1, 1)?),
                VggOp::Pool => max_pool2d(&x, 2, 2)?,
            };
        }
        global_avg_pool(&x)
    }
}
