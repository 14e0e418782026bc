//! Randomly initialized feature networks.
//!
//! Two families are provided: a VGG-style CNN and a Vision Transformer. Every
//! weight tensor is drawn with Kaiming-uniform initialization from a single
//! seeded generator in a fixed layer order, so `(config, seed)` fully
//! determines a network. Biases start at zero and layer-norm affines at the
//! identity.
//!
//! Two tap points are exposed:
//! * `final`: globally pooled output of the last stage (CNN) or the mean of
//!   the final normalized tokens (ViT).
//! * `stem`: globally pooled output of the first convolution, before any
//!   nonlinearity. For the ViT that convolution is the patch embedding.

mod vgg;
mod vit;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use vgg::{vgg11_layers, VggLayer};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureMeta};
use crate::images::{resize_bilinear, ImageSet};
use crate::tensor::{Rng, Tensor};
use vgg::VggWeights;
use vit::{VitShape, VitWeights};

/// Named network presets accepted on the command line and in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtractorKind {
    #[serde(rename = "cnn-vgg")]
    CnnVgg,
    #[serde(rename = "vit-t")]
    VitT,
    #[serde(rename = "vit-b")]
    VitB,
}

impl ExtractorKind {
    pub fn name(self) -> &'static str {
        match self {
            ExtractorKind::CnnVgg => "cnn-vgg",
            ExtractorKind::VitT => "vit-t",
            ExtractorKind::VitB => "vit-b",
        }
    }
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExtractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn-vgg" | "vgg" => Ok(ExtractorKind::CnnVgg),
            "vit-t" => Ok(ExtractorKind::VitT),
            "vit-b" => Ok(ExtractorKind::VitB),
            other => Err(Error::Param(format!(
                "unknown extractor `{other}` (expected cnn-vgg, vit-t or vit-b)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tap {
    #[default]
    Final,
    Stem,
}

impl Tap {
    pub fn name(self) -> &'static str {
        match self {
            Tap::Final => "final",
            Tap::Stem => "stem",
        }
    }
}

impl FromStr for Tap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final" => Ok(Tap::Final),
            "stem" => Ok(Tap::Stem),
            other => Err(Error::Param(format!("unknown tap `{other}` (expected final or stem)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    CnnVgg,
    Vit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Architecture {
    Vgg {
        layers: Vec<VggLayer>,
    },
    Vit {
        dim: usize,
        depth: usize,
        heads: usize,
        patch_size: usize,
        mlp_ratio: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub name: String,
    pub arch: Architecture,
    /// Square input resolution in pixels.
    pub input_size: usize,
}

impl NetworkConfig {
    pub fn vgg11() -> Self {
        Self {
            name: "cnn-vgg".into(),
            arch: Architecture::Vgg {
                layers: vgg11_layers(),
            },
            input_size: 224,
        }
    }

    pub fn vit_tiny() -> Self {
        Self {
            name: "vit-t".into(),
            arch: Architecture::Vit {
                dim: 192,
                depth: 12,
                heads: 3,
                patch_size: 16,
                mlp_ratio: 4,
            },
            input_size: 224,
        }
    }

    pub fn vit_base() -> Self {
        Self {
            name: "vit-b".into(),
            arch: Architecture::Vit {
                dim: 768,
                depth: 12,
                heads: 12,
                patch_size: 16,
                mlp_ratio: 4,
            },
            input_size: 224,
        }
    }

    pub fn preset(kind: ExtractorKind) -> Self {
        match kind {
            ExtractorKind::CnnVgg => Self::vgg11(),
            ExtractorKind::VitT => Self::vit_tiny(),
            ExtractorKind::VitB => Self::vit_base(),
        }
    }

    pub fn with_input_size(mut self, input_size: usize) -> Self {
        self.input_size = input_size;
        self
    }

    pub fn family(&self) -> Family {
        match self.arch {
            Architecture::Vgg { .. } => Family::CnnVgg,
            Architecture::Vit { .. } => Family::Vit,
        }
    }

    /// Output dimension of the `final` tap.
    pub fn feature_dim(&self) -> usize {
        match &self.arch {
            Architecture::Vgg { layers } => layers
                .iter()
                .rev()
                .find_map(|l| match l {
                    VggLayer::Conv(w) => Some(*w),
                    VggLayer::Pool => None,
                })
                .unwrap_or(0),
            Architecture::Vit { dim, .. } => *dim,
        }
    }

    /// Output dimension of the given tap.
    pub fn tap_dim(&self, tap: Tap) -> usize {
        match (tap, &self.arch) {
            (Tap::Final, _) => self.feature_dim(),
            (Tap::Stem, Architecture::Vgg { layers }) => match layers.first() {
                Some(VggLayer::Conv(w)) => *w,
                _ => 0,
            },
            (Tap::Stem, Architecture::Vit { dim, .. }) => *dim,
        }
    }

    /// Identifier recorded in feature metadata, e.g. `vit-t@64`.
    pub fn id(&self) -> String {
        format!("{}@{}", self.name, self.input_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::Param("input_size must be positive".into()));
        }
        match &self.arch {
            Architecture::Vgg { layers } => {
                if !matches!(layers.first(), Some(VggLayer::Conv(_))) {
                    return Err(Error::Param("VGG layer plan must start with a convolution".into()));
                }
                let mut size = self.input_size;
                for l in layers {
                    match l {
                        VggLayer::Conv(0) => {
                            return Err(Error::Param("convolution width must be positive".into()))
                        }
                        VggLayer::Conv(_) => {}
                        VggLayer::Pool => {
                            if size < 2 {
                                return Err(Error::Param(format!(
                                    "input_size {} too small for {} pooling stages",
                                    self.input_size,
                                    layers.iter().filter(|l| **l == VggLayer::Pool).count()
                                )));
                            }
                            size /= 2;
                        }
                    }
                }
            }
            Architecture::Vit {
                dim,
                depth,
                heads,
                patch_size,
                mlp_ratio,
            } => {
                if *dim == 0 || *depth == 0 || *heads == 0 || *patch_size == 0 || *mlp_ratio == 0 {
                    return Err(Error::Param("ViT dimensions must be positive".into()));
                }
                if dim % heads != 0 {
                    return Err(Error::Param(format!(
                        "ViT dim {dim} not divisible by {heads} heads"
                    )));
                }
                if !self.input_size.is_multiple_of(*patch_size) {
                    return Err(Error::Param(format!(
                        "input_size {} not divisible by patch size {patch_size}",
                        self.input_size
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Vgg(VggWeights),
    Vit(Box<VitWeights>),
}

/// Parameters of a built network; immutable and shareable.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    config: NetworkConfig,
    seed: u64,
    body: Body,
}

impl NetworkWeights {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn parameter_count(&self) -> usize {
        match &self.body {
            Body::Vgg(v) => v.parameter_count(),
            Body::Vit(v) => v.parameter_count(),
        }
    }
}

pub fn build_network(config: &NetworkConfig, seed: u64) -> Result<NetworkWeights> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let body = match &config.arch {
        Architecture::Vgg { layers } => Body::Vgg(VggWeights::build(layers, &mut rng)?),
        Architecture::Vit {
            dim,
            depth,
            heads,
            patch_size,
            mlp_ratio,
        } => {
            let grid = config.input_size / patch_size;
            Body::Vit(Box::new(VitWeights::build(
                &VitShape {
                    dim: *dim,
                    depth: *depth,
                    heads: *heads,
                    patch_size: *patch_size,
                    mlp_ratio: *mlp_ratio,
                    tokens: grid * grid,
                },
                &mut rng,
            )?))
        }
    };
    Ok(NetworkWeights {
        config: config.clone(),
        seed,
        body,
    })
}

/// Description of [`preprocess`] recorded in feature metadata.
pub fn preprocessing_descriptor(config: &NetworkConfig) -> String {
    format!(
        "bilinear-half-pixel:{0}x{0};normalize:mean=0.5,std=0.5",
        config.input_size
    )
}

/// Resizes every image to the network input size and maps `[0, 1]` to `[-1, 1]`.
pub fn preprocess(images: &ImageSet, config: &NetworkConfig) -> Result<Tensor> {
    if images.is_empty() {
        return Err(Error::EmptyDataset("no images to preprocess".into()));
    }
    let s = config.input_size;
    let resized = images
        .iter()
        .map(|img| resize_bilinear(img, s, s).map(|t| t.map(|v| (v - 0.5) / 0.5)))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&resized)
}

/// Embeds an already preprocessed `B×3×S×S` batch.
pub fn extract(
    weights: &NetworkWeights,
    images: &Tensor,
    tap: Tap,
    batch_size: usize,
) -> Result<FeatureMatrix> {
    let s = weights.config.input_size;
    if images.ndim() != 4 || images.shape()[1..] != [3, s, s] {
        return Err(Error::Shape(format!(
            "expected preprocessed B×3×{s}×{s} images, got {:?}",
            images.shape()
        )));
    }
    let n = images.shape()[0];
    let batch_size = batch_size.max(1);
    let per_image = 3 * s * s;
    let mut rows = Vec::with_capacity(n * weights.config.tap_dim(tap));
    for start in (0..n).step_by(batch_size) {
        let end = (start + batch_size).min(n);
        let chunk = Tensor::new(
            vec![end - start, 3, s, s],
            images.data()[start * per_image..end * per_image].to_vec(),
        )?;
        rows.extend_from_slice(forward(weights, &chunk, tap)?.data());
    }
    FeatureMatrix::new(
        n,
        weights.config.tap_dim(tap),
        rows,
        FeatureMeta {
            extractor: weights.config.id(),
            seed: Some(weights.seed),
            tap: tap.name().into(),
            preprocessing: preprocessing_descriptor(&weights.config),
            dataset: String::new(),
        },
    )
}

fn forward(weights: &NetworkWeights, batch: &Tensor, tap: Tap) -> Result<Tensor> {
    match (&weights.body, tap) {
        (Body::Vgg(v), Tap::Final) => v.forward(batch),
        (Body::Vgg(v), Tap::Stem) => v.stem(batch),
        (Body::Vit(v), Tap::Final) => v.forward(batch),
        (Body::Vit(v), Tap::Stem) => v.stem(batch),
    }
}

/// Preprocesses and embeds raw images chunk by chunk.
pub fn embed(
    weights: &NetworkWeights,
    images: &ImageSet,
    tap: Tap,
    batch_size: usize,
) -> Result<FeatureMatrix> {
    if images.is_empty() {
        return Err(Error::EmptyDataset("no images to embed".into()));
    }
    let batch_size = batch_size.max(1);
    let mut parts = Vec::new();
    for start in (0..images.len()).step_by(batch_size) {
        let chunk = images.slice(start..(start + batch_size).min(images.len()));
        let batch = preprocess(&chunk, &weights.config)?;
        parts.push(extract(weights, &batch, tap, batch_size)?);
    }
    FeatureMatrix::concat(&parts)
}

/// One feature matrix per seed, in seed order.
pub fn seed_sweep_extract(
    config: &NetworkConfig,
    seeds: &[u64],
    images: &ImageSet,
    tap: Tap,
    batch_size: usize,
) -> Result<Vec<FeatureMatrix>> {
    seeds
        .iter()
        .map(|&seed| embed(&build_network(config, seed)?, images, tap, batch_size))
        .collect()
}

/// Anything that maps an image set to features.
pub trait Embedder {
    fn embed(&self, images: &ImageSet) -> Result<FeatureMatrix>;
}

/// A built network bound to a tap point and batch size.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub weights: NetworkWeights,
    pub tap: Tap,
    pub batch_size: usize,
}

impl Extractor {
    pub fn new(config: &NetworkConfig, seed: u64, tap: Tap) -> Result<Self> {
        Ok(Self {
            weights: build_network(config, seed)?,
            tap,
            batch_size: 32,
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }
}

impl Embedder for Extractor {
    fn embed(&self, images: &ImageSet) -> Result<FeatureMatrix> {
        embed(&self.weights, images, self.tap, self.batch_size)
    }
}
