//! Evaluation of generated image sets in the feature spaces of randomly
//! initialized networks: Fréchet distance, kernel MMD and k-NN precision /
//! recall over seeded random CNN and ViT embeddings, image disturbances,
//! two-space outlier analysis, and a reproducible experiment harness.

pub mod disturbances;
pub mod error;
pub mod extractors;
pub mod features;
pub mod harness;
pub mod images;
pub mod metrics;
pub mod neighbors;
pub mod outliers;
pub mod tensor;

pub use error::{Error, Result};
pub use features::{FeatureMatrix, FeatureMeta};
pub use images::ImageSet;
