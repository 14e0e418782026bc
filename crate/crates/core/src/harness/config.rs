//! TOML experiment configuration.
//!
//! Relative paths resolve against the directory holding the config file.
//! Schema errors carry the dotted path of the offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ingest::ErrorPolicy;
use super::synthetic::SyntheticData;
use super::{Aggregation, SeedSpec};
use crate::disturbances::{DisturbanceKind, DisturbanceSpec};
use crate::error::{Error, Result};
use crate::extractors::{ExtractorKind, NetworkConfig, Tap};
use crate::metrics::{Metric, DEFAULT_K};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Real set against disturbed copies of itself, one row per level.
    Disturbance,
    /// Real set with real images progressively replaced by outliers.
    Sweep,
    /// Real set against a generated set.
    Compare,
}

/// An image directory or a procedural set; exactly one of the two.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub dir: Option<PathBuf>,
    pub synthetic: Option<SyntheticData>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub real: DataSource,
    pub generated: Option<DataSource>,
    pub contaminant: Option<DataSource>,
    pub outliers: Option<DataSource>,
    #[serde(default)]
    pub on_error: ErrorPolicy,
}

fn default_batch_size() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorSection {
    pub kind: ExtractorKind,
    #[serde(default)]
    pub tap: Tap,
    pub input_size: Option<usize>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_seeds() -> Vec<u64> {
    SeedSpec::default().seeds().to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    #[serde(default = "default_seeds")]
    pub list: Vec<u64>,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl Default for SeedSection {
    fn default() -> Self {
        Self {
            list: default_seeds(),
            aggregation: Aggregation::Mean,
        }
    }
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Fid]
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    #[serde(default = "default_metrics")]
    pub list: Vec<Metric>,
    #[serde(default = "default_k")]
    pub k: usize,
}

impl Default for MetricSection {
    fn default() -> Self {
        Self {
            list: default_metrics(),
            k: DEFAULT_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub kind: DisturbanceKind,
    /// Severity levels 1 to 3; ignored when `params` is given.
    #[serde(default)]
    pub levels: Vec<u8>,
    /// Explicit parameters instead of levels.
    pub params: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub step: usize,
    pub steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub protocol: Protocol,
    pub data: DataSection,
    pub extractor: ExtractorSection,
    #[serde(default)]
    pub seeds: SeedSection,
    #[serde(default)]
    pub metrics: MetricSection,
    pub disturbance: Option<DisturbanceSection>,
    pub sweep: Option<SweepSection>,
    pub output: Option<OutputSection>,
}

impl ExperimentConfig {
    /// Parses and validates; `path` is only used in error messages.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let schema_err = |field: String, message: String| Error::Config {
            path: path.to_path_buf(),
            field,
            message,
        };
        let de = toml::Deserializer::parse(text)
            .map_err(|e| schema_err("<document>".into(), e.message().to_string()))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            schema_err(field, e.into_inner().message().to_string())
        })?;
        config.validate(path)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        let err = |field: &str, message: String| {
            Err(Error::Config {
                path: path.to_path_buf(),
                field: field.into(),
                message,
            })
        };
        if let Err(e) = SeedSpec::new(self.seeds.list.clone(), self.seeds.aggregation) {
            return err("seeds.list", e.to_string());
        }
        if self.metrics.list.is_empty() {
            return err("metrics.list", "at least one metric is required".into());
        }
        if self.metrics.k == 0 {
            return err("metrics.k", "k must be at least 1".into());
        }
        if self.extractor.batch_size == 0 {
            return err("extractor.batch_size", "batch size must be at least 1".into());
        }
        if let Err(e) = self.network().validate() {
            return err("extractor.input_size", e.to_string());
        }
        self.check_source("data.real", Some(&self.data.real), path)?;
        match self.protocol {
            Protocol::Disturbance => {
                let Some(d) = &self.disturbance else {
                    return err("disturbance", "required for the disturbance protocol".into());
                };
                if let Err(e) = self.disturbance_specs() {
                    return err("disturbance", e.to_string());
                }
                if d.kind == DisturbanceKind::ClassContamination {
                    self.check_source("data.contaminant", self.data.contaminant.as_ref(), path)?;
                }
            }
            Protocol::Sweep => {
                let Some(s) = &self.sweep else {
                    return err("sweep", "required for the sweep protocol".into());
                };
                if s.step == 0 {
                    return err("sweep.step", "step must be at least 1".into());
                }
                self.check_source("data.outliers", self.data.outliers.as_ref(), path)?;
            }
            Protocol::Compare => {
                self.check_source("data.generated", self.data.generated.as_ref(), path)?;
            }
        }
        Ok(())
    }

    fn check_source(&self, field: &str, source: Option<&DataSource>, path: &Path) -> Result<()> {
        let message = match source {
            None => Some("required by this protocol"),
            Some(s) if s.dir.is_some() == s.synthetic.is_some() => {
                Some("set exactly one of `dir` and `synthetic`")
            }
            Some(s) if s.limit == Some(0) => Some("limit must be positive"),
            Some(_) => None,
        };
        match message {
            Some(m) => Err(Error::Config {
                path: path.to_path_buf(),
                field: field.into(),
                message: m.into(),
            }),
            None => Ok(()),
        }
    }

    pub fn network(&self) -> NetworkConfig {
        let preset = NetworkConfig::preset(self.extractor.kind);
        match self.extractor.input_size {
            Some(s) => preset.with_input_size(s),
            None => preset,
        }
    }

    pub fn seed_spec(&self) -> Result<SeedSpec> {
        SeedSpec::new(self.seeds.list.clone(), self.seeds.aggregation)
    }

    /// One spec per requested level or explicit parameter, in order.
    pub fn disturbance_specs(&self) -> Result<Vec<DisturbanceSpec>> {
        let d = self
            .disturbance
            .as_ref()
            .ok_or_else(|| Error::Param("no disturbance section".into()))?;
        let specs = match &d.params {
            Some(params) => params
                .iter()
                .map(|&p| DisturbanceSpec::with_param(d.kind, p, d.seed))
                .collect::<Result<Vec<_>>>()?,
            None => d
                .levels
                .iter()
                .map(|&l| DisturbanceSpec::at_level(d.kind, l, d.seed))
                .collect::<Result<Vec<_>>>()?,
        };
        if specs.is_empty() {
            return Err(Error::Param("no levels or params given".into()));
        }
        Ok(specs)
    }
}
