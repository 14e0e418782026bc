//! Ingestion, feature caching, experiment configuration and reporting.

pub mod cache;
pub mod config;
pub mod experiment;
pub mod ingest;
pub mod synthetic;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{decode_features, encode_features, load_features, save_features};
pub use config::ExperimentConfig;
pub use experiment::{run_config, run_experiment, run_experiment_to, ExperimentReport, RunOutput};
pub use ingest::{ingest_images, save_png, Dataset, DatasetManifest, ErrorPolicy};

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Tables and curves show the seed mean and standard deviation.
    #[default]
    Mean,
    /// Tables and curves list every seed separately.
    PerSeed,
}

/// Weight-initialization seeds for a sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedSpec {
    seeds: Vec<u64>,
    pub aggregation: Aggregation,
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            aggregation: Aggregation::Mean,
        }
    }
}

impl SeedSpec {
    pub fn new(seeds: Vec<u64>, aggregation: Aggregation) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::Param("seed list is empty".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Param(format!("seed {} is listed twice", w[0])));
        }
        Ok(Self { seeds, aggregation })
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }
}
