//! Turning command-line inputs into images and feature matrices.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rfeval::extractors::{Embedder, Extractor, NetworkConfig, Tap};
use rfeval::harness::ingest::{decode_image, ingest_images, Dataset, ErrorPolicy};
use rfeval::harness::load_features;
use rfeval::{FeatureMatrix, ImageSet};

use crate::Shared;

impl Shared {
    pub fn network(&self) -> NetworkConfig {
        let net = NetworkConfig::preset(self.extractor);
        match self.input_size {
            Some(s) => net.with_input_size(s),
            None => net,
        }
    }

    pub fn policy(&self) -> ErrorPolicy {
        if self.skip_unreadable {
            ErrorPolicy::Continue
        } else {
            ErrorPolicy::Abort
        }
    }

    /// Explicit seeds, or `default` when none were given.
    pub fn seeds_or(&self, default: &[u64]) -> Result<Vec<u64>> {
        let seeds = if self.seeds.is_empty() {
            default.to_vec()
        } else {
            self.seeds.clone()
        };
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        ensure!(sorted.len() == seeds.len(), "seeds must be distinct, got {seeds:?}");
        Ok(seeds)
    }

    pub fn first_seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }

    pub fn extractor_for(&self, seed: u64, tap: Tap) -> Result<Extractor> {
        Ok(Extractor::new(&self.network(), seed, tap)?.with_batch_size(self.batch_size))
    }

    pub fn load_dir(&self, dir: &Path) -> Result<Dataset> {
        let ds = ingest_images(dir, self.limit, self.policy())
            .with_context(|| format!("loading images from {}", dir.display()))?;
        for s in &ds.manifest.skipped {
            eprintln!("skipped {}: {}", s.file, s.message);
        }
        Ok(ds)
    }
}

/// Features for one seed: one matrix per input role, in input order.
pub struct SeedGroup {
    pub seed: Option<u64>,
    pub sets: Vec<FeatureMatrix>,
}

/// Resolves `arity` inputs per seed.
///
/// With `--features`, files are consumed `arity` at a time, each chunk forming
/// one group whose seed is read from the first file's metadata. Otherwise
/// `inputs` must be `arity` image directories, embedded once per seed.
pub fn feature_groups(
    shared: &Shared,
    inputs: &[PathBuf],
    arity: usize,
    default_seeds: &[u64],
) -> Result<Vec<SeedGroup>> {
    if !shared.features.is_empty() {
        ensure!(inputs.is_empty(), "give either image directories or --features, not both");
        ensure!(
            shared.features.len().is_multiple_of(arity),
            "expected a multiple of {arity} --features files, got {}",
            shared.features.len()
        );
        return shared
            .features
            .chunks(arity)
            .map(|chunk| {
                let sets = chunk.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
                Ok(SeedGroup {
                    seed: sets[0].meta.seed,
                    sets,
                })
            })
            .collect();
    }
    ensure!(
        inputs.len() == arity,
        "expected {arity} image directories (or --features files), got {}",
        inputs.len()
    );
    let images: Vec<ImageSet> = inputs
        .iter()
        .map(|dir| Ok(shared.load_dir(dir)?.images))
        .collect::<Result<_>>()?;
    shared
        .seeds_or(default_seeds)?
        .into_iter()
        .map(|seed| {
            let ex = shared.extractor_for(seed, shared.tap)?;
            let sets = images.iter().map(|set| ex.embed(set)).collect::<rfeval::Result<_>>()?;
            Ok(SeedGroup { seed: Some(seed), sets })
        })
        .collect()
}

pub fn load(path: &Path) -> Result<FeatureMatrix> {
    load_features(path).with_context(|| format!("reading feature file {}", path.display()))
}

pub fn single_image(path: &Path) -> Result<ImageSet> {
    if path.is_dir() {
        bail!("{} is a directory, expected one image file", path.display());
    }
    Ok(ImageSet::new(vec![decode_image(path)?])?)
}
