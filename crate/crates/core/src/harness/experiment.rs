//! Running a configured experiment and writing its reports.
//!
//! Output files in the report directory:
//!
//! - `report.json`: the deterministic payload, schema [`REPORT_SCHEMA_VERSION`].
//! - `report.csv`: one row per condition and metric (or per seed with
//!   `aggregation = "per-seed"`).
//! - `plot_<metric>.csv`: curve data with `x` and `y` columns.
//! - `report.meta.json`: timestamps and environment details, kept apart so the
//!   payload can be diffed across runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataSource, ExperimentConfig, Protocol};
use super::ingest::{ingest_images, ErrorPolicy};
use super::synthetic::synthetic_images;
use super::{write_atomic, Aggregation};
use crate::error::{Error, Result};
use crate::extractors::{preprocessing_descriptor, Embedder, Extractor, NetworkConfig};
use crate::images::ImageSet;
use crate::metrics::{aggregate_seeds, Metric, Reference, SeedSummary};
use crate::outliers::{replacement_sweep_features, SweepParams};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub role: String,
    /// Directory as written in the config, or `synthetic:<count>x<size>:<seed>`.
    pub source: String,
    pub id: String,
    pub count: usize,
    pub skipped: usize,
}

/// One metric under one condition across all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: String,
    pub level: Option<u8>,
    /// Disturbance parameter or outlier proportion; zero for comparisons.
    pub x: f64,
    pub metric: Metric,
    pub per_seed: Vec<f64>,
    #[serde(flatten)]
    pub summary: SeedSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub name: String,
    pub protocol: Protocol,
    pub network: NetworkConfig,
    pub extractor: String,
    pub tap: String,
    pub preprocessing: String,
    pub seeds: Vec<u64>,
    pub aggregation: Aggregation,
    pub k: usize,
    pub x_label: String,
    pub datasets: Vec<DatasetSummary>,
    pub results: Vec<ConditionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub config: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub elapsed_ms: u128,
    /// Hex SHA-256 of the `report.json` bytes.
    pub report_sha256: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub meta: RunMeta,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

fn load_source(
    role: &str,
    source: &DataSource,
    base_dir: &Path,
    policy: ErrorPolicy,
) -> Result<(ImageSet, DatasetSummary)> {
    if let Some(dir) = &source.dir {
        let dataset = ingest_images(&base_dir.join(dir), source.limit, policy)?;
        let summary = DatasetSummary {
            role: role.into(),
            source: dir.to_string_lossy().replace('\\', "/"),
            id: dataset.manifest.id.clone(),
            count: dataset.images.len(),
            skipped: dataset.manifest.skipped.len(),
        };
        return Ok((dataset.images, summary));
    }
    let spec = source
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Param(format!("{role} has no image source")))?;
    let mut images = synthetic_images(spec)?;
    if let Some(limit) = source.limit {
        images = images.slice(0..limit.min(images.len()));
    }
    let label = format!("synthetic:{}x{}:{}", spec.count, spec.size, spec.seed);
    let summary = DatasetSummary {
        role: role.into(),
        id: super::ingest::dataset_id(std::slice::from_ref(&label)),
        source: label,
        count: images.len(),
        skipped: 0,
    };
    Ok((images, summary))
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

struct Condition {
    name: String,
    level: Option<u8>,
    x: f64,
}

/// Values indexed `[condition][metric][seed]`.
type Grid = Vec<Vec<Vec<f64>>>;

/// Executes the configured pipeline. Relative data paths resolve against
/// `base_dir`. Nothing is written to disk.
pub fn run_config(config: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentReport> {
    let policy = config.data.on_error;
    let network = config.network();
    let seeds = config.seed_spec()?;
    let metrics = &config.metrics.list;
    let k = config.metrics.k;
    let tap = config.extractor.tap;
    let batch_size = config.extractor.batch_size;

    let (real, real_summary) = load_source("real", &config.data.real, base_dir, policy)?;
    let mut datasets = vec![real_summary];

    let new_grid = |conditions: usize| -> Grid { vec![vec![Vec::new(); metrics.len()]; conditions] };
    let (conditions, grid, x_label) = match config.protocol {
        Protocol::Disturbance => {
            let specs = config.disturbance_specs()?;
            let contaminants = match &config.data.contaminant {
                Some(src) if specs[0].kind == crate::disturbances::DisturbanceKind::ClassContamination => {
                    let (set, summary) = load_source("contaminant", src, base_dir, policy)?;
                    datasets.push(summary);
                    Some(set)
                }
                _ => None,
            };
            let disturbed = specs
                .iter()
                .map(|s| s.apply(&real, contaminants.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            let mut grid = new_grid(specs.len());
            for &seed in seeds.seeds() {
                let extractor = Extractor::new(&network, seed, tap)?.with_batch_size(batch_size);
                let real_f = extractor.embed(&real)?;
                let mut reference = Reference::new(&real_f);
                for (c, set) in disturbed.iter().enumerate() {
                    let f = extractor.embed(set)?;
                    for (m, &metric) in metrics.iter().enumerate() {
                        grid[c][m].push(reference.evaluate(metric, &f, k)?);
                    }
                }
            }
            let conditions = specs
                .iter()
                .map(|s| Condition {
                    name: match s.level {
                        Some(l) => format!("{}@{l}", s.kind),
                        None => format!("{}={}", s.kind, s.param),
                    },
                    level: s.level,
                    x: s.param,
                })
                .collect::<Vec<_>>();
            (conditions, grid, "param")
        }
        Protocol::Sweep => {
            let sweep = config
                .sweep
                .as_ref()
                .ok_or_else(|| Error::Param("no sweep section".into()))?;
            let src = config.data.outliers.as_ref().expect("validated");
            let (outliers, summary) = load_source("outliers", src, base_dir, policy)?;
            datasets.push(summary);
            let mut grid: Grid = Vec::new();
            let mut conditions = Vec::new();
            for &seed in seeds.seeds() {
                let extractor = Extractor::new(&network, seed, tap)?.with_batch_size(batch_size);
                let real_f = extractor.embed(&real)?;
                let out_f = extractor.embed(&outliers)?;
                for (m, &metric) in metrics.iter().enumerate() {
                    let params = SweepParams {
                        step: sweep.step,
                        steps: sweep.steps,
                        seed: sweep.seed,
                        metric,
                        k,
                    };
                    let curve = replacement_sweep_features(&real_f, &out_f, &params)?;
                    if grid.is_empty() {
                        grid = new_grid(curve.len());
                        conditions = curve
                            .iter()
                            .map(|p| Condition {
                                name: format!("replaced={}", p.replaced),
                                level: None,
                                x: p.proportion,
                            })
                            .collect();
                    }
                    for (c, p) in curve.iter().enumerate() {
                        grid[c][m].push(p.value);
                    }
                }
            }
            (conditions, grid, "proportion")
        }
        Protocol::Compare => {
            let src = config.data.generated.as_ref().expect("validated");
            let (generated, summary) = load_source("generated", src, base_dir, policy)?;
            datasets.push(summary);
            let mut grid = new_grid(1);
            for &seed in seeds.seeds() {
                let extractor = Extractor::new(&network, seed, tap)?.with_batch_size(batch_size);
                let real_f = extractor.embed(&real)?;
                let gen_f = extractor.embed(&generated)?;
                let mut reference = Reference::new(&real_f);
                for (m, &metric) in metrics.iter().enumerate() {
                    grid[0][m].push(reference.evaluate(metric, &gen_f, k)?);
                }
            }
            let condition = Condition {
                name: "generated".into(),
                level: None,
                x: 0.0,
            };
            (vec![condition], grid, "condition")
        }
    };

    let mut results = Vec::new();
    for (cond, row) in conditions.iter().zip(grid) {
        for (&metric, per_seed) in metrics.iter().zip(row) {
            results.push(ConditionResult {
                condition: cond.name.clone(),
                level: cond.level,
                x: cond.x,
                metric,
                summary: aggregate_seeds(&per_seed)?,
                per_seed,
            });
        }
    }

    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        name: config.name.clone(),
        protocol: config.protocol,
        extractor: network.id(),
        preprocessing: preprocessing_descriptor(&network),
        network,
        tap: tap.name().into(),
        seeds: seeds.seeds().to_vec(),
        aggregation: seeds.aggregation,
        k,
        x_label: x_label.into(),
        datasets,
        results,
    })
}

pub fn report_json(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Input(format!("CSV encoding failed: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(csv_err)
}

pub fn report_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let level = |r: &ConditionResult| r.level.map(|l| l.to_string()).unwrap_or_default();
    match report.aggregation {
        Aggregation::Mean => {
            let mut header: Vec<String> = ["condition", "level", "x", "metric", "mean", "std", "min", "max"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            header.extend(report.seeds.iter().map(|s| format!("seed_{s}")));
            w.write_record(&header).map_err(csv_err)?;
            for r in &report.results {
                let mut row = vec![
                    r.condition.clone(),
                    level(r),
                    r.x.to_string(),
                    r.metric.to_string(),
                    r.summary.mean.to_string(),
                    r.summary.std.to_string(),
                    r.summary.min.to_string(),
                    r.summary.max.to_string(),
                ];
                row.extend(r.per_seed.iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        Aggregation::PerSeed => {
            w.write_record(["condition", "level", "x", "metric", "seed", "value"])
                .map_err(csv_err)?;
            for r in &report.results {
                for (seed, v) in report.seeds.iter().zip(&r.per_seed) {
                    w.write_record([
                        r.condition.clone(),
                        level(r),
                        r.x.to_string(),
                        r.metric.to_string(),
                        seed.to_string(),
                        v.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
    }
    finish_csv(w)
}

/// Curve data per metric: `x,y,y_std` with seed means, or `x,seed,y` per seed.
pub fn plot_data(report: &ExperimentReport) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut metrics: Vec<Metric> = Vec::new();
    for r in &report.results {
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric);
        }
    }
    for metric in metrics {
        let mut w = csv::Writer::from_writer(Vec::new());
        let rows = report.results.iter().filter(|r| r.metric == metric);
        match report.aggregation {
            Aggregation::Mean => {
                w.write_record(["x", "y", "y_std"]).map_err(csv_err)?;
                for r in rows {
                    w.write_record([r.x.to_string(), r.summary.mean.to_string(), r.summary.std.to_string()])
                        .map_err(csv_err)?;
                }
            }
            Aggregation::PerSeed => {
                w.write_record(["x", "seed", "y"]).map_err(csv_err)?;
                for r in rows {
                    for (seed, v) in report.seeds.iter().zip(&r.per_seed) {
                        w.write_record([r.x.to_string(), seed.to_string(), v.to_string()])
                            .map_err(csv_err)?;
                    }
                }
            }
        }
        out.insert(format!("plot_{metric}.csv"), finish_csv(w)?);
    }
    Ok(out)
}

fn hex_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the payload files and the metadata sidecar into `dir`.
pub fn write_report(report: &ExperimentReport, meta: &mut RunMeta, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = report_json(report)?;
    meta.report_sha256 = hex_sha256(&json);
    let mut files = vec![(dir.join("report.json"), json), (dir.join("report.csv"), report_csv(report)?)];
    for (name, bytes) in plot_data(report)? {
        files.push((dir.join(name), bytes));
    }
    let mut meta_bytes = serde_json::to_vec_pretty(meta)?;
    meta_bytes.push(b'\n');
    files.push((dir.join("report.meta.json"), meta_bytes));
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Loads a config file, runs it, and writes reports to `output.dir`
/// (default `reports/<name>`), relative to the config file.
pub fn run_experiment(config_path: &Path) -> Result<RunOutput> {
    run_experiment_to(config_path, None)
}

/// Like [`run_experiment`], with an optional output directory that takes
/// precedence over the config.
pub fn run_experiment_to(config_path: &Path, out_dir: Option<&Path>) -> Result<RunOutput> {
    let config = ExperimentConfig::load(config_path)?;
    let base_dir = config_path.parent().unwrap_or(Path::new("")).to_path_buf();
    let started = now_ms();
    let report = run_config(&config, &base_dir)?;
    let finished = now_ms();
    let out_dir = match (out_dir, &config.output) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(o)) => base_dir.join(&o.dir),
        (None, None) => base_dir.join("reports").join(&config.name),
    };
    let mut meta = RunMeta {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: config_path.to_string_lossy().into_owned(),
        started_unix_ms: started,
        finished_unix_ms: finished,
        elapsed_ms: finished - started,
        report_sha256: String::new(),
    };
    let files = write_report(&report, &mut meta, &out_dir)?;
    Ok(RunOutput {
        report,
        meta,
        out_dir,
        files,
    })
}
