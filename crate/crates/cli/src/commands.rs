use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use rfeval::disturbances::{DisturbanceKind, DisturbanceSpec};
use rfeval::extractors::{Embedder, Tap};
use rfeval::harness::experiment::report_json;
use rfeval::harness::{run_experiment_to, save_features, save_png};
use rfeval::metrics::{aggregate_seeds, Metric, Reference, SeedSummary};
use rfeval::outliers::{
    replacement_sweep_features, retrieve_nearest_features, split_outliers_features, OutlierParams, SweepParams,
    SweepPoint,
};

use crate::output::{emit, num, row, Rendered};
use crate::sources::{feature_groups, load, single_image};
use crate::{Command, Shared};

const DEFAULT_SWEEP_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

pub fn run(shared: &Shared, command: &Command) -> Result<()> {
    match command {
        Command::Extract { images } => extract(shared, images),
        Command::Fid { inputs } => metrics(shared, inputs, &[Metric::Fid], 3, &[0]),
        Command::Kid { inputs } => metrics(shared, inputs, &[Metric::Kid], 3, &[0]),
        Command::Pr { inputs, k } => metrics(shared, inputs, &[Metric::Precision, Metric::Recall], *k, &[0]),
        Command::SeedSweep { inputs, metrics: m, k } => metrics(shared, inputs, m, *k, &DEFAULT_SWEEP_SEEDS),
        Command::Disturb {
            images,
            kind,
            level,
            param,
            contaminant,
        } => disturb(shared, images, *kind, *level, *param, contaminant.as_deref()),
        Command::OutlierSplit { images, k, alpha } => outlier_split(shared, images.as_deref(), *k, *alpha),
        Command::Sweep {
            inputs,
            step,
            steps,
            metric,
            k,
            order_seed,
        } => sweep(
            shared,
            inputs,
            SweepParams {
                step: *step,
                steps: *steps,
                seed: *order_seed,
                metric: *metric,
                k: *k,
            },
        ),
        Command::Retrieve {
            corpus,
            query,
            query_row,
            top,
        } => retrieve(shared, corpus.as_deref(), query.as_deref(), *query_row, *top),
        Command::Report { config } => report(shared, config),
    }
}

/// `feats.rfev` becomes `feats.s3.rfev` when several seeds are written.
fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.s{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.s{seed}"),
    };
    path.with_file_name(name)
}

fn extract(shared: &Shared, images: &Path) -> Result<()> {
    let Some(out) = &shared.out else {
        bail!("extract needs --out <file.rfev>");
    };
    let ds = shared.load_dir(images)?;
    let seeds = shared.seeds_or(&[0])?;
    for &seed in &seeds {
        let mut f = shared.extractor_for(seed, shared.tap)?.embed(&ds.images)?;
        f.meta.dataset = ds.manifest.id.clone();
        let path = if seeds.len() == 1 {
            out.clone()
        } else {
            seeded_path(out, seed)
        };
        save_features(&f, &path)?;
        eprintln!("wrote {} ({}×{}, {})", path.display(), f.rows(), f.dim(), f.meta.extractor);
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricResult {
    metric: Metric,
    extractor: String,
    tap: String,
    seeds: Vec<Option<u64>>,
    per_seed: Vec<f64>,
    #[serde(flatten)]
    summary: SeedSummary,
}

fn metrics(shared: &Shared, inputs: &[PathBuf], metrics: &[Metric], k: usize, default_seeds: &[u64]) -> Result<()> {
    ensure!(!metrics.is_empty(), "no metric requested");
    let groups = feature_groups(shared, inputs, 2, default_seeds)?;
    let mut per_metric = vec![Vec::new(); metrics.len()];
    for g in &groups {
        let mut reference = Reference::new(&g.sets[0]);
        for (values, &m) in per_metric.iter_mut().zip(metrics) {
            values.push(reference.evaluate(m, &g.sets[1], k)?);
        }
    }
    let meta = &groups[0].sets[0].meta;
    let seeds: Vec<Option<u64>> = groups.iter().map(|g| g.seed).collect();
    let results = metrics
        .iter()
        .zip(per_metric)
        .map(|(&metric, per_seed)| {
            Ok(MetricResult {
                metric,
                extractor: meta.extractor.clone(),
                tap: meta.tap.clone(),
                seeds: seeds.clone(),
                summary: aggregate_seeds(&per_seed)?,
                per_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let seed_label = |s: Option<u64>| s.map_or_else(|| "-".to_string(), |s| s.to_string());
    let mut text = String::new();
    if results.len() == 1 && seeds.len() == 1 {
        writeln!(text, "{}", num(results[0].per_seed[0]))?;
    } else if seeds.len() == 1 {
        for r in &results {
            writeln!(text, "{}\t{}", r.metric, num(r.per_seed[0]))?;
        }
    } else {
        for r in &results {
            for (s, v) in seeds.iter().zip(&r.per_seed) {
                writeln!(text, "{}\tseed {}\t{}", r.metric, seed_label(*s), num(*v))?;
            }
            writeln!(
                text,
                "{}\tmean ± std\t{} ± {}\t(n = {})",
                r.metric,
                num(r.summary.mean),
                num(r.summary.std),
                r.per_seed.len()
            )?;
        }
    }
    let mut csv = vec![row(["metric", "seed", "value"])];
    for r in &results {
        for (s, v) in seeds.iter().zip(&r.per_seed) {
            csv.push(row([r.metric.to_string(), seed_label(*s), num(*v)]));
        }
    }
    emit(shared, Rendered::new(text, &results, csv)?)
}

fn disturb(
    shared: &Shared,
    images: &Path,
    kind: DisturbanceKind,
    level: Option<u8>,
    param: Option<f64>,
    contaminant: Option<&Path>,
) -> Result<()> {
    let Some(out) = &shared.out else {
        bail!("disturb needs --out <directory>");
    };
    let seed = shared.first_seed();
    let mut spec = match (level, param) {
        (Some(l), None) => DisturbanceSpec::at_level(kind, l, seed)?,
        (None, Some(p)) => DisturbanceSpec::with_param(kind, p, seed)?,
        _ => bail!("give exactly one of --level or --param"),
    };
    let ds = shared.load_dir(images)?;
    let pool = contaminant.map(|dir| shared.load_dir(dir)).transpose()?;
    if let Some(p) = &pool {
        spec.contaminant = Some(p.manifest.id.clone());
    }
    let disturbed = spec.apply(&ds.images, pool.as_ref().map(|p| &p.images))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, img) in ds.manifest.files.iter().zip(disturbed.iter()) {
        save_png(img, &out.join(Path::new(name).with_extension("png")))?;
    }
    eprintln!(
        "wrote {} images to {} ({kind}, parameter {}, seed {seed})",
        disturbed.len(),
        out.display(),
        spec.param
    );
    Ok(())
}

#[derive(Serialize)]
struct SplitOutput<'a> {
    k: usize,
    alpha: f64,
    samples: usize,
    high_indices: &'a [usize],
    low_indices: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    files: Option<&'a [String]>,
}

fn outlier_split(shared: &Shared, images: Option<&Path>, k: usize, alpha: f64) -> Result<()> {
    let (high, low, files) = match images {
        None => {
            ensure!(
                shared.features.len() == 2,
                "outlier-split needs an image directory or two --features files (high level, then low level)"
            );
            (load(&shared.features[0])?, load(&shared.features[1])?, None)
        }
        Some(dir) => {
            ensure!(shared.features.is_empty(), "give either an image directory or --features, not both");
            let ds = shared.load_dir(dir)?;
            let seed = shared.first_seed();
            let high = shared.extractor_for(seed, Tap::Final)?.embed(&ds.images)?;
            let low = shared.extractor_for(seed, Tap::Stem)?.embed(&ds.images)?;
            (high, low, Some(ds.manifest.files))
        }
    };
    let split = split_outliers_features(&high, &low, &OutlierParams { k, alpha })?;

    let class = |i: usize| {
        if split.high_indices.binary_search(&i).is_ok() {
            "high"
        } else if split.low_indices.binary_search(&i).is_ok() {
            "low"
        } else {
            "none"
        }
    };
    let file = |i: usize| files.as_ref().map_or(String::new(), |f| f[i].clone());
    let mut text = String::new();
    for (label, idx) in [("high-level", &split.high_indices), ("low-level", &split.low_indices)] {
        writeln!(text, "{label} outliers ({}):", idx.len())?;
        for &i in idx {
            writeln!(text, "  {i}\t{}", file(i))?;
        }
    }
    let mut csv = vec![row(["index", "file", "d_high", "d_low", "class"])];
    for i in 0..high.rows() {
        csv.push(row([
            i.to_string(),
            file(i),
            num(split.d_high[i]),
            num(split.d_low[i]),
            class(i).to_string(),
        ]));
    }
    let json = SplitOutput {
        k,
        alpha,
        samples: high.rows(),
        high_indices: &split.high_indices,
        low_indices: &split.low_indices,
        files: files.as_deref(),
    };
    emit(shared, Rendered::new(text, json, csv)?)
}

#[derive(Serialize)]
struct SweepCurve {
    seed: Option<u64>,
    metric: Metric,
    points: Vec<SweepPoint>,
}

fn sweep(shared: &Shared, inputs: &[PathBuf], params: SweepParams) -> Result<()> {
    let groups = feature_groups(shared, inputs, 2, &[0])?;
    let curves = groups
        .iter()
        .map(|g| {
            Ok(SweepCurve {
                seed: g.seed,
                metric: params.metric,
                points: replacement_sweep_features(&g.sets[0], &g.sets[1], &params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let seed_label = |s: Option<u64>| s.map_or_else(String::new, |s| s.to_string());
    let mut text = String::new();
    let mut csv = vec![row(["seed", "replaced", "proportion", "value"])];
    for c in &curves {
        writeln!(text, "seed {}: {} vs outlier proportion", seed_label(c.seed), c.metric)?;
        for p in &c.points {
            writeln!(text, "  {:>6}  {:.4}  {}", p.replaced, p.proportion, num(p.value))?;
            csv.push(row([seed_label(c.seed), p.replaced.to_string(), num(p.proportion), num(p.value)]));
        }
    }
    emit(shared, Rendered::new(text, &curves, csv)?)
}

#[derive(Serialize)]
struct Hit {
    rank: usize,
    index: usize,
    distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
}

fn retrieve(shared: &Shared, corpus: Option<&Path>, query: Option<&Path>, query_row: usize, top: usize) -> Result<()> {
    let (neighbors, files) = match (corpus, query) {
        (None, None) => {
            ensure!(
                shared.features.len() == 2,
                "retrieve needs a corpus directory with --query, or two --features files (corpus, then queries)"
            );
            let corpus = load(&shared.features[0])?;
            let queries = load(&shared.features[1])?;
            ensure!(
                query_row < queries.rows(),
                "--query-row {query_row} out of range for {} queries",
                queries.rows()
            );
            (retrieve_nearest_features(queries.row(query_row), &corpus, top)?, None)
        }
        (Some(dir), Some(q)) => {
            ensure!(shared.features.is_empty(), "give either images or --features, not both");
            let ds = shared.load_dir(dir)?;
            let ex = shared.extractor_for(shared.first_seed(), shared.tap)?;
            let qf = ex.embed(&single_image(q)?)?;
            let cf = ex.embed(&ds.images)?;
            (retrieve_nearest_features(qf.row(0), &cf, top)?, Some(ds.manifest.files))
        }
        _ => bail!("retrieve needs both a corpus directory and --query <image>"),
    };
    let hits: Vec<Hit> = neighbors
        .iter()
        .enumerate()
        .map(|(rank, n)| Hit {
            rank: rank + 1,
            index: n.index,
            distance: n.distance,
            file: files.as_ref().map(|f| f[n.index].clone()),
        })
        .collect();
    let mut text = String::new();
    let mut csv = vec![row(["rank", "index", "distance", "file"])];
    for h in &hits {
        let file = h.file.clone().unwrap_or_default();
        writeln!(text, "{}\t{}\t{}\t{file}", h.rank, h.index, num(h.distance))?;
        csv.push(row([h.rank.to_string(), h.index.to_string(), num(h.distance), file]));
    }
    emit(shared, Rendered::new(text, &hits, csv)?)
}

fn report(shared: &Shared, config: &Path) -> Result<()> {
    let out = run_experiment_to(config, shared.out.as_deref())?;
    for f in &out.files {
        eprintln!("wrote {}", f.display());
    }
    let r = &out.report;
    let bytes = match shared.format {
        crate::output::Format::Json => report_json(r)?,
        crate::output::Format::Csv => std::fs::read(out.out_dir.join("report.csv"))?,
        crate::output::Format::Text => {
            let mut text = format!("{} ({}, {}, seeds {:?})\n", r.name, r.extractor, r.tap, r.seeds);
            for c in &r.results {
                writeln!(
                    text,
                    "  {:<28} {:<9} {} ± {}",
                    c.condition,
                    c.metric.to_string(),
                    num(c.summary.mean),
                    num(c.summary.std)
                )?;
            }
            text.into_bytes()
        }
    };
    use std::io::Write;
    std::io::stdout().lock().write_all(&bytes)?;
    Ok(())
}
