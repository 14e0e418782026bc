use std::path::{Path, PathBuf};

use rfeval::extractors::{Embedder, Extractor, NetworkConfig, Tap};
use rfeval::harness::config::ExperimentConfig;
use rfeval::harness::experiment::{report_json, run_config};
use rfeval::harness::{ingest_images, load_features, run_experiment, save_features, ErrorPolicy};
use rfeval::metrics::{fid_features, kid, precision_recall, Metric};
use rfeval::Error;

fn write_png(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
    image::RgbImage::from_fn(w, h, |x, y| image::Rgb(f(x, y)))
        .save(path)
        .unwrap();
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

#[test]
fn ingest_orders_by_filename_and_applies_limit() {
    let dir = tempfile::tempdir().unwrap();
    for (name, v) in [("c.png", 30u8), ("a.png", 10), ("b.png", 20)] {
        write_png(&dir.path().join(name), 4, 3, |_, _| [v, v, v]);
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let ds = ingest_images(dir.path(), None, ErrorPolicy::Abort).unwrap();
    assert_eq!(ds.manifest.files, vec!["a.png", "b.png", "c.png"]);
    let firsts: Vec<f32> = ds.images.iter().map(|t| t.data()[0]).collect();
    assert_eq!(firsts, vec![10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
    assert_eq!(ds.images.get(0).shape(), &[3, 3, 4]);

    let two = ingest_images(dir.path(), Some(2), ErrorPolicy::Abort).unwrap();
    assert_eq!(two.manifest.files, vec!["a.png", "b.png"]);
    assert_ne!(two.manifest.id, ds.manifest.id);
    assert_eq!(
        ingest_images(dir.path(), None, ErrorPolicy::Abort).unwrap().manifest.id,
        ds.manifest.id
    );
}

#[test]
fn ingest_decodes_known_grayscale_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let px = [0u8, 128, 255, 64];
    image::GrayImage::from_raw(2, 2, px.to_vec())
        .unwrap()
        .save(dir.path().join("g.png"))
        .unwrap();
    let ds = ingest_images(dir.path(), None, ErrorPolicy::Abort).unwrap();
    let img = ds.images.get(0);
    assert_eq!(img.shape(), &[3, 2, 2]);
    let expected = [0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0];
    for c in 0..3 {
        for (i, e) in expected.iter().enumerate() {
            assert!((img.data()[c * 4 + i] - e).abs() < 1e-6);
        }
    }
}

#[test]
fn ingest_error_policy_and_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        ingest_images(dir.path(), None, ErrorPolicy::Abort),
        Err(Error::EmptyDataset(_))
    ));
    write_png(&dir.path().join("a.png"), 2, 2, |_, _| [1, 2, 3]);
    std::fs::write(dir.path().join("b.png"), b"not an image").unwrap();
    assert!(matches!(
        ingest_images(dir.path(), None, ErrorPolicy::Abort),
        Err(Error::Image { .. })
    ));
    let ds = ingest_images(dir.path(), None, ErrorPolicy::Continue).unwrap();
    assert_eq!(ds.manifest.files, vec!["a.png"]);
    assert_eq!(ds.manifest.skipped.len(), 1);
    assert_eq!(ds.manifest.skipped[0].file, "b.png");
}

#[test]
fn converted_trained_feature_file_loads() {
    // Produced by scripts/npy_to_rfev.py from a 3×2048 ramp:
    // value[i][j] = ((7 i + 13 j) mod 1000) / 250.
    let f = load_features(&data_dir().join("features/inception_3x2048.rfev")).unwrap();
    assert_eq!((f.rows(), f.dim()), (3, 2048));
    assert_eq!(f.meta.extractor, "inception-v3");
    assert_eq!(f.meta.seed, None);
    for i in 0..3 {
        for j in 0..2048 {
            let want = ((7 * i + 13 * j) % 1000) as f32 / 250.0;
            assert_eq!(f.row(i)[j], want);
        }
    }
}

#[test]
fn metrics_from_cache_equal_fresh_extraction() {
    let spec = rfeval::harness::synthetic::SyntheticData {
        count: 12,
        size: 24,
        seed: 5,
    };
    let real = rfeval::harness::synthetic::synthetic_images(&spec).unwrap();
    let other = rfeval::harness::synthetic::synthetic_images(&rfeval::harness::synthetic::SyntheticData {
        seed: 6,
        ..spec
    })
    .unwrap();
    let net = NetworkConfig::vgg11().with_input_size(32);
    let ex = Extractor::new(&net, 1, Tap::Final).unwrap();
    let (a, b) = (ex.embed(&real).unwrap(), ex.embed(&other).unwrap());
    let dir = tempfile::tempdir().unwrap();
    save_features(&a, &dir.path().join("a.rfev")).unwrap();
    save_features(&b, &dir.path().join("b.rfev")).unwrap();
    let ca = load_features(&dir.path().join("a.rfev")).unwrap();
    let cb = load_features(&dir.path().join("b.rfev")).unwrap();
    assert_eq!(fid_features(&cb, &ca).unwrap().to_bits(), fid_features(&b, &a).unwrap().to_bits());
    assert_eq!(kid(&cb, &ca).unwrap().to_bits(), kid(&b, &a).unwrap().to_bits());
    assert_eq!(precision_recall(&ca, &cb, 3).unwrap(), precision_recall(&a, &b, 3).unwrap());
}

const BLUR_CONFIG: &str = r#"
name = "blur-vit"
protocol = "disturbance"

[data.real]
synthetic = { count = 10, size = 32, seed = 3 }

[extractor]
kind = "vit-t"
input_size = 32

[seeds]
list = [0, 1, 2, 3, 4]

[metrics]
list = ["fid"]

[disturbance]
kind = "gaussian_blur"
levels = [1, 2, 3]

[output]
dir = "out"
"#;

#[test]
fn blur_disturbance_report_shape() {
    let config = ExperimentConfig::from_toml(BLUR_CONFIG, Path::new("blur.toml")).unwrap();
    let report = run_config(&config, Path::new(".")).unwrap();
    assert_eq!(report.results.len(), 3);
    for (r, level) in report.results.iter().zip(1u8..) {
        assert_eq!(r.level, Some(level));
        assert_eq!(r.metric, Metric::Fid);
        assert_eq!(r.per_seed.len(), 5);
        let mean = r.per_seed.iter().sum::<f64>() / 5.0;
        assert!((r.summary.mean - mean).abs() <= 1e-12 * mean.abs());
        assert!(r.summary.std >= 0.0);
    }
    assert_eq!(report.seeds, vec![0, 1, 2, 3, 4]);
    assert_eq!(report.extractor, "vit-t@32");
}

#[test]
fn rerun_is_byte_identical_and_meta_is_separate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, BLUR_CONFIG.replace("[0, 1, 2, 3, 4]", "[0, 1]")).unwrap();
    let first = run_experiment(&cfg).unwrap();
    let read_all = |out: &Path| -> Vec<(String, Vec<u8>)> {
        ["report.json", "report.csv", "plot_fid.csv"]
            .iter()
            .map(|n| (n.to_string(), std::fs::read(out.join(n)).unwrap()))
            .collect()
    };
    let a = read_all(&first.out_dir);
    let second = run_experiment(&cfg).unwrap();
    assert_eq!(a, read_all(&second.out_dir));
    assert_eq!(report_json(&first.report).unwrap(), a[0].1);
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(first.out_dir.join("report.meta.json")).unwrap()).unwrap();
    assert!(meta.get("started_unix_ms").is_some());
    let payload = String::from_utf8(a[0].1.clone()).unwrap();
    assert!(!payload.contains("unix_ms"));

    let csv = String::from_utf8(a[1].1.clone()).unwrap();
    assert!(csv.starts_with("condition,level,x,metric,mean,std,min,max,seed_0,seed_1\n"));
    assert_eq!(csv.lines().count(), 4);
    let plot = String::from_utf8(a[2].1.clone()).unwrap();
    assert!(plot.starts_with("x,y,y_std\n1,"));
}

#[test]
fn image_directory_sweep_and_compare_protocols_run() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["real", "outliers"] {
        std::fs::create_dir(dir.path().join(sub)).unwrap();
    }
    for i in 0..12u32 {
        write_png(&dir.path().join(format!("real/{i:02}.png")), 20, 16, |x, y| {
            [(x * 10 + i) as u8, (y * 12) as u8, 100]
        });
        write_png(&dir.path().join(format!("outliers/{i:02}.png")), 16, 16, |x, y| {
            [255 - (x * 9) as u8, ((x + y + i) % 2 * 255) as u8, 0]
        });
    }
    let sweep = r#"
name = "sweep"
protocol = "sweep"
[data.real]
dir = "real"
[data.outliers]
dir = "outliers"
[extractor]
kind = "cnn-vgg"
input_size = 32
[seeds]
list = [0, 1]
aggregation = "per-seed"
[metrics]
list = ["fid", "precision"]
[sweep]
step = 2
steps = 4
"#;
    let path = dir.path().join("sweep.toml");
    std::fs::write(&path, sweep).unwrap();
    let out = run_experiment(&path).unwrap();
    let fid: Vec<_> = out.report.results.iter().filter(|r| r.metric == Metric::Fid).collect();
    assert_eq!(fid.len(), 5);
    assert_eq!(fid[0].per_seed, vec![0.0, 0.0]);
    assert_eq!(fid[2].x, 4.0 / 12.0);
    assert_eq!(out.report.datasets[1].count, 12);
    assert!(out.out_dir.ends_with("reports/sweep"));
    let plot = std::fs::read_to_string(out.out_dir.join("plot_precision.csv")).unwrap();
    assert!(plot.starts_with("x,seed,y\n0,0,1\n0,1,1\n"));

    let compare = sweep
        .replace("protocol = \"sweep\"", "protocol = \"compare\"")
        .replace("[data.outliers]", "[data.generated]")
        .replace("[sweep]\nstep = 2\nsteps = 4\n", "");
    let path = dir.path().join("compare.toml");
    std::fs::write(&path, compare).unwrap();
    let out = run_experiment(&path).unwrap();
    assert_eq!(out.report.results.len(), 2);
    assert!(out.report.results[0].per_seed.iter().all(|v| *v > 0.0));
}

#[test]
fn contamination_needs_a_contaminant_source() {
    let text = BLUR_CONFIG.replace("gaussian_blur", "class_contamination");
    let err = ExperimentConfig::from_toml(&text, Path::new("c.toml")).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "data.contaminant"), "{err}");
    let text = text.replace(
        "[extractor]",
        "[data.contaminant]\nsynthetic = { count = 10, size = 32, seed = 99 }\n\n[extractor]",
    );
    let config = ExperimentConfig::from_toml(&text, Path::new("c.toml")).unwrap();
    let config = ExperimentConfig {
        seeds: rfeval::harness::config::SeedSection {
            list: vec![0],
            ..config.seeds.clone()
        },
        ..config
    };
    let report = run_config(&config, Path::new(".")).unwrap();
    assert_eq!(report.datasets.len(), 2);
    assert_eq!(report.results.len(), 3);
}
