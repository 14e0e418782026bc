//! Loading image directories into [`ImageSet`]s.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::images::ImageSet;
use crate::tensor::Tensor;

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// What to do when a file in the directory cannot be decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorPolicy {
    #[default]
    Abort,
    /// Skip the file and record it in the manifest.
    Continue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub file: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeStats {
    pub min_width: usize,
    pub max_width: usize,
    pub min_height: usize,
    pub max_height: usize,
    pub mean_width: f64,
    pub mean_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    /// File names relative to `root`, in load order.
    pub files: Vec<String>,
    pub sizes: SizeStats,
    /// Hex SHA-256 of the newline-joined file list.
    pub id: String,
    pub skipped: Vec<SkippedFile>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: ImageSet,
}

/// Content id of a file list: changes exactly when the list changes.
pub fn dataset_id(files: &[String]) -> String {
    let mut hasher = Sha256::new();
    for f in files {
        hasher.update(f.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// PNG and JPEG files directly inside `dir`, sorted by file name bytes.
pub fn list_image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Decodes one file to a `3×H×W` tensor in `[0, 1]`. Grayscale is replicated
/// across channels and alpha is dropped.
pub fn decode_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(rgb_to_tensor(&img.to_rgb8()))
}

pub fn rgb_to_tensor(rgb: &image::RgbImage) -> Tensor {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + y as usize * w + x as usize] = px[c] as f32 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], data).expect("shape matches buffer")
}

/// Inverse of [`rgb_to_tensor`]: clamps to `[0, 1]` and rounds to 8 bits.
pub fn tensor_to_rgb(image: &Tensor) -> Result<image::RgbImage> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::Shape(format!("expected a 3×H×W image, got {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    let data = image.data();
    Ok(image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = |c: usize| {
            let v = data[c * h * w + y as usize * w + x as usize];
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        image::Rgb([at(0), at(1), at(2)])
    }))
}

/// Writes an image as PNG, atomically.
pub fn save_png(image: &Tensor, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    tensor_to_rgb(image)?
        .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    super::write_atomic(path, &bytes)
}

pub fn ingest_images(dir: &Path, limit: Option<usize>, policy: ErrorPolicy) -> Result<Dataset> {
    let files = list_image_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyDataset(format!("no PNG or JPEG files in {}", dir.display())));
    }
    let limit = limit.unwrap_or(usize::MAX);
    let mut names = Vec::new();
    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for path in files {
        if images.len() >= limit {
            break;
        }
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        match decode_image(&path) {
            Ok(img) => {
                names.push(name);
                images.push(img);
            }
            Err(e) if policy == ErrorPolicy::Continue => skipped.push(SkippedFile {
                file: name,
                message: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if images.is_empty() {
        return Err(Error::EmptyDataset(format!("no decodable images in {}", dir.display())));
    }
    let widths: Vec<usize> = images.iter().map(|t| t.shape()[2]).collect();
    let heights: Vec<usize> = images.iter().map(|t| t.shape()[1]).collect();
    let n = images.len() as f64;
    let sizes = SizeStats {
        min_width: *widths.iter().min().unwrap(),
        max_width: *widths.iter().max().unwrap(),
        min_height: *heights.iter().min().unwrap(),
        max_height: *heights.iter().max().unwrap(),
        mean_width: widths.iter().sum::<usize>() as f64 / n,
        mean_height: heights.iter().sum::<usize>() as f64 / n,
    };
    Ok(Dataset {
        manifest: DatasetManifest {
            root: dir.to_path_buf(),
            id: dataset_id(&names),
            files: names,
            sizes,
            skipped,
        },
        images: ImageSet::new(images)?,
    })
}
