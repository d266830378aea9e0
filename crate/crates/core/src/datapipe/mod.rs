//! Dataset ingestion, deterministic train/test splitting and batch loading.

mod batch;
pub mod toy;

pub use batch::{batch_from_ids, load_batch, Batch, Pair, PairStore};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::colorlab::ImageRGB;
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub entries: Vec<IndexEntry>,
    pub split: BTreeMap<String, SplitRole>,
    /// Files that failed to decode at ingest time.
    pub skipped: usize,
    #[serde(default)]
    pub test_fraction: Option<f64>,
}

impl DatasetIndex {
    pub fn ids(&self, role: SplitRole) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| self.split.get(&e.id) == Some(&role))
            .map(|e| e.id.clone())
            .collect()
    }

    pub fn entry(&self, id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn role(&self, id: &str) -> Option<SplitRole> {
        self.split.get(id).copied()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if is_image(&path) {
            out.push(path);
        }
    }
    Ok(())
}

fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Index every decodable PNG/JPEG under `dir`, sorted by path. All entries
/// start in the training split.
pub fn ingest(dir: &Path) -> Result<DatasetIndex> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    let mut entries = Vec::new();
    let mut skipped = 0;
    for path in files {
        match image::open(&path) {
            Ok(img) if img.width() as usize >= crate::colorlab::MIN_EDGE
                && img.height() as usize >= crate::colorlab::MIN_EDGE =>
            {
                entries.push(IndexEntry {
                    id: relative_id(dir, &path),
                    width: img.width(),
                    height: img.height(),
                    path,
                });
            }
            Ok(img) => {
                log::warn!("skipping {}: {}x{} is too small", path.display(), img.width(), img.height());
                skipped += 1;
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped += 1;
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset(dir.to_path_buf()));
    }
    let split = entries.iter().map(|e| (e.id.clone(), SplitRole::Train)).collect();
    Ok(DatasetIndex {
        root: dir.to_path_buf(),
        entries,
        split,
        skipped,
        test_fraction: None,
    })
}

/// Assign `round(test_fraction · n)` images to the test split.
pub fn split(index: &DatasetIndex, test_fraction: f64, seed: u64) -> Result<DatasetIndex> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut ids: Vec<&str> = index.entries.iter().map(|e| e.id.as_str()).collect();
    let n_test = (test_fraction * ids.len() as f64).round() as usize;
    ids.shuffle(&mut substream(seed, "split"));
    let split = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let role = if i < n_test { SplitRole::Test } else { SplitRole::Train };
            (id.to_string(), role)
        })
        .collect();
    Ok(DatasetIndex {
        split,
        test_fraction: Some(test_fraction),
        ..index.clone()
    })
}

/// Decode one image and resample it (bilinear) to `resolution`².
pub fn load_image(path: &Path, id: &str, resolution: usize) -> Result<ImageRGB> {
    let img = image::open(path).map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rgb = img.to_rgb8();
    if rgb.width() as usize != resolution || rgb.height() as usize != resolution {
        rgb = image::imageops::resize(&rgb, resolution as u32, resolution as u32, FilterType::Triangle);
    }
    ImageRGB::new(id, resolution, resolution, rgb.into_raw())
}

/// Decode every image of `role` at `resolution`, in index order.
pub fn load_images(index: &DatasetIndex, role: SplitRole, resolution: usize) -> Result<Vec<ImageRGB>> {
    index
        .entries
        .iter()
        .filter(|e| index.role(&e.id) == Some(role))
        .map(|e| load_image(&e.path, &e.id, resolution))
        .collect()
}

pub fn save_png(img: &ImageRGB, path: &Path) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("buffer matches dimensions");
    buf.save(path).map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })
}
