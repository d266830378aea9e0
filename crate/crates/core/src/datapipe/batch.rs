use std::collections::HashMap;

use rand::Rng as _;

use super::{load_image, DatasetIndex, SplitRole};
use crate::colorlab::{normalize, rgb_to_lab, ImageLab, ImageRGB};
use crate::rng::Rng;
use crate::taskforge::TaskCluster;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// One image as a normalized `(L, ab)` training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub id: String,
    pub size: usize,
    pub l: Vec<f64>,
    pub ab: Vec<f64>,
}

impl Pair {
    pub fn from_rgb(img: &ImageRGB) -> Result<Self> {
        if img.width() != img.height() {
            return Err(Error::InvalidImage(format!(
                "{} is {}x{}, expected square",
                img.id,
                img.width(),
                img.height()
            )));
        }
        let lab = normalize(&rgb_to_lab(img))?;
        Ok(Pair {
            id: img.id.clone(),
            size: img.width(),
            l: lab.l,
            ab: lab.ab,
        })
    }

    pub fn to_lab(&self) -> ImageLab {
        ImageLab {
            width: self.size,
            height: self.size,
            l: self.l.clone(),
            ab: self.ab.clone(),
            normalized: true,
        }
    }
}

/// A batch of `(L, ab)` pairs: `B×1×H×W` and `B×2×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ids: Vec<String>,
    pub l: Tensor,
    pub ab: Tensor,
}

impl Batch {
    pub fn from_pairs(pairs: &[&Pair]) -> Result<Self> {
        let first = pairs.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
        let s = first.size;
        let mut l = Vec::with_capacity(pairs.len() * s * s);
        let mut ab = Vec::with_capacity(2 * pairs.len() * s * s);
        for p in pairs {
            if p.size != s {
                return Err(Error::Shape(format!("mixed sizes {s} and {}", p.size)));
            }
            l.extend_from_slice(&p.l);
            ab.extend_from_slice(&p.ab);
        }
        let n = pairs.len();
        Ok(Batch {
            ids: pairs.iter().map(|p| p.id.clone()).collect(),
            l: Tensor::from_vec(n, 1, s, s, l)?,
            ab: Tensor::from_vec(n, 2, s, s, ab)?,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Decoded pairs for one split, keyed by image id.
#[derive(Clone, Debug, Default)]
pub struct PairStore {
    pairs: Vec<Pair>,
    lookup: HashMap<String, usize>,
}

impl PairStore {
    pub fn from_images(images: &[ImageRGB]) -> Result<Self> {
        let pairs = images.iter().map(Pair::from_rgb).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_pairs(pairs))
    }

    pub fn from_pairs(pairs: Vec<Pair>) -> Self {
        let lookup = pairs.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        PairStore { pairs, lookup }
    }

    /// Decode every image of `role` at `resolution`.
    pub fn load(index: &DatasetIndex, role: SplitRole, resolution: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for e in &index.entries {
            if index.role(&e.id) == Some(role) {
                pairs.push(Pair::from_rgb(&load_image(&e.path, &e.id, resolution)?)?);
            }
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn get(&self, id: &str) -> Result<&Pair> {
        self.lookup
            .get(id)
            .map(|&i| &self.pairs[i])
            .ok_or_else(|| Error::UnknownImage(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.lookup.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.id.as_str())
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Sample `batch_size` members of `task` uniformly with replacement.
pub fn load_batch(task: &TaskCluster, store: &PairStore, batch_size: usize, rng: &mut Rng) -> Result<Batch> {
    if task.member_ids.is_empty() {
        return Err(Error::Config(format!("task {} has no members", task.cluster_id)));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let picks = (0..batch_size)
        .map(|_| {
            let id = &task.member_ids[rng.gen_range(0..task.member_ids.len())];
            store.get(id)
        })
        .collect::<Result<Vec<_>>>()?;
    Batch::from_pairs(&picks)
}

pub fn batch_from_ids<S: AsRef<str>>(store: &PairStore, ids: &[S]) -> Result<Batch> {
    let picks = ids
        .iter()
        .map(|id| store.get(id.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Batch::from_pairs(&picks)
}
