use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::colorlab::{rgb_to_lab, ImageRGB};
use crate::{Error, Result};

/// Frozen model producing a class distribution per image.
pub trait LabelModel {
    fn id(&self) -> &str;
    fn n_classes(&self) -> usize;
    fn predict(&self, img: &ImageRGB) -> Result<Vec<f64>>;
}

/// Mean `(a, b)` of the brighter half of the pixels followed by the mean
/// `(a, b)` of the darker half.
pub fn color_features(img: &ImageRGB) -> [f64; 4] {
    let lab = rgb_to_lab(img);
    let n = lab.l.len();
    let mut sorted = lab.l.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 2];
    for i in 0..n {
        let half = usize::from(lab.l[i] < median);
        sums[2 * half] += lab.ab[i];
        sums[2 * half + 1] += lab.ab[n + i];
        counts[half] += 1;
    }
    for (i, s) in sums.iter_mut().enumerate() {
        *s /= counts[i / 2].max(1) as f64;
    }
    sums
}

/// Nearest-prototype classifier over [`color_features`] with a Gaussian
/// softmax, `p(y|x) ∝ exp(-‖f - μ_y‖² / 2σ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorPrototypeClassifier {
    pub id: String,
    pub prototypes: Vec<[f64; 4]>,
    pub sigma: f64,
}

impl ColorPrototypeClassifier {
    /// Class means, with σ² the mean squared distance of a sample to its own prototype.
    pub fn fit(samples: &[(ImageRGB, usize)], n_classes: usize, id: &str) -> Result<Self> {
        let feats: Vec<([f64; 4], usize)> = samples.iter().map(|(img, c)| (color_features(img), *c)).collect();
        let mut prototypes = vec![[0.0; 4]; n_classes];
        let mut counts = vec![0usize; n_classes];
        for (f, c) in &feats {
            if *c >= n_classes {
                return Err(Error::Config(format!("label {c} out of range for {n_classes} classes")));
            }
            counts[*c] += 1;
            prototypes[*c].iter_mut().zip(f).for_each(|(p, v)| *p += v);
        }
        if let Some(empty) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Config(format!("class {empty} has no samples")));
        }
        for (p, &n) in prototypes.iter_mut().zip(&counts) {
            p.iter_mut().for_each(|v| *v /= n as f64);
        }
        let spread = feats.iter().map(|(f, c)| sq_dist(f, &prototypes[*c])).sum::<f64>() / feats.len() as f64;
        Ok(ColorPrototypeClassifier {
            id: id.to_string(),
            prototypes,
            sigma: spread.sqrt().max(1e-6),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Self = serde_json::from_str(&text)?;
        if c.prototypes.is_empty() || !(c.sigma > 0.0) {
            return Err(Error::Config(format!("{}: malformed classifier", path.display())));
        }
        Ok(c)
    }
}

fn sq_dist(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl LabelModel for ColorPrototypeClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn n_classes(&self) -> usize {
        self.prototypes.len()
    }

    fn predict(&self, img: &ImageRGB) -> Result<Vec<f64>> {
        let f = color_features(img);
        let logits: Vec<f64> = self
            .prototypes
            .iter()
            .map(|p| -sq_dist(&f, p) / (2.0 * self.sigma * self.sigma))
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(exps.iter().map(|e| e / total).collect())
    }
}
