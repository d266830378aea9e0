//! Inception Score over a pluggable label model, colorization quality on a
//! held-out set, and triplet sample grids.

mod classifier;
mod grid;

pub use classifier::{color_features, ColorPrototypeClassifier, LabelModel};
pub use grid::{grid_image, sample_grid, GUTTER};

use serde::{Deserialize, Serialize};

use crate::colorlab::{compose_output, denormalize, lab_to_rgb, ChromaPlanes, ImageRGB};
use crate::datapipe::Pair;
use crate::{Error, Result};

pub const DEFAULT_SPLITS: usize = 10;
const PROB_FLOOR: f64 = 1e-12;
const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub mean: f64,
    pub std: f64,
    pub n_images: usize,
    pub n_splits: usize,
    pub classifier_id: String,
}

fn checked_distribution(p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NotProbability(f64::NAN));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::NotProbability(sum));
    }
    Ok(p.iter().map(|v| v / sum).collect())
}

/// Score from precomputed conditionals `p(y|x)`, one row per image. Splits
/// are contiguous chunks; std is the population deviation across splits.
pub fn inception_score_from_probs(probs: &[Vec<f64>], n_splits: usize, classifier_id: &str) -> Result<ScoreReport> {
    if n_splits == 0 {
        return Err(Error::Config("n_splits must be at least 1".into()));
    }
    if probs.len() < n_splits {
        return Err(Error::InsufficientSamples {
            needed: n_splits,
            got: probs.len(),
        });
    }
    let n_classes = probs[0].len();
    let rows = probs
        .iter()
        .map(|p| {
            if p.len() != n_classes {
                return Err(Error::Length {
                    expected: n_classes,
                    actual: p.len(),
                });
            }
            checked_distribution(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    let scores: Vec<f64> = (0..n_splits)
        .map(|s| {
            let part = &rows[s * n / n_splits..(s + 1) * n / n_splits];
            let mut marginal = vec![0.0; n_classes];
            for p in part {
                marginal.iter_mut().zip(p).for_each(|(m, v)| *m += v);
            }
            marginal.iter_mut().for_each(|m| *m /= part.len() as f64);
            let kl: f64 = part
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&marginal)
                        // the floor guards the logarithm only, so 0·log 0 stays 0
                        .map(|(&pi, &mi)| pi * (pi.max(PROB_FLOOR).ln() - mi.max(PROB_FLOOR).ln()))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / part.len() as f64;
            kl.max(0.0).exp()
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / n_splits as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n_splits as f64;
    Ok(ScoreReport {
        mean,
        std: var.sqrt(),
        n_images: n,
        n_splits,
        classifier_id: classifier_id.to_string(),
    })
}

pub fn inception_score(images: &[ImageRGB], classifier: &dyn LabelModel, n_splits: usize) -> Result<ScoreReport> {
    let probs = images
        .iter()
        .map(|img| classifier.predict(img))
        .collect::<Result<Vec<_>>>()?;
    inception_score_from_probs(&probs, n_splits, classifier.id())
}

/// Predicts chroma for a held-out pair from its lightness alone.
pub trait Colorizer {
    /// Normalized ab planes for `pair.l`; implementations must not read `pair.ab`.
    fn colorize(&mut self, pair: &Pair) -> Result<ChromaPlanes>;
}

/// Scores and per-image outputs of one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub score: ScoreReport,
    /// Mean absolute error of normalized ab over every test pixel.
    pub l1_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub struct Evaluation {
    pub report: EvalReport,
    pub outputs: Vec<ImageRGB>,
}

/// Colorize every pair, then score the RGB renderings.
pub fn evaluate(
    colorizer: &mut dyn Colorizer,
    pairs: &[Pair],
    classifier: &dyn LabelModel,
    n_splits: usize,
) -> Result<Evaluation> {
    let mut outputs = Vec::with_capacity(pairs.len());
    let mut abs_sum = 0.0;
    let mut count = 0usize;
    for pair in pairs {
        let ab = colorizer.colorize(pair)?;
        if ab.values.len() != pair.ab.len() {
            return Err(Error::Length {
                expected: pair.ab.len(),
                actual: ab.values.len(),
            });
        }
        abs_sum += ab.values.iter().zip(&pair.ab).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += ab.values.len();
        let lab = compose_output(&pair.to_lab().lightness(), &ab)?;
        outputs.push(lab_to_rgb(&denormalize(&lab)?, pair.id.clone())?);
    }
    let score = inception_score(&outputs, classifier, n_splits)?;
    Ok(Evaluation {
        report: EvalReport {
            score,
            l1_error: abs_sum / count.max(1) as f64,
            test_fraction: None,
            notes: Vec::new(),
        },
        outputs,
    })
}
