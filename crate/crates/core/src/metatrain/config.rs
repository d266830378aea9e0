use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::advloss::LossWeights;
use crate::netcore::{DiscriminatorArch, GeneratorArch};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Metalgan,
    Cgan,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Metalgan => "metalgan",
            Mode::Cgan => "cgan",
        })
    }
}

/// Training hyperparameters. Missing JSON fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_epochs: usize,
    pub n_meta_iter: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub stepsize_ml: f64,
    pub weights: LossWeights,
    pub k: usize,
    pub query_fraction: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Square edge every image is resampled to.
    pub resolution: usize,
    pub test_fraction: f64,
    pub generator: GeneratorArch,
    pub discriminator: DiscriminatorArch,
    /// Heavy-ball coefficient; 0 is plain SGD.
    pub momentum: f64,
    /// Upper bound on batches per discriminator pass.
    pub d_pass_cap: Option<usize>,
    /// Draw a fresh query set every epoch instead of once.
    pub resample_queries: bool,
    /// Inner-loop steps on the resolved task before colorizing a test image (0 = none).
    pub adapt_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_epochs: 200,
            n_meta_iter: 100,
            lr_g: 1e-4,
            lr_d: 1e-4,
            stepsize_ml: 1e-3,
            weights: LossWeights::default(),
            k: 64,
            query_fraction: 0.1,
            batch_size: 1,
            seed: 0,
            mode: Mode::Metalgan,
            resolution: 32,
            test_fraction: 0.2,
            generator: GeneratorArch::default(),
            discriminator: DiscriminatorArch::default(),
            momentum: 0.0,
            d_pass_cap: None,
            resample_queries: false,
            adapt_steps: 0,
        }
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

impl TrainConfig {
    /// Zero rates and zero inner iterations are accepted: they make the
    /// corresponding update an exact no-op.
    pub fn validate(&self) -> Result<()> {
        nonneg("lr_g", self.lr_g)?;
        nonneg("lr_d", self.lr_d)?;
        nonneg("stepsize_ml", self.stepsize_ml)?;
        self.weights.validate()?;
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.query_fraction > 0.0 && self.query_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "query_fraction must lie in (0, 1], got {}",
                self.query_fraction
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let div = self.generator.divisor().max(self.discriminator.divisor());
        if self.resolution < 8 || !self.resolution.is_multiple_of(div) {
            return Err(Error::Indivisible {
                size: self.resolution,
                divisor: div,
            });
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_json() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"n_epochs": 3, "mode": "cgan"}"#).unwrap();
        assert_eq!(cfg.n_epochs, 3);
        assert_eq!(cfg.mode, Mode::Cgan);
        assert_eq!(cfg.n_meta_iter, 100);
        assert_eq!(cfg.weights.w_l1, 100.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            TrainConfig { lr_g: -1.0, ..Default::default() },
            TrainConfig { query_fraction: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { resolution: 36, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
