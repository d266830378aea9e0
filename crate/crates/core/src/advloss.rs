//! Adversarial and L1 losses, their weighted composition, and the gradients
//! of both training objectives.
//!
//! The generator minimizes `w_adv·BCE(D(L ⊕ G(L)), real) + w_l1·|G(L) − ab|₁`
//! (non-saturating adversarial term). The discriminator minimizes
//! `BCE(D(L ⊕ ab), real) + BCE(D(L ⊕ G(L)), fake)`.

use serde::{Deserialize, Serialize};

use crate::datapipe::Batch;
use crate::netcore::{DiscriminatorNet, GeneratorNet, Network, Phase, RunningStat};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn target(self) -> f64 {
        match self {
            Label::Real => 1.0,
            Label::Fake => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_adv: f64,
    pub w_l1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_adv: 1.0,
            w_l1: 100.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_adv >= 0.0 && self.w_l1 >= 0.0) {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        if self.w_adv == 0.0 && self.w_l1 == 0.0 {
            return Err(Error::Config("loss weights cannot both be zero".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradTarget {
    Generator,
    Discriminator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub wrt: GradTarget,
    pub vector: Vec<f64>,
    pub loss_value: f64,
}

impl GradientBundle {
    fn checked(self) -> Result<Self> {
        if !self.loss_value.is_finite() {
            return Err(Error::NonFinite(format!("{:?} loss {}", self.wrt, self.loss_value)));
        }
        if let Some(i) = self.vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{:?} gradient entry {i}", self.wrt)));
        }
        Ok(self)
    }
}

/// Mean binary cross-entropy of `scores` against a constant label.
pub fn adversarial_loss(scores: &[f64], label: Label) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Shape("no scores".into()));
    }
    let mut total = 0.0;
    for &s in scores {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::ScoreRange(s));
        }
        total -= match label {
            Label::Real => s.ln(),
            Label::Fake => (1.0 - s).ln(),
        };
    }
    Ok(total / scores.len() as f64)
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// [`adversarial_loss`] evaluated on logits, with `d loss / d logit`.
pub fn bce_with_logits(logits: &[f64], label: Label) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .map(|&z| match label {
            Label::Real => {
                loss += softplus(-z);
                (sigmoid(z) - 1.0) / n
            }
            Label::Fake => {
                loss += softplus(z);
                sigmoid(z) / n
            }
        })
        .collect();
    (loss / n, grad)
}

/// Mean absolute difference.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "l1: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let sum: f64 = pred.data.iter().zip(&target.data).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / pred.data.len() as f64)
}

// Subgradient with sign(0) = 0.
fn l1_grad(pred: &Tensor, target: &Tensor, scale: f64) -> Tensor {
    let n = pred.data.len() as f64;
    let mut g = pred.clone();
    for (v, &t) in g.data.iter_mut().zip(&target.data) {
        let d = *v - t;
        *v = if d > 0.0 {
            scale / n
        } else if d < 0.0 {
            -scale / n
        } else {
            0.0
        };
    }
    g
}

pub fn combined_loss(adv: f64, l1: f64, w: &LossWeights) -> f64 {
    w.w_adv * adv + w.w_l1 * l1
}

/// Generator objective gradient plus the separately tracked loss terms.
#[derive(Clone, Debug)]
pub struct GeneratorGradient {
    pub bundle: GradientBundle,
    pub adv_loss: f64,
    pub l1_loss: f64,
    /// Generator batch-norm statistics seen in this pass.
    pub running: Vec<RunningStat>,
}

pub fn generator_gradient(
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    batch: &Batch,
    w: &LossWeights,
    phase: Phase,
) -> Result<GeneratorGradient> {
    let (fake_ab, g_cache) = g.forward_cached(&batch.l, phase)?;
    let l1 = l1_loss(&fake_ab, &batch.ab)?;
    let fake = batch.l.concat_channels(&fake_ab)?;
    let (logits, d_cache) = d.forward_cached(&fake, phase)?;
    let (adv, d_logits) = bce_with_logits(&logits, Label::Real);
    let d_logits: Vec<f64> = d_logits.iter().map(|v| v * w.w_adv).collect();
    let d_img = d.backward(&d_cache, &d_logits, None);
    let (_, d_ab_adv) = d_img.split_channels(1);
    let mut d_ab = l1_grad(&fake_ab, &batch.ab, w.w_l1);
    d_ab.data.iter_mut().zip(&d_ab_adv.data).for_each(|(a, b)| *a += b);
    let mut vector = vec![0.0; g.param_count()];
    g.backward(&g_cache, &d_ab, &mut vector);
    let bundle = GradientBundle {
        wrt: GradTarget::Generator,
        vector,
        loss_value: combined_loss(adv, l1, w),
    }
    .checked()?;
    Ok(GeneratorGradient {
        bundle,
        adv_loss: adv,
        l1_loss: l1,
        running: g_cache.running_stats(),
    })
}

/// Discriminator objective gradient `ε_D = ε_real + ε_fake`.
#[derive(Clone, Debug)]
pub struct DiscriminatorGradient {
    pub bundle: GradientBundle,
    pub real: GradientBundle,
    pub fake: GradientBundle,
    /// Discriminator batch-norm statistics from the real then the fake pass.
    pub running: Vec<RunningStat>,
}

fn discriminator_term(d: &DiscriminatorNet, img: &Tensor, label: Label, phase: Phase) -> Result<(GradientBundle, Vec<RunningStat>)> {
    let (logits, cache) = d.forward_cached(img, phase)?;
    let (loss, d_logits) = bce_with_logits(&logits, label);
    let mut vector = vec![0.0; d.param_count()];
    d.backward(&cache, &d_logits, Some(&mut vector));
    let bundle = GradientBundle {
        wrt: GradTarget::Discriminator,
        vector,
        loss_value: loss,
    };
    Ok((bundle, cache.running_stats()))
}

pub fn discriminator_gradient(
    d: &DiscriminatorNet,
    g: &GeneratorNet,
    batch: &Batch,
    phase: Phase,
) -> Result<DiscriminatorGradient> {
    let real_img = batch.l.concat_channels(&batch.ab)?;
    let fake_ab = g.forward(&batch.l, phase)?;
    let fake_img = batch.l.concat_channels(&fake_ab)?;
    let (real, mut running) = discriminator_term(d, &real_img, Label::Real, phase)?;
    let (fake, fake_running) = discriminator_term(d, &fake_img, Label::Fake, phase)?;
    running.extend(fake_running);
    let vector = real.vector.iter().zip(&fake.vector).map(|(a, b)| a + b).collect();
    let bundle = GradientBundle {
        wrt: GradTarget::Discriminator,
        vector,
        loss_value: real.loss_value + fake.loss_value,
    }
    .checked()?;
    Ok(DiscriminatorGradient {
        bundle,
        real,
        fake,
        running,
    })
}
