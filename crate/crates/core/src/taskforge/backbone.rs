//! Frozen convolutional feature extractors.

use std::path::Path;

use image::imageops::FilterType;
use serde::{Deserialize, Serialize};

use super::FeatureMap;
use crate::colorlab::ImageRGB;
use crate::netcore::layers::Conv;
use crate::rng::substream;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Anything that maps an image to a `C×h×w` activation map.
pub trait FeatureExtractor {
    fn channels(&self) -> usize;
    /// Edge length images are resampled to before extraction.
    fn input_size(&self) -> usize;
    fn extract(&self, img: &ImageRGB) -> Result<FeatureMap>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneLayer {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[out_c][in_c][k][k]` followed by `out_c` biases.
    pub weights: Vec<f64>,
}

/// Small conv-ReLU stack with frozen weights, stored as a JSON asset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvBackbone {
    pub name: String,
    pub input_size: usize,
    pub layers: Vec<BackboneLayer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub input_size: usize,
    /// Output channels per layer; the last entry is the descriptor dimension.
    pub widths: Vec<usize>,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            input_size: 32,
            widths: vec![32, 64, 128],
            seed: 0,
        }
    }
}

impl ConvBackbone {
    /// Random-feature backbone: 3×3 convolutions, the first at stride 1 and
    /// the rest at stride 2, He-scaled uniform weights, zero biases.
    pub fn seeded(cfg: &BackboneConfig) -> Result<Self> {
        if cfg.widths.is_empty() || cfg.widths.contains(&0) {
            return Err(Error::Backbone("backbone needs at least one nonzero layer width".into()));
        }
        if cfg.input_size < 8 {
            return Err(Error::Backbone("input size below 8".into()));
        }
        let mut rng = substream(cfg.seed, "backbone");
        let mut in_c = 3;
        let mut layers = Vec::new();
        for (i, &out_c) in cfg.widths.iter().enumerate() {
            let k = 3;
            let fan_in = (in_c * k * k) as f64;
            let bound = (6.0 / fan_in).sqrt();
            let mut weights: Vec<f64> = (0..out_c * in_c * k * k)
                .map(|_| rand::Rng::gen_range(&mut rng, -bound..bound))
                .collect();
            weights.extend(std::iter::repeat_n(0.0, out_c));
            layers.push(BackboneLayer {
                in_c,
                out_c,
                kernel: k,
                stride: if i == 0 { 1 } else { 2 },
                weights,
            });
            in_c = out_c;
        }
        Ok(ConvBackbone {
            name: format!("random-conv-{}-s{}", cfg.widths.len(), cfg.seed),
            input_size: cfg.input_size,
            layers,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Backbone("no layers".into()));
        }
        let mut in_c = 3;
        for (i, l) in self.layers.iter().enumerate() {
            let expected = l.out_c * l.in_c * l.kernel * l.kernel + l.out_c;
            if l.in_c != in_c || l.weights.len() != expected || l.stride == 0 || l.kernel == 0 {
                return Err(Error::Backbone(format!("layer {i} is malformed")));
            }
            if l.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Backbone(format!("layer {i} has non-finite weights")));
            }
            in_c = l.out_c;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Backbone(format!("{}: {e}", path.display())))?;
        let bb: ConvBackbone = serde_json::from_str(&text)
            .map_err(|e| Error::Backbone(format!("{}: {e}", path.display())))?;
        bb.validate()?;
        Ok(bb)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn run(&self, input: Tensor) -> Tensor {
        let mut x = input;
        for l in &self.layers {
            let conv = Conv {
                in_c: l.in_c,
                out_c: l.out_c,
                k: l.kernel,
                stride: l.stride,
                pad: l.kernel / 2,
                transposed: false,
                offset: 0,
            };
            x = conv.forward(&l.weights, &x);
            x.data.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        x
    }
}

impl FeatureExtractor for ConvBackbone {
    fn channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_c)
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn extract(&self, img: &ImageRGB) -> Result<FeatureMap> {
        let s = self.input_size;
        let pixels: Vec<u8> = if img.width() == s && img.height() == s {
            img.pixels().to_vec()
        } else {
            let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
                .expect("buffer matches dimensions");
            image::imageops::resize(&buf, s as u32, s as u32, FilterType::Triangle).into_raw()
        };
        let mut input = Tensor::zeros(1, 3, s, s);
        for (i, px) in pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                input.data[c * s * s + i] = f64::from(px[c]) / 127.5 - 1.0;
            }
        }
        let out = self.run(input);
        Ok(FeatureMap {
            image_id: img.id.clone(),
            channels: out.c,
            h: out.h,
            w: out.w,
            values: out.data,
        })
    }
}
