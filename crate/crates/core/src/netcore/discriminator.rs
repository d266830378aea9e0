use serde::{Deserialize, Serialize};

use super::layers::{Activation, BatchNorm, Conv, Phase, RunningStat, Stage, StageCache};
use super::Network;
use crate::rng::substream;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// `n_blocks` stride-2 conv-BN-ReLU blocks followed by a 1×1 scoring head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorArch {
    pub n_blocks: usize,
    pub base_width: usize,
    /// Score every location of the final map instead of one scalar per image.
    #[serde(default)]
    pub patch: bool,
}

impl Default for DiscriminatorArch {
    fn default() -> Self {
        DiscriminatorArch {
            n_blocks: 3,
            base_width: 16,
            patch: false,
        }
    }
}

impl DiscriminatorArch {
    pub fn divisor(&self) -> usize {
        1 << self.n_blocks
    }
}

#[derive(Clone, Debug)]
pub struct DiscriminatorNet {
    pub arch: DiscriminatorArch,
    blocks: Vec<Stage>,
    head: Stage,
    params: Vec<f64>,
    buffers: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorCache {
    blocks: Vec<StageCache>,
    head: StageCache,
    input_shape: [usize; 4],
}

impl DiscriminatorCache {
    pub fn running_stats(&self) -> Vec<RunningStat> {
        self.blocks
            .iter()
            .filter_map(|s| s.running_stat().cloned())
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl DiscriminatorNet {
    pub fn new(arch: DiscriminatorArch) -> Result<Self> {
        if arch.n_blocks == 0 || arch.base_width == 0 {
            return Err(Error::Config("discriminator needs at least one block".into()));
        }
        let mut offset = 0;
        let mut buf = 0;
        let mut blocks = Vec::with_capacity(arch.n_blocks);
        let mut in_c = 3;
        for j in 0..arch.n_blocks {
            let out_c = arch.base_width << j;
            let conv = Conv {
                in_c,
                out_c,
                k: 4,
                stride: 2,
                pad: 1,
                transposed: false,
                offset,
            };
            offset += conv.param_count();
            let norm = BatchNorm {
                channels: out_c,
                offset,
                buffer_offset: buf,
            };
            offset += norm.param_count();
            buf += norm.buffer_count();
            blocks.push(Stage {
                conv,
                norm: Some(norm),
                act: Activation::Leaky(0.0),
            });
            in_c = out_c;
        }
        let head = Stage {
            conv: Conv {
                in_c,
                out_c: 1,
                k: 1,
                stride: 1,
                pad: 0,
                transposed: false,
                offset,
            },
            norm: None,
            act: Activation::Identity,
        };
        offset += head.param_count();
        Ok(DiscriminatorNet {
            arch,
            blocks,
            head,
            params: vec![0.0; offset],
            buffers: vec![0.0; buf],
        })
    }

    pub fn with_seed(arch: DiscriminatorArch, seed: u64) -> Result<Self> {
        let mut d = Self::new(arch)?;
        d.init_params(seed);
        Ok(d)
    }

    /// Logits, `B` of them (scalar mode) or `B·h·w` (patch mode), batch-major.
    pub fn logits(&self, img: &Tensor, phase: Phase) -> Result<Vec<f64>> {
        Ok(self.forward_cached(img, phase)?.0)
    }

    /// Realness scores in (0, 1).
    pub fn scores(&self, img: &Tensor, phase: Phase) -> Result<Vec<f64>> {
        Ok(self.logits(img, phase)?.into_iter().map(sigmoid).collect())
    }

    pub fn forward_cached(&self, img: &Tensor, phase: Phase) -> Result<(Vec<f64>, DiscriminatorCache)> {
        if img.c != 3 {
            return Err(Error::Shape(format!(
                "discriminator expects 3 Lab channels, got {}",
                img.c
            )));
        }
        let div = self.arch.divisor();
        for size in [img.h, img.w] {
            if size % div != 0 || size == 0 {
                return Err(Error::Indivisible { size, divisor: div });
            }
        }
        let p = &self.params;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut x = img.clone();
        for s in &self.blocks {
            let c = s.forward(p, &self.buffers, x, phase);
            x = c.output().clone();
            blocks.push(c);
        }
        let head = self.head.forward(p, &self.buffers, x, phase);
        let map = head.output();
        let logits = if self.arch.patch {
            map.data.clone()
        } else {
            let plane = map.plane() as f64;
            (0..map.n).map(|b| map.item(b).iter().sum::<f64>() / plane).collect()
        };
        let cache = DiscriminatorCache {
            blocks,
            head,
            input_shape: img.shape(),
        };
        Ok((logits, cache))
    }

    /// Accumulate `dL/dθ_D` into `grad` (if given) and return `dL/d(input)`.
    pub fn backward(&self, cache: &DiscriminatorCache, d_logits: &[f64], grad: Option<&mut [f64]>) -> Tensor {
        let p = &self.params;
        let map = cache.head.output();
        let mut d_map = Tensor::zeros(map.n, map.c, map.h, map.w);
        if self.arch.patch {
            d_map.data.copy_from_slice(d_logits);
        } else {
            let plane = map.plane() as f64;
            for b in 0..map.n {
                d_map.item_mut(b).fill(d_logits[b] / plane);
            }
        }
        let mut scratch;
        let grad = match grad {
            Some(g) => g,
            None => {
                scratch = vec![0.0; p.len()];
                &mut scratch[..]
            }
        };
        let mut g = self
            .head
            .backward(p, &cache.head, &d_map, grad, true)
            .expect("dx requested");
        for (s, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            g = s.backward(p, c, &g, grad, true).expect("dx requested");
        }
        debug_assert_eq!(g.shape(), cache.input_shape);
        g
    }
}

impl Network for DiscriminatorNet {
    fn param_count(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn buffers(&self) -> &[f64] {
        &self.buffers
    }

    fn buffers_mut(&mut self) -> &mut [f64] {
        &mut self.buffers
    }

    fn init_params(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, "discriminator-init");
        for s in self.blocks.iter().chain(std::iter::once(&self.head)) {
            s.init(&mut self.params, &mut self.buffers, &mut rng);
        }
        self.params.clone()
    }
}
