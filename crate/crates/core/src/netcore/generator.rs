use serde::{Deserialize, Serialize};

use super::layers::{Activation, BatchNorm, Conv, Phase, RunningStat, Stage, StageCache};
use super::Network;
use crate::rng::substream;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Encoder-decoder shape: `depth` stride-2 stages down and back up, with
/// `base_width` channels after the first stage, doubling per stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorArch {
    pub depth: usize,
    pub base_width: usize,
}

impl Default for GeneratorArch {
    fn default() -> Self {
        GeneratorArch {
            depth: 3,
            base_width: 16,
        }
    }
}

impl GeneratorArch {
    /// Channels after down stage `i` (0-based).
    fn width(&self, i: usize) -> usize {
        self.base_width << i
    }

    /// Spatial sizes must survive `depth` halvings.
    pub fn divisor(&self) -> usize {
        1 << self.depth
    }
}

/// U-Net: L plane in, ab planes out (tanh-bounded).
#[derive(Clone, Debug)]
pub struct GeneratorNet {
    pub arch: GeneratorArch,
    down: Vec<Stage>,
    // up[i] mirrors down[i]; executed from i = depth-1 down to 0
    up: Vec<Stage>,
    params: Vec<f64>,
    buffers: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GeneratorCache {
    down: Vec<StageCache>,
    up: Vec<StageCache>,
}

impl GeneratorCache {
    pub fn running_stats(&self) -> Vec<RunningStat> {
        self.down
            .iter()
            .chain(&self.up)
            .filter_map(|s| s.running_stat().cloned())
            .collect()
    }
}

impl GeneratorNet {
    /// Build with all-zero parameters; call [`Network::init_params`] to initialize.
    pub fn new(arch: GeneratorArch) -> Result<Self> {
        if arch.depth == 0 || arch.base_width == 0 {
            return Err(Error::Config("generator depth and width must be positive".into()));
        }
        let mut offset = 0;
        let mut buf = 0;
        let mut stage = |in_c: usize, out_c: usize, transposed: bool, norm: bool, act: Activation| {
            let conv = Conv {
                in_c,
                out_c,
                k: 4,
                stride: 2,
                pad: 1,
                transposed,
                offset,
            };
            offset += conv.param_count();
            let norm = norm.then(|| {
                let n = BatchNorm {
                    channels: out_c,
                    offset,
                    buffer_offset: buf,
                };
                offset += n.param_count();
                buf += n.buffer_count();
                n
            });
            Stage { conv, norm, act }
        };
        let d = arch.depth;
        let down: Vec<Stage> = (0..d)
            .map(|i| {
                let in_c = if i == 0 { 1 } else { arch.width(i - 1) };
                stage(in_c, arch.width(i), false, i > 0, Activation::Leaky(0.2))
            })
            .collect();
        let mut up: Vec<Stage> = (0..d)
            .rev()
            .map(|i| {
                let in_c = if i == d - 1 {
                    arch.width(d - 1)
                } else {
                    2 * arch.width(i)
                };
                if i == 0 {
                    stage(in_c, 2, true, false, Activation::Tanh)
                } else {
                    stage(in_c, arch.width(i - 1), true, true, Activation::Leaky(0.0))
                }
            })
            .collect();
        up.reverse();
        Ok(GeneratorNet {
            arch,
            down,
            up,
            params: vec![0.0; offset],
            buffers: vec![0.0; buf],
        })
    }

    pub fn with_seed(arch: GeneratorArch, seed: u64) -> Result<Self> {
        let mut g = Self::new(arch)?;
        g.init_params(seed);
        Ok(g)
    }

    fn check_input(&self, l: &Tensor) -> Result<()> {
        if l.c != 1 {
            return Err(Error::Shape(format!("generator expects 1 channel, got {}", l.c)));
        }
        let div = self.arch.divisor();
        for size in [l.h, l.w] {
            if size % div != 0 || size == 0 {
                return Err(Error::Indivisible { size, divisor: div });
            }
        }
        Ok(())
    }

    /// `B×1×H×W` normalized L → `B×2×H×W` ab in `[-1, 1]`.
    pub fn forward(&self, l: &Tensor, phase: Phase) -> Result<Tensor> {
        Ok(self.forward_cached(l, phase)?.0)
    }

    pub fn forward_cached(&self, l: &Tensor, phase: Phase) -> Result<(Tensor, GeneratorCache)> {
        self.check_input(l)?;
        let p = &self.params;
        let bufs = &self.buffers;
        let d = self.arch.depth;
        let mut down = Vec::with_capacity(d);
        let mut x = l.clone();
        for s in &self.down {
            let c = s.forward(p, bufs, x, phase);
            x = c.output().clone();
            down.push(c);
        }
        let mut up: Vec<Option<StageCache>> = vec![None; d];
        let mut u = x;
        for i in (0..d).rev() {
            let input = if i == d - 1 {
                u
            } else {
                u.concat_channels(down[i].output())?
            };
            let c = self.up[i].forward(p, bufs, input, phase);
            u = c.output().clone();
            up[i] = Some(c);
        }
        let up = up.into_iter().map(|c| c.expect("every up stage ran")).collect();
        Ok((u, GeneratorCache { down, up }))
    }

    /// Accumulate `dL/dθ_G` into `grad` given `dL/d(ab)`.
    pub fn backward(&self, cache: &GeneratorCache, d_ab: &Tensor, grad: &mut [f64]) {
        let p = &self.params;
        let d = self.arch.depth;
        let mut d_skip: Vec<Option<Tensor>> = vec![None; d];
        let mut du = d_ab.clone();
        for i in 0..d {
            let d_in = self.up[i]
                .backward(p, &cache.up[i], &du, grad, true)
                .expect("dx requested");
            if i == d - 1 {
                d_skip[i] = Some(d_in);
            } else {
                let (d_prev, d_s) = d_in.split_channels(self.arch.width(i));
                d_skip[i] = Some(d_s);
                du = d_prev;
            }
        }
        let mut g = d_skip[d - 1].take().expect("bottleneck gradient");
        for i in (0..d).rev() {
            if i < d - 1 {
                let s = d_skip[i].take().expect("skip gradient");
                g.data.iter_mut().zip(&s.data).for_each(|(a, b)| *a += b);
            }
            match self.down[i].backward(p, &cache.down[i], &g, grad, i > 0) {
                Some(next) => g = next,
                None => break,
            }
        }
    }
}

impl Network for GeneratorNet {
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
        let mut rng = substream(seed, "generator-init");
        for s in self.down.iter().chain(&self.up) {
            s.init(&mut self.params, &mut self.buffers, &mut rng);
        }
        self.params.clone()
    }
}
