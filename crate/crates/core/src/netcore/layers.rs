//! Layer primitives over a shared flat parameter vector.
//!
//! Every layer stores only offsets into its network's parameter and buffer
//! vectors, so a network's parameters are always one contiguous `Vec<f64>`.

use rand::Rng as _;

use crate::rng::Rng;
use crate::tensor::{col2im, gemm, im2col, ConvGeom, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Forward-pass mode. In `Train`, batch-norm uses batch statistics when the
/// batch holds more than one image and running statistics otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub(crate) struct Conv {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub transposed: bool,
    pub offset: usize,
}

impl Conv {
    pub fn weight_len(&self) -> usize {
        self.in_c * self.out_c * self.k * self.k
    }

    pub fn param_count(&self) -> usize {
        self.weight_len() + self.out_c
    }

    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.weight_len()]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.weight_len();
        &p[start..start + self.out_c]
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        if self.transposed {
            (
                (h - 1) * self.stride + self.k - 2 * self.pad,
                (w - 1) * self.stride + self.k - 2 * self.pad,
            )
        } else {
            (
                (h + 2 * self.pad - self.k) / self.stride + 1,
                (w + 2 * self.pad - self.k) / self.stride + 1,
            )
        }
    }

    // Geometry of the underlying (non-transposed) convolution: for a
    // transposed layer, its output plays the role of the convolution input.
    fn geom(&self, h: usize, w: usize) -> ConvGeom {
        let (oh, ow) = self.out_size(h, w);
        if self.transposed {
            ConvGeom {
                channels: self.out_c,
                h: oh,
                w: ow,
                k: self.k,
                stride: self.stride,
                pad: self.pad,
                oh: h,
                ow: w,
            }
        } else {
            ConvGeom {
                channels: self.in_c,
                h,
                w,
                k: self.k,
                stride: self.stride,
                pad: self.pad,
                oh,
                ow,
            }
        }
    }

    pub fn init(&self, p: &mut [f64], rng: &mut Rng) {
        let fan_in = if self.transposed {
            // each output pixel sees roughly in_c·(k/stride)² inputs
            (self.in_c * self.k * self.k / (self.stride * self.stride)).max(1)
        } else {
            self.in_c * self.k * self.k
        };
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in &mut p[self.offset..self.offset + self.param_count()] {
            *v = rng.gen_range(-bound..bound);
        }
    }

    pub fn forward(&self, p: &[f64], x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_c, "conv input channels");
        let g = self.geom(x.h, x.w);
        let (oh, ow) = self.out_size(x.h, x.w);
        let mut y = Tensor::zeros(x.n, self.out_c, oh, ow);
        let w = self.weights(p);
        let bias = self.bias(p);
        let mut cols = vec![0.0; g.rows() * g.cols()];
        for b in 0..x.n {
            let out = y.item_mut(b);
            if self.transposed {
                // cols = Wᵀ · x, then fold into the output
                gemm(g.rows(), g.cols(), self.in_c, w, true, x.item(b), false, &mut cols, false);
                col2im(&cols, &g, out);
            } else {
                im2col(x.item(b), &g, &mut cols);
                gemm(self.out_c, g.cols(), g.rows(), w, false, &cols, false, out, false);
            }
            let plane = oh * ow;
            for (c, &bv) in bias.iter().enumerate() {
                for v in &mut out[c * plane..(c + 1) * plane] {
                    *v += bv;
                }
            }
        }
        y
    }

    /// Accumulate parameter gradients into `grad`; returns `dL/dx` when asked.
    pub fn backward(
        &self,
        p: &[f64],
        x: &Tensor,
        dy: &Tensor,
        grad: &mut [f64],
        need_dx: bool,
    ) -> Option<Tensor> {
        let g = self.geom(x.h, x.w);
        let wl = self.weight_len();
        let w = self.weights(p);
        let (gw, gb) = grad[self.offset..self.offset + wl + self.out_c].split_at_mut(wl);
        let plane = dy.plane();
        let mut dx = need_dx.then(|| Tensor::zeros(x.n, x.c, x.h, x.w));
        let mut cols = vec![0.0; g.rows() * g.cols()];
        for b in 0..x.n {
            let dyb = dy.item(b);
            for (c, gbv) in gb.iter_mut().enumerate() {
                *gbv += dyb[c * plane..(c + 1) * plane].iter().sum::<f64>();
            }
            if self.transposed {
                im2col(dyb, &g, &mut cols);
                // dW[in_c, out_c·k·k] += x · colsᵀ
                gemm(self.in_c, g.rows(), g.cols(), x.item(b), false, &cols, true, gw, true);
                if let Some(dx) = dx.as_mut() {
                    gemm(self.in_c, g.cols(), g.rows(), w, false, &cols, false, dx.item_mut(b), false);
                }
            } else {
                im2col(x.item(b), &g, &mut cols);
                // dW[out_c, in_c·k·k] += dy · colsᵀ
                gemm(self.out_c, g.rows(), g.cols(), dyb, false, &cols, true, gw, true);
                if let Some(dx) = dx.as_mut() {
                    gemm(g.rows(), g.cols(), self.out_c, w, true, dyb, false, &mut cols, false);
                    col2im(&cols, &g, dx.item_mut(b));
                }
            }
        }
        dx
    }
}

/// Per-channel batch normalization with affine parameters `gamma`, `beta`
/// and running `mean`, `var` buffers.
#[derive(Clone, Debug)]
pub(crate) struct BatchNorm {
    pub channels: usize,
    pub offset: usize,
    pub buffer_offset: usize,
}

/// Batch statistics observed in one forward pass, pending commit to the
/// running buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStat {
    pub buffer_offset: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    batch_stats: bool,
    pub stat: Option<RunningStat>,
}

impl BatchNorm {
    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    pub fn buffer_count(&self) -> usize {
        2 * self.channels
    }

    pub fn init(&self, p: &mut [f64], buffers: &mut [f64]) {
        let c = self.channels;
        p[self.offset..self.offset + c].fill(1.0);
        p[self.offset + c..self.offset + 2 * c].fill(0.0);
        buffers[self.buffer_offset..self.buffer_offset + c].fill(0.0);
        buffers[self.buffer_offset + c..self.buffer_offset + 2 * c].fill(1.0);
    }

    pub fn forward(&self, p: &[f64], buffers: &[f64], x: &Tensor, phase: Phase) -> (Tensor, BnCache) {
        let c = self.channels;
        let plane = x.plane();
        let count = (x.n * plane) as f64;
        let batch_stats = phase == Phase::Train && x.n > 1;
        let (mean, var, stat) = if batch_stats {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for b in 0..x.n {
                let item = x.item(b);
                for ch in 0..c {
                    mean[ch] += item[ch * plane..(ch + 1) * plane].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            for b in 0..x.n {
                let item = x.item(b);
                for ch in 0..c {
                    var[ch] += item[ch * plane..(ch + 1) * plane]
                        .iter()
                        .map(|v| (v - mean[ch]).powi(2))
                        .sum::<f64>();
                }
            }
            let unbiased: Vec<f64> = var.iter().map(|v| v / (count - 1.0).max(1.0)).collect();
            var.iter_mut().for_each(|v| *v /= count);
            let stat = RunningStat {
                buffer_offset: self.buffer_offset,
                mean: mean.clone(),
                var: unbiased,
            };
            (mean, var, Some(stat))
        } else {
            let m = buffers[self.buffer_offset..self.buffer_offset + c].to_vec();
            let v = buffers[self.buffer_offset + c..self.buffer_offset + 2 * c].to_vec();
            (m, v, None)
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let gamma = &p[self.offset..self.offset + c];
        let beta = &p[self.offset + c..self.offset + 2 * c];
        let mut xhat = x.clone();
        let mut y = x.clone();
        for b in 0..x.n {
            let xh = xhat.item_mut(b);
            for ch in 0..c {
                for v in &mut xh[ch * plane..(ch + 1) * plane] {
                    *v = (*v - mean[ch]) * inv_std[ch];
                }
            }
            let yb = y.item_mut(b);
            for ch in 0..c {
                let src = &xhat.item(b)[ch * plane..(ch + 1) * plane];
                for (o, &h) in yb[ch * plane..(ch + 1) * plane].iter_mut().zip(src) {
                    *o = gamma[ch] * h + beta[ch];
                }
            }
        }
        let cache = BnCache {
            xhat,
            inv_std,
            batch_stats,
            stat,
        };
        (y, cache)
    }

    pub fn backward(&self, p: &[f64], cache: &BnCache, dy: &Tensor, grad: &mut [f64]) -> Tensor {
        let c = self.channels;
        let plane = dy.plane();
        let count = (dy.n * plane) as f64;
        let gamma = &p[self.offset..self.offset + c];
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for b in 0..dy.n {
            let d = dy.item(b);
            let xh = cache.xhat.item(b);
            for ch in 0..c {
                let r = ch * plane..(ch + 1) * plane;
                sum_dy[ch] += d[r.clone()].iter().sum::<f64>();
                sum_dy_xhat[ch] += d[r.clone()].iter().zip(&xh[r]).map(|(a, h)| a * h).sum::<f64>();
            }
        }
        for ch in 0..c {
            grad[self.offset + ch] += sum_dy_xhat[ch];
            grad[self.offset + c + ch] += sum_dy[ch];
        }
        let mut dx = dy.clone();
        for b in 0..dy.n {
            let xh = cache.xhat.item(b);
            let out = dx.item_mut(b);
            for ch in 0..c {
                let scale = gamma[ch] * cache.inv_std[ch];
                for i in ch * plane..(ch + 1) * plane {
                    out[i] = if cache.batch_stats {
                        scale / count * (count * out[i] - sum_dy[ch] - xh[i] * sum_dy_xhat[ch])
                    } else {
                        scale * out[i]
                    };
                }
            }
        }
        dx
    }
}

/// Blend observed batch statistics into running buffers.
pub fn commit_running_stats(buffers: &mut [f64], stats: &[RunningStat]) {
    for s in stats {
        let c = s.mean.len();
        for ch in 0..c {
            let m = &mut buffers[s.buffer_offset + ch];
            *m = (1.0 - BN_MOMENTUM) * *m + BN_MOMENTUM * s.mean[ch];
            let v = &mut buffers[s.buffer_offset + c + ch];
            *v = (1.0 - BN_MOMENTUM) * *v + BN_MOMENTUM * s.var[ch];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Activation {
    /// `slope = 0` is a plain ReLU.
    Leaky(f64),
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        match self {
            Activation::Leaky(s) => y.data.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v *= s
                }
            }),
            Activation::Tanh => y.data.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Identity => {}
        }
        y
    }

    /// Backpropagate through the activation given its input and output.
    pub fn backward(self, pre: &Tensor, out: &Tensor, dy: &Tensor) -> Tensor {
        let mut dx = dy.clone();
        match self {
            Activation::Leaky(s) => {
                for (d, &x) in dx.data.iter_mut().zip(&pre.data) {
                    if x < 0.0 {
                        *d *= s;
                    }
                }
            }
            Activation::Tanh => {
                for (d, &y) in dx.data.iter_mut().zip(&out.data) {
                    *d *= 1.0 - y * y;
                }
            }
            Activation::Identity => {}
        }
        dx
    }
}

/// conv → optional batch-norm → activation.
#[derive(Clone, Debug)]
pub(crate) struct Stage {
    pub conv: Conv,
    pub norm: Option<BatchNorm>,
    pub act: Activation,
}

#[derive(Clone, Debug)]
pub(crate) struct StageCache {
    input: Tensor,
    norm: Option<BnCache>,
    pre: Tensor,
    out: Tensor,
}

impl StageCache {
    pub fn output(&self) -> &Tensor {
        &self.out
    }

    pub fn running_stat(&self) -> Option<&RunningStat> {
        self.norm.as_ref().and_then(|n| n.stat.as_ref())
    }
}

impl Stage {
    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.norm.as_ref().map_or(0, |n| n.param_count())
    }

    pub fn init(&self, p: &mut [f64], buffers: &mut [f64], rng: &mut Rng) {
        self.conv.init(p, rng);
        if let Some(n) = &self.norm {
            n.init(p, buffers);
        }
    }

    pub fn forward(&self, p: &[f64], buffers: &[f64], x: Tensor, phase: Phase) -> StageCache {
        let z = self.conv.forward(p, &x);
        let (pre, norm) = match &self.norm {
            Some(n) => {
                let (y, c) = n.forward(p, buffers, &z, phase);
                (y, Some(c))
            }
            None => (z, None),
        };
        let out = self.act.apply(&pre);
        StageCache {
            input: x,
            norm,
            pre,
            out,
        }
    }

    pub fn backward(
        &self,
        p: &[f64],
        cache: &StageCache,
        dy: &Tensor,
        grad: &mut [f64],
        need_dx: bool,
    ) -> Option<Tensor> {
        let mut d = self.act.backward(&cache.pre, &cache.out, dy);
        if let (Some(n), Some(nc)) = (&self.norm, &cache.norm) {
            d = n.backward(p, nc, &d, grad);
        }
        self.conv.backward(p, &cache.input, &d, grad, need_dx)
    }
}
