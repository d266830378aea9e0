//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use metalgan_core::advloss::{
    bce_with_logits, discriminator_gradient, generator_gradient, l1_loss, Label, LossWeights,
};
use metalgan_core::datapipe::toy::{toy_corpus, write_toy_corpus};
use metalgan_core::datapipe::{ingest, load_images, split, Batch, PairStore, SplitRole};
use metalgan_core::colorlab::ImageRGB;
use metalgan_core::metatrain::TrainConfig;
use metalgan_core::netcore::{DiscriminatorArch, DiscriminatorNet, GeneratorArch, GeneratorNet, Network, Phase};
use metalgan_core::rng::substream;
use metalgan_core::tensor::Tensor;
use rand::Rng as _;
use metalgan_core::taskforge::{BackboneConfig, ConvBackbone, Descriptor, DescriptorSource, TaskSet};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and eigenvectors (as columns of `v`, row-major `n×n`).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Sample covariance with an `n - 1` denominator, by explicit loops.
pub fn covariance(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = samples.len();
    let d = samples[0].len();
    let mean: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|c| *c /= (n - 1) as f64);
    cov
}

/// Inception Score by direct formula evaluation, split by split.
pub fn brute_force_is(probs: &[Vec<f64>], n_splits: usize) -> (f64, f64) {
    let n = probs.len();
    let mut scores = Vec::new();
    for s in 0..n_splits {
        let lo = s * n / n_splits;
        let hi = (s + 1) * n / n_splits;
        let classes = probs[0].len();
        let mut marginal = vec![0.0; classes];
        for p in &probs[lo..hi] {
            for c in 0..classes {
                marginal[c] += p[c] / (hi - lo) as f64;
            }
        }
        let mut kl_total = 0.0;
        for p in &probs[lo..hi] {
            let mut kl = 0.0;
            for c in 0..classes {
                if p[c] > 0.0 {
                    kl += p[c] * (p[c].max(1e-12) / marginal[c].max(1e-12)).ln();
                }
            }
            kl_total += kl;
        }
        scores.push((kl_total / (hi - lo) as f64).exp());
    }
    let mean = scores.iter().sum::<f64>() / n_splits as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n_splits as f64;
    (mean, var.sqrt())
}

/// FNV-1a over the bit patterns of a parameter vector.
pub fn param_hash(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}

pub fn hash_net(net: &impl Network) -> u64 {
    param_hash(net.params())
}

/// A small toy setting: images, their pair store, tasks and query pool.
pub struct ToySetup {
    pub images: Vec<ImageRGB>,
    pub store: PairStore,
    pub tasks: TaskSet,
    pub pool: Vec<Descriptor>,
}

pub fn toy_setup(count: usize, k: usize, seed: u64) -> ToySetup {
    let images: Vec<ImageRGB> = toy_corpus(count, 16, seed).into_iter().map(|(img, _)| img).collect();
    let bb = ConvBackbone::seeded(&BackboneConfig {
        input_size: 16,
        widths: vec![8, 16],
        seed,
    })
    .unwrap();
    let tasks = TaskSet::build(&images, bb, DescriptorSource::Luminance, 6, k, seed).unwrap();
    let pool = images.iter().map(|i| tasks.describe(i).unwrap()).collect();
    let store = PairStore::from_images(&images).unwrap();
    ToySetup {
        images,
        store,
        tasks,
        pool,
    }
}

/// A config small enough for many end-to-end runs inside a test.
pub fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig {
        n_epochs: 2,
        n_meta_iter: 2,
        lr_g: 1e-3,
        lr_d: 1e-3,
        stepsize_ml: 0.3,
        k: 3,
        query_fraction: 0.25,
        batch_size: 2,
        seed,
        resolution: 16,
        generator: GeneratorArch { depth: 2, base_width: 4 },
        discriminator: DiscriminatorArch {
            n_blocks: 2,
            base_width: 4,
            patch: false,
        },
        d_pass_cap: Some(2),
        ..TrainConfig::default()
    }
}

/// Toy corpus written to disk, ingested and split like a real dataset.
pub struct DiskCorpus {
    pub dir: tempfile::TempDir,
    pub train: Vec<ImageRGB>,
    pub test: Vec<ImageRGB>,
    pub test_fraction: f64,
}

pub fn disk_corpus(count: usize, size: usize, test_fraction: f64, seed: u64) -> DiskCorpus {
    let dir = tempfile::tempdir().unwrap();
    write_toy_corpus(dir.path(), count, size, seed).unwrap();
    let index = split(&ingest(dir.path()).unwrap(), test_fraction, seed).unwrap();
    DiskCorpus {
        train: load_images(&index, SplitRole::Train, size).unwrap(),
        test: load_images(&index, SplitRole::Test, size).unwrap(),
        dir,
        test_fraction,
    }
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn random_batch(n: usize, size: usize, seed: u64) -> Batch {
    let mut rng = substream(seed, "fd-batch");
    let l = (0..n * size * size).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ab = (0..n * 2 * size * size).map(|_| rng.gen_range(-0.5..0.5)).collect();
    Batch {
        ids: (0..n).map(|i| format!("b{i}")).collect(),
        l: Tensor::from_vec(n, 1, size, size, l).unwrap(),
        ab: Tensor::from_vec(n, 2, size, size, ab).unwrap(),
    }
}

// Floor keeps exactly-zero gradients (biases feeding batch norm) from
// dividing roundoff noise by zero.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

// Losses recomputed from forward passes only.
fn g_objective(g: &GeneratorNet, d: &DiscriminatorNet, b: &Batch, w: &LossWeights, phase: Phase) -> f64 {
    let fake = g.forward(&b.l, phase).unwrap();
    let l1 = l1_loss(&fake, &b.ab).unwrap();
    let logits = d.logits(&b.l.concat_channels(&fake).unwrap(), phase).unwrap();
    w.w_adv * bce_with_logits(&logits, Label::Real).0 + w.w_l1 * l1
}

fn d_objective(d: &DiscriminatorNet, g: &GeneratorNet, b: &Batch, phase: Phase) -> f64 {
    let real = b.l.concat_channels(&b.ab).unwrap();
    let fake = b.l.concat_channels(&g.forward(&b.l, phase).unwrap()).unwrap();
    bce_with_logits(&d.logits(&real, phase).unwrap(), Label::Real).0
        + bce_with_logits(&d.logits(&fake, phase).unwrap(), Label::Fake).0
}

/// Worst relative error between the analytic generator gradient and central
/// differences, over every parameter.
pub fn fd_generator(garch: GeneratorArch, darch: DiscriminatorArch, n: usize, size: usize, phase: Phase) -> f64 {
    let g = GeneratorNet::with_seed(garch, 11).unwrap();
    let d = DiscriminatorNet::with_seed(darch, 12).unwrap();
    let b = random_batch(n, size, 13);
    let w = LossWeights::default();
    let analytic = generator_gradient(&g, &d, &b, &w, phase).unwrap().bundle.vector;
    let mut probe = g.clone();
    let mut worst = 0.0_f64;
    for i in 0..g.param_count() {
        let base = g.params()[i];
        probe.params_mut()[i] = base + FD_STEP;
        let up = g_objective(&probe, &d, &b, &w, phase);
        probe.params_mut()[i] = base - FD_STEP;
        let down = g_objective(&probe, &d, &b, &w, phase);
        probe.params_mut()[i] = base;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}

pub fn fd_discriminator(garch: GeneratorArch, darch: DiscriminatorArch, n: usize, size: usize, phase: Phase) -> f64 {
    let g = GeneratorNet::with_seed(garch, 21).unwrap();
    let d = DiscriminatorNet::with_seed(darch, 22).unwrap();
    let b = random_batch(n, size, 23);
    let analytic = discriminator_gradient(&d, &g, &b, phase).unwrap().bundle.vector;
    let mut probe = d.clone();
    let mut worst = 0.0_f64;
    for i in 0..d.param_count() {
        let base = d.params()[i];
        probe.params_mut()[i] = base + FD_STEP;
        let up = d_objective(&probe, &g, &b, phase);
        probe.params_mut()[i] = base - FD_STEP;
        let down = d_objective(&probe, &g, &b, phase);
        probe.params_mut()[i] = base;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}
