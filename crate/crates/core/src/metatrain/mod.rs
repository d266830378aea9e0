//! Meta-training of the generator across tasks, the plain cGAN baseline, and
//! their shared persistence.
//!
//! One MetalGAN epoch visits every query image: the query resolves to a task,
//! a copy of the generator is trained on that task for `n_meta_iter` SGD
//! steps, the outer generator moves a fraction `stepsize_ml` of the way
//! towards the copy, and the discriminator then takes one pass over the task.

mod checkpoint;
mod colorize;
mod config;
mod trace;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, Section};
pub use colorize::{gray_pair, Adaptation, NetColorizer};
pub use config::{Mode, TrainConfig};
pub use trace::{append_trace_csv, read_trace_csv, TraceRow, TRACE_HEADER};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::advloss::{discriminator_gradient, generator_gradient};
use crate::datapipe::{batch_from_ids, load_batch, PairStore};
use crate::netcore::{commit_running_stats, DiscriminatorNet, GeneratorNet, Network, Phase};
use crate::rng::{indexed_substream, substream, Rng};
use crate::taskforge::{retrieve_cluster, Descriptor, TaskCluster};
use crate::{Error, Result};

/// SGD with optional heavy-ball momentum (`v ← μv + g`, `θ ← θ − λv`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sgd {
    pub velocity: Vec<f64>,
}

impl Sgd {
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
        if momentum == 0.0 {
            params.iter_mut().zip(grad).for_each(|(p, g)| *p -= lr * g);
            return;
        }
        if self.velocity.len() != params.len() {
            self.velocity = vec![0.0; params.len()];
        }
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuerySet {
    pub queries: Vec<String>,
    pub resolved: BTreeMap<String, usize>,
}

fn draw_queries(pool: &[Descriptor], clusters: &[TaskCluster], fraction: f64, rng: &mut Rng) -> Result<QuerySet> {
    let usable: Vec<&Descriptor> = pool.iter().filter(|d| !d.degenerate).collect();
    if usable.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("query fraction {fraction} outside (0, 1]")));
    }
    let needed = (1.0 / fraction).ceil() as usize;
    if (usable.len() as f64) * fraction < 1.0 - 1e-9 {
        return Err(Error::InsufficientSamples {
            needed,
            got: usable.len(),
        });
    }
    let count = ((usable.len() as f64 * fraction).round() as usize).clamp(1, usable.len());
    let picks = rand::seq::index::sample(rng, usable.len(), count).into_vec();
    let mut queries = Vec::with_capacity(count);
    let mut resolved = BTreeMap::new();
    for i in picks {
        let d = usable[i];
        let task = retrieve_cluster(d, clusters)?;
        queries.push(d.image_id.clone());
        resolved.insert(d.image_id.clone(), task.cluster_id);
    }
    Ok(QuerySet { queries, resolved })
}

/// Draw `round(fraction·n)` distinct queries from the (projected) training
/// descriptors and resolve each to its nearest task.
pub fn sample_query_set(pool: &[Descriptor], clusters: &[TaskCluster], fraction: f64, seed: u64) -> Result<QuerySet> {
    draw_queries(pool, clusters, fraction, &mut substream(seed, "queries"))
}

/// The generator copy after the inner loop, with its per-step losses.
#[derive(Clone, Debug)]
pub struct InnerLoopState {
    pub theta_tilde: GeneratorNet,
    pub step: usize,
    /// `(adversarial, L1)` generator loss per step.
    pub losses: Vec<(f64, f64)>,
}

fn task_steps(
    task: &TaskCluster,
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    store: &PairStore,
    cfg: &TrainConfig,
    steps: usize,
    rng: &mut Rng,
) -> Result<InnerLoopState> {
    let mut g_tilde = g.clone();
    let mut opt = Sgd::default();
    let mut losses = Vec::with_capacity(steps);
    for j in 0..steps {
        let batch = load_batch(task, store, cfg.batch_size, rng)?;
        let grad = generator_gradient(&g_tilde, d, &batch, &cfg.weights, Phase::Train).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("task {} inner step {j}: {msg}", task.cluster_id)),
            e => e,
        })?;
        opt.step(g_tilde.params_mut(), &grad.bundle.vector, cfg.lr_g, cfg.momentum);
        commit_running_stats(g_tilde.buffers_mut(), &grad.running);
        losses.push((grad.adv_loss, grad.l1_loss));
    }
    Ok(InnerLoopState {
        theta_tilde: g_tilde,
        step: steps,
        losses,
    })
}

/// `n_meta_iter` SGD steps on batches drawn from `task`, starting from a copy
/// of `g`. Neither `g` nor `d` is touched.
pub fn inner_loop(
    task: &TaskCluster,
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    store: &PairStore,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<InnerLoopState> {
    task_steps(task, g, d, store, cfg, cfg.n_meta_iter, rng)
}

/// `θ ← θ + λ(θ̃ − θ)`. Evaluated from whichever endpoint is nearer so that
/// `λ = 0`, `λ = 1` and `θ̃ = θ` are all exact.
pub fn reptile_update(theta: &mut [f64], theta_tilde: &[f64], stepsize: f64) -> Result<()> {
    if theta.len() != theta_tilde.len() {
        return Err(Error::Length {
            expected: theta.len(),
            actual: theta_tilde.len(),
        });
    }
    if stepsize <= 0.5 {
        theta.iter_mut().zip(theta_tilde).for_each(|(t, &u)| *t += stepsize * (u - *t));
    } else {
        theta.iter_mut().zip(theta_tilde).for_each(|(t, &u)| *t = u - (1.0 - stepsize) * (u - *t));
    }
    Ok(())
}

/// Visit the task's members in order, `batch_size` at a time, stepping the
/// discriminator on each batch. Returns the per-batch loss.
pub fn discriminator_pass(
    task: &TaskCluster,
    d: &mut DiscriminatorNet,
    g: &GeneratorNet,
    store: &PairStore,
    cfg: &TrainConfig,
    opt: &mut Sgd,
) -> Result<Vec<f64>> {
    let cap = cfg.d_pass_cap.unwrap_or(usize::MAX);
    let mut losses = Vec::new();
    for (b, ids) in task.member_ids.chunks(cfg.batch_size).take(cap).enumerate() {
        let batch = batch_from_ids(store, ids)?;
        let grad = discriminator_gradient(d, g, &batch, Phase::Train).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("task {} discriminator batch {b}: {msg}", task.cluster_id)),
            e => e,
        })?;
        opt.step(d.params_mut(), &grad.bundle.vector, cfg.lr_d, cfg.momentum);
        commit_running_stats(d.buffers_mut(), &grad.running);
        losses.push(grad.bundle.loss_value);
    }
    Ok(losses)
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    /// Completed epochs.
    pub epoch: usize,
    pub g_opt: Sgd,
    pub d_opt: Sgd,
}

impl TrainState {
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        Ok(TrainState {
            generator: GeneratorNet::with_seed(cfg.generator, cfg.seed)?,
            discriminator: DiscriminatorNet::with_seed(cfg.discriminator, cfg.seed)?,
            epoch: 0,
            g_opt: Sgd::default(),
            d_opt: Sgd::default(),
        })
    }
}

/// Called after every epoch with the new state and that epoch's trace rows.
pub type EpochHook<'a> = dyn FnMut(&TrainState, &[TraceRow]) -> Result<()> + 'a;

fn start_state(cfg: &TrainConfig, resume: Option<TrainState>) -> Result<TrainState> {
    cfg.validate()?;
    let state = match resume {
        Some(s) => s,
        None => TrainState::init(cfg)?,
    };
    if state.generator.arch != cfg.generator || state.discriminator.arch != cfg.discriminator {
        return Err(Error::Checkpoint("resumed architecture differs from the config".into()));
    }
    Ok(state)
}

/// MetalGAN training from `resume` (or a fresh initialization) up to
/// `cfg.n_epochs`. `pool` holds the projected descriptors of the training images.
pub fn train_metalgan(
    store: &PairStore,
    clusters: &[TaskCluster],
    pool: &[Descriptor],
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    hook: &mut EpochHook<'_>,
) -> Result<TrainState> {
    let mut state = start_state(cfg, resume)?;
    let fixed = sample_query_set(pool, clusters, cfg.query_fraction, cfg.seed)?;
    let by_id: BTreeMap<usize, &TaskCluster> = clusters.iter().map(|c| (c.cluster_id, c)).collect();
    while state.epoch < cfg.n_epochs {
        let epoch = state.epoch;
        let mut rng = indexed_substream(cfg.seed, "train", epoch as u64);
        let resampled;
        let queries = if cfg.resample_queries {
            resampled = draw_queries(
                pool,
                clusters,
                cfg.query_fraction,
                &mut indexed_substream(cfg.seed, "queries", epoch as u64),
            )?;
            &resampled
        } else {
            &fixed
        };
        let mut rows = Vec::new();
        for (qi, q) in queries.queries.iter().enumerate() {
            let task = by_id[&queries.resolved[q]];
            let inner = inner_loop(task, &state.generator, &state.discriminator, store, cfg, &mut rng)?;
            for (j, &(adv, l1)) in inner.losses.iter().enumerate() {
                rows.push(TraceRow::generator(epoch, qi, j, adv, l1));
            }
            reptile_update(state.generator.params_mut(), inner.theta_tilde.params(), cfg.stepsize_ml)?;
            reptile_update(state.generator.buffers_mut(), inner.theta_tilde.buffers(), cfg.stepsize_ml)?;
            let d_losses = discriminator_pass(
                task,
                &mut state.discriminator,
                &state.generator,
                store,
                cfg,
                &mut state.d_opt,
            )?;
            for (b, loss) in d_losses.into_iter().enumerate() {
                rows.push(TraceRow::discriminator(epoch, qi, b, loss));
            }
        }
        state.epoch += 1;
        log::info!("metalgan epoch {} done ({} queries)", state.epoch, queries.queries.len());
        hook(&state, &rows)?;
    }
    Ok(state)
}

/// Alternating cGAN training over the whole training set: each epoch
/// shuffles the images, then per batch takes a generator step followed by a
/// discriminator step.
pub fn train_cgan(store: &PairStore, cfg: &TrainConfig, resume: Option<TrainState>, hook: &mut EpochHook<'_>) -> Result<TrainState> {
    let mut state = start_state(cfg, resume)?;
    let mut ids: Vec<String> = store.ids().map(str::to_string).collect();
    ids.sort();
    if ids.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    while state.epoch < cfg.n_epochs {
        let epoch = state.epoch;
        let mut rng = indexed_substream(cfg.seed, "train", epoch as u64);
        let mut order = ids.clone();
        order.shuffle(&mut rng);
        let mut rows = Vec::new();
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = batch_from_ids(store, chunk)?;
            let g_grad = generator_gradient(&state.generator, &state.discriminator, &batch, &cfg.weights, Phase::Train)?;
            state
                .g_opt
                .step(state.generator.params_mut(), &g_grad.bundle.vector, cfg.lr_g, cfg.momentum);
            commit_running_stats(state.generator.buffers_mut(), &g_grad.running);
            let d_grad = discriminator_gradient(&state.discriminator, &state.generator, &batch, Phase::Train)?;
            state
                .d_opt
                .step(state.discriminator.params_mut(), &d_grad.bundle.vector, cfg.lr_d, cfg.momentum);
            commit_running_stats(state.discriminator.buffers_mut(), &d_grad.running);
            rows.push(TraceRow {
                epoch,
                query_index: bi,
                step: 0,
                loss_g_adv: Some(g_grad.adv_loss),
                loss_g_l1: Some(g_grad.l1_loss),
                loss_d: Some(d_grad.bundle.loss_value),
            });
        }
        state.epoch += 1;
        log::info!("cgan epoch {} done", state.epoch);
        hook(&state, &rows)?;
    }
    Ok(state)
}

/// Fine-tune a copy of `g` on one task for `steps` inner steps.
pub fn adapt_to_task(
    task: &TaskCluster,
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    store: &PairStore,
    cfg: &TrainConfig,
    steps: usize,
) -> Result<GeneratorNet> {
    let mut rng = indexed_substream(cfg.seed, "adapt", task.cluster_id as u64);
    Ok(task_steps(task, g, d, store, cfg, steps, &mut rng)?.theta_tilde)
}
