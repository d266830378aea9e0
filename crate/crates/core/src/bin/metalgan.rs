use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use metalgan_core::colorlab::{compose_output, denormalize, lab_to_rgb};
use metalgan_core::datapipe::toy::{write_toy_corpus, TOY_CLASSES};
use metalgan_core::datapipe::{ingest, load_image, load_images, save_png, split, DatasetIndex, PairStore, SplitRole};
use metalgan_core::evalkit::{evaluate, sample_grid, Colorizer, ColorPrototypeClassifier, DEFAULT_SPLITS};
use metalgan_core::metatrain::{
    append_trace_csv, gray_pair, load_checkpoint, read_trace_csv, save_checkpoint, train_cgan, train_metalgan, Adaptation,
    Mode, NetColorizer, TrainConfig, TrainState, TraceRow,
};
use metalgan_core::taskforge::{BackboneConfig, ClusterFile, ConvBackbone, DescriptorSource, TaskSet};

const CACHE_ENV: &str = "METALGAN_CACHE";

#[derive(Parser)]
#[command(name = "metalgan", version, about = "Cluster-wise meta-learned image colorization")]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Metalgan,
    Cgan,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Luminance,
    Rgb,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic toy corpus and a color classifier fitted on it.
    Toy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
    /// Index an image directory and split it into train/test.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Build tasks from the training split: descriptors, PCA, K-means.
    Cluster {
        /// Index JSON from `ingest`, or an image directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 32)]
        pca_dim: usize,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        /// Backbone asset; by default a seeded one is cached under $METALGAN_CACHE.
        #[arg(long)]
        backbone: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SourceArg::Luminance)]
        source: SourceArg,
    },
    Train {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Required in metalgan mode.
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint directory (or its manifest) to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Colorize the test split and write a score report.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SPLITS)]
        splits: usize,
        #[arg(long)]
        out: PathBuf,
        /// Enables per-task adaptation before colorizing.
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Overrides the checkpoint's adapt_steps.
        #[arg(long)]
        adapt_steps: Option<usize>,
        /// Also write a gray/truth/output grid of the first test images.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Colorize one grayscale image.
    Colorize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, requires = "data")]
        clusters: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".metalgan-cache"))
}

/// An index JSON, or a directory to ingest and split on the fly.
fn open_index(path: &Path, test_fraction: f64, seed: u64) -> anyhow::Result<DatasetIndex> {
    if path.is_dir() {
        Ok(split(&ingest(path)?, test_fraction, seed)?)
    } else {
        DatasetIndex::load(path).with_context(|| format!("reading index {}", path.display()))
    }
}

fn backbone(path: Option<&Path>, seed: u64) -> anyhow::Result<ConvBackbone> {
    if let Some(p) = path {
        return Ok(ConvBackbone::load(p)?);
    }
    let cfg = BackboneConfig {
        seed,
        ..BackboneConfig::default()
    };
    let bb = ConvBackbone::seeded(&cfg)?;
    let dir = cache_dir();
    let cached = dir.join(format!("{}.json", bb.name));
    if cached.exists() {
        return Ok(ConvBackbone::load(&cached)?);
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    bb.save(&cached)?;
    Ok(bb)
}

fn load_tasks(path: &Path) -> anyhow::Result<TaskSet> {
    Ok(TaskSet::from_file(ClusterFile::load(path)?)?)
}

fn run_train(
    seed: Option<u64>,
    mode: Option<ModeArg>,
    config: Option<&Path>,
    clusters: Option<&Path>,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
) -> anyhow::Result<()> {
    let (resumed, mut cfg) = match resume {
        Some(p) => {
            let (state, manifest) = load_checkpoint(p)?;
            (Some(state), manifest.config)
        }
        None => (None, TrainConfig::default()),
    };
    if let Some(p) = config {
        let from_file = TrainConfig::load(p)?;
        if resumed.is_some() && (from_file.generator != cfg.generator || from_file.discriminator != cfg.discriminator) {
            bail!("config architecture differs from the resumed checkpoint");
        }
        cfg = from_file;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = mode {
        cfg.mode = match m {
            ModeArg::Metalgan => Mode::Metalgan,
            ModeArg::Cgan => Mode::Cgan,
        };
    }
    cfg.validate()?;
    let index = open_index(data, cfg.test_fraction, cfg.seed)?;
    let train_images = load_images(&index, SplitRole::Train, cfg.resolution)?;
    let store = PairStore::from_images(&train_images)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    cfg.save(&out.join("config.json"))?;
    let trace_path = out.join("trace.csv");
    let start = resumed.as_ref().map_or(0, |s| s.epoch);
    if trace_path.exists() {
        // drop rows from epochs that will be re-run
        let kept: Vec<TraceRow> = if start == 0 {
            Vec::new()
        } else {
            read_trace_csv(&trace_path)?.into_iter().filter(|r| r.epoch < start).collect()
        };
        std::fs::remove_file(&trace_path)?;
        append_trace_csv(&trace_path, &kept)?;
    }
    let ckpt_root = out.join("checkpoints");
    let mut hook = |state: &TrainState, rows: &[TraceRow]| {
        append_trace_csv(&trace_path, rows)?;
        save_checkpoint(&ckpt_root.join(format!("epoch_{:04}", state.epoch)), state, &cfg)?;
        Ok(())
    };
    let state = match cfg.mode {
        Mode::Cgan => train_cgan(&store, &cfg, resumed, &mut hook)?,
        Mode::Metalgan => {
            let path = clusters.context("--clusters is required in metalgan mode")?;
            let tasks = load_tasks(path)?;
            if let Some(id) = tasks
                .clusters
                .iter()
                .flat_map(|c| &c.member_ids)
                .find(|id| index.role(id) != Some(SplitRole::Train))
            {
                bail!("cluster member {id} is not in the training split");
            }
            let pool = train_images
                .iter()
                .map(|img| tasks.describe(img))
                .collect::<metalgan_core::Result<Vec<_>>>()?;
            train_metalgan(&store, &tasks.clusters, &pool, &cfg, resumed, &mut hook)?
        }
    };
    println!("trained {} epochs; checkpoints under {}", state.epoch, ckpt_root.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_evaluate(
    seed: Option<u64>,
    checkpoint: &Path,
    data: &Path,
    classifier: &Path,
    splits: usize,
    out: &Path,
    clusters: Option<&Path>,
    adapt_steps: Option<usize>,
    grid: Option<&Path>,
) -> anyhow::Result<()> {
    let (state, manifest) = load_checkpoint(checkpoint)?;
    let cfg = manifest.config;
    let index = open_index(data, cfg.test_fraction, seed.unwrap_or(cfg.seed))?;
    let test = PairStore::load(&index, SplitRole::Test, cfg.resolution)?;
    if test.is_empty() {
        bail!("the index has no test images");
    }
    let clf = ColorPrototypeClassifier::load(classifier)?;
    let steps = adapt_steps.unwrap_or(cfg.adapt_steps);
    let tasks = clusters.map(load_tasks).transpose()?;
    let train = match &tasks {
        Some(_) if steps > 0 => Some(PairStore::load(&index, SplitRole::Train, cfg.resolution)?),
        _ => None,
    };
    let adaptation = match (&tasks, &train) {
        (Some(tasks), Some(train)) => Some(Adaptation {
            tasks,
            train,
            discriminator: &state.discriminator,
            cfg: &cfg,
            steps,
        }),
        _ => None,
    };
    let adapted = adaptation.is_some();
    let mut colorizer = NetColorizer::new(&state.generator, adaptation);
    let result = evaluate(&mut colorizer, test.pairs(), &clf, splits)?;
    let mut report = result.report;
    report.test_fraction = index.test_fraction;
    report.notes.push(format!("mode {} epoch {}", manifest.mode, manifest.epoch));
    report.notes.push(if adapted {
        format!("task adaptation: {steps} steps per cluster")
    } else {
        "no task adaptation".to_string()
    });
    std::fs::write(out, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = grid {
        let n = test.len().min(8);
        let pairs = &test.pairs()[..n];
        let inputs: Vec<_> = pairs.iter().map(|p| p.to_lab().lightness()).collect();
        let targets: Vec<_> = pairs.iter().map(|p| p.to_lab()).collect();
        let outputs: Vec<_> = result.outputs[..n].iter().map(metalgan_core::colorlab::rgb_to_lab).collect();
        sample_grid(&inputs, &targets, &outputs, path)?;
    }
    println!(
        "IS {:.4} ± {:.4} over {} images ({} splits), L1 {:.5}",
        report.score.mean, report.score.std, report.score.n_images, report.score.n_splits, report.l1_error
    );
    Ok(())
}

fn run_colorize(
    seed: Option<u64>,
    checkpoint: &Path,
    input: &Path,
    out: &Path,
    clusters: Option<&Path>,
    data: Option<&Path>,
) -> anyhow::Result<()> {
    let (state, manifest) = load_checkpoint(checkpoint)?;
    let cfg = manifest.config;
    let img = load_image(input, &input.display().to_string(), cfg.resolution)?;
    let pair = gray_pair(&img)?;
    let tasks = clusters.map(load_tasks).transpose()?;
    let train = match data {
        Some(d) if tasks.is_some() => {
            let index = open_index(d, cfg.test_fraction, seed.unwrap_or(cfg.seed))?;
            Some(PairStore::load(&index, SplitRole::Train, cfg.resolution)?)
        }
        _ => None,
    };
    let adaptation = match (&tasks, &train) {
        (Some(tasks), Some(train)) => Some(Adaptation {
            tasks,
            train,
            discriminator: &state.discriminator,
            cfg: &cfg,
            steps: cfg.adapt_steps,
        }),
        _ => None,
    };
    let mut colorizer = NetColorizer::new(&state.generator, adaptation);
    let ab = colorizer.colorize(&pair)?;
    let lab = compose_output(&pair.to_lab().lightness(), &ab)?;
    save_png(&lab_to_rgb(&denormalize(&lab)?, "out")?, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let seed = cli.seed;
    match cli.command {
        Command::Toy { out, count, size } => {
            let images = out.join("images");
            let corpus = write_toy_corpus(&images, count, size, seed.unwrap_or(0))?;
            let clf = ColorPrototypeClassifier::fit(&corpus, TOY_CLASSES, &format!("toy-color-prototypes-v1-s{}", seed.unwrap_or(0)))?;
            clf.save(&out.join("classifier.json"))?;
            println!("wrote {} images to {} and {}", corpus.len(), images.display(), out.join("classifier.json").display());
        }
        Command::Ingest { data, out, test_fraction } => {
            let index = split(&ingest(&data)?, test_fraction, seed.unwrap_or(0))?;
            index.save(&out)?;
            println!(
                "indexed {} images ({} train, {} test, {} skipped)",
                index.entries.len(),
                index.ids(SplitRole::Train).len(),
                index.ids(SplitRole::Test).len(),
                index.skipped
            );
        }
        Command::Cluster {
            data,
            out,
            k,
            pca_dim,
            resolution,
            backbone: bb_path,
            source,
        } => {
            let seed = seed.unwrap_or(0);
            let index = open_index(&data, 0.2, seed)?;
            let images = load_images(&index, SplitRole::Train, resolution)?;
            let source = match source {
                SourceArg::Luminance => DescriptorSource::Luminance,
                SourceArg::Rgb => DescriptorSource::Rgb,
            };
            let tasks = TaskSet::build(&images, backbone(bb_path.as_deref(), seed)?, source, pca_dim, k, seed)?;
            tasks.to_file().save(&out)?;
            let sizes: Vec<usize> = tasks.clusters.iter().map(|c| c.member_ids.len()).collect();
            println!("{} clusters, sizes {:?}", tasks.clusters.len(), sizes);
        }
        Command::Train {
            mode,
            config,
            clusters,
            data,
            out,
            resume,
        } => run_train(seed, mode, config.as_deref(), clusters.as_deref(), &data, &out, resume.as_deref())?,
        Command::Evaluate {
            checkpoint,
            data,
            classifier,
            splits,
            out,
            clusters,
            adapt_steps,
            grid,
        } => run_evaluate(
            seed,
            &checkpoint,
            &data,
            &classifier,
            splits,
            &out,
            clusters.as_deref(),
            adapt_steps,
            grid.as_deref(),
        )?,
        Command::Colorize {
            checkpoint,
            input,
            out,
            clusters,
            data,
        } => run_colorize(seed, &checkpoint, &input, &out, clusters.as_deref(), data.as_deref())?,
    }
    Ok(())
}
