//! Browser bindings: Lab conversion, Inception Score from a probability
//! table, and a small toy-corpus model trained and colorized in the page.

use metalgan_core::colorlab::{lab_pixel_to_rgb, rgb_pixel_to_lab, rgb_to_lab};
use metalgan_core::datapipe::toy::{toy_corpus, TOY_CLASSES};
use metalgan_core::datapipe::{Pair, PairStore};
use metalgan_core::evalkit::{evaluate, grid_image, inception_score_from_probs, ColorPrototypeClassifier};
use metalgan_core::metatrain::{train_metalgan, Adaptation, NetColorizer, TrainConfig, TrainState};
use metalgan_core::netcore::{DiscriminatorArch, GeneratorArch};
use metalgan_core::taskforge::{BackboneConfig, ConvBackbone, Descriptor, DescriptorSource, TaskSet};
use metalgan_core::{Error, Result};
use wasm_bindgen::prelude::*;

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = rgbToLab)]
pub fn rgb_to_lab_js(r: u8, g: u8, b: u8) -> Vec<f64> {
    rgb_pixel_to_lab([r, g, b]).to_vec()
}

#[wasm_bindgen(js_name = labToRgb)]
pub fn lab_to_rgb_js(l: f64, a: f64, b: f64) -> Vec<u8> {
    lab_pixel_to_rgb([l, a, b]).to_vec()
}

/// `[mean, std]` for a row-major `n × n_classes` table of conditionals.
pub fn score_table(probs: &[f64], n_classes: usize, n_splits: usize) -> Result<[f64; 2]> {
    if n_classes == 0 || !probs.len().is_multiple_of(n_classes) {
        return Err(Error::Shape(format!("{} values do not form rows of {n_classes}", probs.len())));
    }
    let rows: Vec<Vec<f64>> = probs.chunks(n_classes).map(<[f64]>::to_vec).collect();
    let r = inception_score_from_probs(&rows, n_splits, "table")?;
    Ok([r.mean, r.std])
}

#[wasm_bindgen(js_name = inceptionScore)]
pub fn inception_score_js(probs: &[f64], n_classes: usize, n_splits: usize) -> std::result::Result<Vec<f64>, JsError> {
    score_table(probs, n_classes, n_splits).map(|s| s.to_vec()).map_err(js_err)
}

const SIZE: usize = 16;
const TRAIN: usize = 48;
const SHOWN: usize = 6;

/// A toy corpus split 48/12, its tasks, and a model that trains one epoch
/// per call.
#[wasm_bindgen]
pub struct Demo {
    store: PairStore,
    test: Vec<Pair>,
    tasks: TaskSet,
    pool: Vec<Descriptor>,
    classifier: ColorPrototypeClassifier,
    cfg: TrainConfig,
    state: TrainState,
    grid: (usize, usize, Vec<u8>),
}

impl Demo {
    pub fn build(seed: u64) -> Result<Demo> {
        let corpus = toy_corpus(TRAIN + 12, SIZE, seed);
        let (train, test) = corpus.split_at(TRAIN);
        let images: Vec<_> = train.iter().map(|(img, _)| img.clone()).collect();
        let backbone = ConvBackbone::seeded(&BackboneConfig {
            input_size: SIZE,
            widths: vec![8, 16],
            seed,
        })?;
        let tasks = TaskSet::build(&images, backbone, DescriptorSource::Luminance, 6, 3, seed)?;
        let pool = images.iter().map(|i| tasks.describe(i)).collect::<Result<_>>()?;
        let cfg = TrainConfig {
            n_epochs: 0,
            n_meta_iter: 5,
            lr_g: 1e-3,
            lr_d: 1e-3,
            stepsize_ml: 0.3,
            k: 3,
            query_fraction: 0.25,
            batch_size: 4,
            seed,
            resolution: SIZE,
            momentum: 0.5,
            d_pass_cap: Some(2),
            adapt_steps: 5,
            generator: GeneratorArch { depth: 2, base_width: 8 },
            discriminator: DiscriminatorArch {
                n_blocks: 2,
                base_width: 8,
                patch: false,
            },
            ..TrainConfig::default()
        };
        Ok(Demo {
            store: PairStore::from_images(&images)?,
            test: test.iter().map(|(img, _)| Pair::from_rgb(img)).collect::<Result<_>>()?,
            classifier: ColorPrototypeClassifier::fit(train, TOY_CLASSES, "toy")?,
            state: TrainState::init(&cfg)?,
            tasks,
            pool,
            cfg,
            grid: (0, 0, Vec::new()),
        })
    }

    /// One more meta-training epoch; returns the epoch's mean generator L1.
    pub fn train_epoch(&mut self) -> Result<f64> {
        let cfg = TrainConfig {
            n_epochs: self.state.epoch + 1,
            ..self.cfg.clone()
        };
        let mut l1 = Vec::new();
        self.state = train_metalgan(
            &self.store,
            &self.tasks.clusters,
            &self.pool,
            &cfg,
            Some(self.state.clone()),
            &mut |_, rows| {
                l1.extend(rows.iter().filter_map(|r| r.loss_g_l1));
                Ok(())
            },
        )?;
        Ok(l1.iter().sum::<f64>() / l1.len().max(1) as f64)
    }

    /// Colorize the held-out images, render the grid, return `[IS, L1]`.
    pub fn colorize(&mut self, adapt_steps: usize) -> Result<[f64; 2]> {
        let adaptation = Adaptation {
            tasks: &self.tasks,
            train: &self.store,
            discriminator: &self.state.discriminator,
            cfg: &self.cfg,
            steps: adapt_steps,
        };
        let mut colorizer = NetColorizer::new(&self.state.generator, Some(adaptation));
        let eval = evaluate(&mut colorizer, &self.test, &self.classifier, 1)?;
        let shown = &self.test[..SHOWN];
        let inputs: Vec<_> = shown.iter().map(|p| p.to_lab().lightness()).collect();
        let targets: Vec<_> = shown.iter().map(Pair::to_lab).collect();
        let outputs: Vec<_> = eval.outputs[..SHOWN].iter().map(rgb_to_lab).collect();
        let img = grid_image(&inputs, &targets, &outputs)?;
        let rgba = img.pixels().chunks(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect();
        self.grid = (img.width(), img.height(), rgba);
        Ok([eval.report.score.mean, eval.report.l1_error])
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> std::result::Result<Demo, JsError> {
        Demo::build(seed).map_err(js_err)
    }

    #[wasm_bindgen(js_name = trainEpoch)]
    pub fn train_epoch_js(&mut self) -> std::result::Result<f64, JsError> {
        self.train_epoch().map_err(js_err)
    }

    #[wasm_bindgen(js_name = colorize)]
    pub fn colorize_js(&mut self, adapt_steps: usize) -> std::result::Result<Vec<f64>, JsError> {
        self.colorize(adapt_steps).map(|s| s.to_vec()).map_err(js_err)
    }

    #[wasm_bindgen(getter)]
    pub fn epoch(&self) -> usize {
        self.state.epoch
    }

    #[wasm_bindgen(getter, js_name = gridWidth)]
    pub fn grid_width(&self) -> usize {
        self.grid.0
    }

    #[wasm_bindgen(getter, js_name = gridHeight)]
    pub fn grid_height(&self) -> usize {
        self.grid.1
    }

    /// RGBA bytes of the last rendered grid.
    #[wasm_bindgen(js_name = gridPixels)]
    pub fn grid_pixels(&self) -> Vec<u8> {
        self.grid.2.clone()
    }
}
