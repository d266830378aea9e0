use std::collections::BTreeMap;

use super::{adapt_to_task, TrainConfig};
use crate::colorlab::{denormalize_lightness, lightness_to_byte, ChromaPlanes, ImageRGB};
use crate::datapipe::{Pair, PairStore};
use crate::evalkit::Colorizer;
use crate::netcore::{DiscriminatorNet, GeneratorNet, Phase};
use crate::taskforge::TaskSet;
use crate::tensor::Tensor;
use crate::Result;

/// Grayscale rendering of a pair's lightness, as the backbone sees it.
fn gray_image(pair: &Pair) -> Result<ImageRGB> {
    let pixels = pair
        .l
        .iter()
        .flat_map(|&v| [lightness_to_byte(denormalize_lightness(v)); 3])
        .collect();
    ImageRGB::new(pair.id.clone(), pair.size, pair.size, pixels)
}

/// A pair for a grayscale input image, with zero chroma.
pub fn gray_pair(img: &ImageRGB) -> Result<Pair> {
    let mut pair = Pair::from_rgb(&img.to_gray())?;
    pair.ab.iter_mut().for_each(|v| *v = 0.0);
    Ok(pair)
}

/// Test-time task adaptation: resolve each input to its task and fine-tune
/// on that task's training images before colorizing.
pub struct Adaptation<'a> {
    pub tasks: &'a TaskSet,
    pub train: &'a PairStore,
    pub discriminator: &'a DiscriminatorNet,
    pub cfg: &'a TrainConfig,
    pub steps: usize,
}

/// Generator inference in evaluation mode, optionally with adaptation.
/// Adapted generators are cached per task.
pub struct NetColorizer<'a> {
    generator: &'a GeneratorNet,
    adaptation: Option<Adaptation<'a>>,
    cache: BTreeMap<usize, GeneratorNet>,
}

impl<'a> NetColorizer<'a> {
    pub fn new(generator: &'a GeneratorNet, adaptation: Option<Adaptation<'a>>) -> Self {
        NetColorizer {
            generator,
            adaptation: adaptation.filter(|a| a.steps > 0),
            cache: BTreeMap::new(),
        }
    }

    fn net_for(&mut self, pair: &Pair) -> Result<&GeneratorNet> {
        let Some(a) = &self.adaptation else {
            return Ok(self.generator);
        };
        let task = a.tasks.resolve(&gray_image(pair)?)?;
        if !self.cache.contains_key(&task.cluster_id) {
            let g = adapt_to_task(task, self.generator, a.discriminator, a.train, a.cfg, a.steps)?;
            self.cache.insert(task.cluster_id, g);
        }
        Ok(&self.cache[&task.cluster_id])
    }
}

impl Colorizer for NetColorizer<'_> {
    fn colorize(&mut self, pair: &Pair) -> Result<ChromaPlanes> {
        let l = Tensor::from_vec(1, 1, pair.size, pair.size, pair.l.clone())?;
        let ab = self.net_for(pair)?.forward(&l, Phase::Eval)?;
        Ok(ChromaPlanes {
            width: pair.size,
            height: pair.size,
            values: ab.data,
            normalized: true,
        })
    }
}
