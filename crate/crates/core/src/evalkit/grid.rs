use std::path::Path;

use crate::colorlab::{denormalize, denormalize_lightness, lab_to_rgb, lightness_to_byte, ImageLab, ImageRGB, LightnessPlane};
use crate::datapipe::save_png;
use crate::{Error, Result};

/// Blank pixels between tiles.
pub const GUTTER: usize = 2;
const GUTTER_VALUE: u8 = 255;

fn gray_tile(l: &LightnessPlane) -> Result<ImageRGB> {
    let pixels = l
        .values
        .iter()
        .flat_map(|&v| {
            let raw = if l.normalized { denormalize_lightness(v) } else { v };
            [lightness_to_byte(raw); 3]
        })
        .collect();
    ImageRGB::new("gray", l.width, l.height, pixels)
}

fn color_tile(lab: &ImageLab) -> Result<ImageRGB> {
    if lab.normalized {
        lab_to_rgb(&denormalize(lab)?, "tile")
    } else {
        lab_to_rgb(lab, "tile")
    }
}

/// One row per triplet: grayscale input, ground truth, output.
pub fn grid_image(inputs: &[LightnessPlane], targets: &[ImageLab], outputs: &[ImageLab]) -> Result<ImageRGB> {
    if inputs.len() != targets.len() || inputs.len() != outputs.len() {
        return Err(Error::Shape(format!(
            "{} inputs, {} targets, {} outputs",
            inputs.len(),
            targets.len(),
            outputs.len()
        )));
    }
    let first = inputs.first().ok_or_else(|| Error::Shape("no triplets".into()))?;
    let (w, h) = (first.width, first.height);
    let width = 3 * w + 2 * GUTTER;
    let height = inputs.len() * h + (inputs.len() - 1) * GUTTER;
    let mut pixels = vec![GUTTER_VALUE; width * height * 3];
    for (row, ((l, t), o)) in inputs.iter().zip(targets).zip(outputs).enumerate() {
        let tiles = [gray_tile(l)?, color_tile(t)?, color_tile(o)?];
        for (col, tile) in tiles.iter().enumerate() {
            if tile.width() != w || tile.height() != h {
                return Err(Error::Shape(format!(
                    "tile {}x{} in a {w}x{h} grid",
                    tile.width(),
                    tile.height()
                )));
            }
            let (x0, y0) = (col * (w + GUTTER), row * (h + GUTTER));
            for y in 0..h {
                let dst = ((y0 + y) * width + x0) * 3;
                pixels[dst..dst + 3 * w].copy_from_slice(&tile.pixels()[y * w * 3..(y + 1) * w * 3]);
            }
        }
    }
    ImageRGB::new("grid", width, height, pixels)
}

pub fn sample_grid(inputs: &[LightnessPlane], targets: &[ImageLab], outputs: &[ImageLab], path: &Path) -> Result<()> {
    save_png(&grid_image(inputs, targets, outputs)?, path)
}
