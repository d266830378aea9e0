//! Synthetic toy corpus: eight scene classes, each pairing a luminance
//! texture with a two-tone palette, so that color is predictable from
//! structure once the class is known.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;

use super::save_png;
use crate::colorlab::{lab_pixel_to_rgb, ImageRGB};
use crate::rng::{indexed_substream, Rng};
use crate::{Error, Result};

pub const TOY_CLASSES: usize = 8;

/// Id of the `index`-th toy image; doubles as its file name.
pub fn toy_id(class: usize, index: usize) -> String {
    format!("c{class}_{index:04}.png")
}

/// Recover the class from a toy id (or a path ending in one).
pub fn class_of_id(id: &str) -> Option<usize> {
    let name = id.rsplit('/').next()?;
    let rest = name.strip_prefix('c')?;
    let (class, _) = rest.split_once('_')?;
    class.parse().ok().filter(|&c| c < TOY_CLASSES)
}

fn pattern(class: usize, size: usize, rng: &mut Rng) -> Vec<f64> {
    let s = size as f64;
    let phase = rng.gen_range(0.0..2.0 * PI);
    let freq = rng.gen_range(2.0..4.0);
    let mut v = vec![0.0; size * size];
    match class {
        0 | 1 | 4 => {
            for y in 0..size {
                for x in 0..size {
                    let t = match class {
                        0 => y as f64,
                        1 => x as f64,
                        _ => (x + y) as f64 / 2.0_f64.sqrt(),
                    };
                    v[y * size + x] = 0.5 + 0.5 * (2.0 * PI * freq * t / s + phase).sin();
                }
            }
        }
        2 => {
            let f = freq * 0.6;
            for y in 0..size {
                for x in 0..size {
                    let a = (2.0 * PI * f * x as f64 / s + phase).sin();
                    let b = (2.0 * PI * f * y as f64 / s + phase).sin();
                    v[y * size + x] = 0.5 + 0.5 * (4.0 * a * b).tanh();
                }
            }
        }
        3 => {
            let (cx, cy) = (rng.gen_range(0.3..0.7) * s, rng.gen_range(0.3..0.7) * s);
            let period = rng.gen_range(5.0..8.0) * s / 32.0;
            for y in 0..size {
                for x in 0..size {
                    let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                    v[y * size + x] = 0.5 + 0.5 * (2.0 * PI * r / period + phase).sin();
                }
            }
        }
        5 => {
            let blobs: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| (rng.gen_range(0.0..s), rng.gen_range(0.0..s), rng.gen_range(0.1..0.2) * s))
                .collect();
            for y in 0..size {
                for x in 0..size {
                    let t: f64 = blobs
                        .iter()
                        .map(|&(bx, by, r)| (-((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)) / (2.0 * r * r)).exp())
                        .sum();
                    v[y * size + x] = t.min(1.0);
                }
            }
        }
        6 => {
            let angle = rng.gen_range(0.0..2.0 * PI);
            let (dx, dy) = (angle.cos(), angle.sin());
            for y in 0..size {
                for x in 0..size {
                    let t = ((x as f64 / s - 0.5) * dx + (y as f64 / s - 0.5) * dy) * 2.0_f64.sqrt();
                    v[y * size + x] = (0.5 + t).clamp(0.0, 1.0);
                }
            }
        }
        _ => {
            let period = rng.gen_range(6.0..9.0) * s / 32.0;
            let radius = rng.gen_range(0.2..0.35) * period;
            let (ox, oy) = (rng.gen_range(0.0..period), rng.gen_range(0.0..period));
            for y in 0..size {
                for x in 0..size {
                    let px = (x as f64 + ox) % period - period / 2.0;
                    let py = (y as f64 + oy) % period - period / 2.0;
                    let d = (px * px + py * py).sqrt();
                    v[y * size + x] = (1.0 - (d - radius).clamp(0.0, 1.0)).clamp(0.0, 1.0);
                }
            }
        }
    }
    v
}

/// Render one toy image of `class`.
pub fn toy_image(class: usize, index: usize, size: usize, seed: u64) -> ImageRGB {
    let mut rng = indexed_substream(seed, "toy", index as u64);
    let v = pattern(class % TOY_CLASSES, size, &mut rng);
    let hue = (class as f64 * 45.0 + rng.gen_range(-12.0..12.0)).to_radians();
    let chroma = rng.gen_range(34.0..48.0);
    let fg = (chroma * hue.cos(), chroma * hue.sin());
    let bg_hue = hue + PI;
    let bg_chroma = rng.gen_range(8.0..18.0);
    let bg = (bg_chroma * bg_hue.cos(), bg_chroma * bg_hue.sin());
    let pixels = v
        .iter()
        .flat_map(|&t| {
            let t = (t + rng.gen_range(-0.04..0.04)).clamp(0.0, 1.0);
            let l = 22.0 + 62.0 * t;
            let a = bg.0 + (fg.0 - bg.0) * t;
            let b = bg.1 + (fg.1 - bg.1) * t;
            lab_pixel_to_rgb([l, a, b])
        })
        .collect();
    ImageRGB::new(toy_id(class % TOY_CLASSES, index), size, size, pixels).expect("toy size >= 8")
}

/// `count` images with classes assigned round-robin.
pub fn toy_corpus(count: usize, size: usize, seed: u64) -> Vec<(ImageRGB, usize)> {
    (0..count)
        .map(|i| {
            let class = i % TOY_CLASSES;
            (toy_image(class, i, size, seed), class)
        })
        .collect()
}

/// Write the corpus as PNG files into `dir`.
pub fn write_toy_corpus(dir: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<(ImageRGB, usize)>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let corpus = toy_corpus(count, size, seed);
    for (img, _) in &corpus {
        save_png(img, &dir.join(&img.id))?;
    }
    Ok(corpus)
}
