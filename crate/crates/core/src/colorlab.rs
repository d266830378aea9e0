//! sRGB ↔ CIE Lab (D65) conversion and the L/ab plane model used as network I/O.
//!
//! Raw Lab keeps `L ∈ [0, 100]` and `a, b ∈ [-128, 127]`. The network works on
//! the normalized form, where every plane is mapped affinely onto `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Smallest edge accepted for dataset images.
pub const MIN_EDGE: usize = 8;

const AB_MIN: f64 = -128.0;
const AB_MAX: f64 = 127.0;

// Linear sRGB → XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404548360214087, -1.5371388501025751, -0.498531546868481],
    [-0.9692663898756538, 1.876010928842491, 0.04155608234667355],
    [0.05564341960421367, -0.20402585426769818, 1.057225162457929],
];

const DELTA: f64 = 6.0 / 29.0;

/// An 8-bit RGB image, interleaved `[y][x][channel]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRGB {
    pub id: String,
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageRGB {
    pub fn new(id: impl Into<String>, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_EDGE || height < MIN_EDGE {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} is below the {MIN_EDGE}x{MIN_EDGE} minimum"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Length {
                expected: width * height * 3,
                actual: pixels.len(),
            });
        }
        Ok(ImageRGB {
            id: id.into(),
            width,
            height,
            pixels,
        })
    }

    /// Solid-color image, mostly useful in tests.
    pub fn filled(id: impl Into<String>, width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(id, width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// The image with chroma removed: Lab lightness replicated over RGB.
    pub fn to_gray(&self) -> ImageRGB {
        let lab = rgb_to_lab(self);
        let pixels = lab
            .l
            .iter()
            .flat_map(|&l| {
                let v = lightness_to_byte(l);
                [v, v, v]
            })
            .collect();
        ImageRGB {
            id: self.id.clone(),
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

/// Render a raw lightness value as an 8-bit gray level.
pub fn lightness_to_byte(l: f64) -> u8 {
    (l / 100.0 * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Lightness plane `L` of an image, `H×W` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightnessPlane {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub normalized: bool,
}

/// Chroma planes `a` then `b`, each `H×W` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChromaPlanes {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub normalized: bool,
}

/// An image split into lightness and chroma planes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageLab {
    pub width: usize,
    pub height: usize,
    pub l: Vec<f64>,
    pub ab: Vec<f64>,
    pub normalized: bool,
}

impl ImageLab {
    pub fn lightness(&self) -> LightnessPlane {
        LightnessPlane {
            width: self.width,
            height: self.height,
            values: self.l.clone(),
            normalized: self.normalized,
        }
    }

    pub fn chroma(&self) -> ChromaPlanes {
        ChromaPlanes {
            width: self.width,
            height: self.height,
            values: self.ab.clone(),
            normalized: self.normalized,
        }
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    if f > DELTA {
        f * f * f
    } else {
        3.0 * DELTA * DELTA * (f - 4.0 / 29.0)
    }
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

// Reference white = image of linear RGB (1, 1, 1), computed with the same
// arithmetic as every pixel so white maps to L = 100, a = b = 0 exactly.
fn white() -> [f64; 3] {
    mat_vec(&RGB_TO_XYZ, [1.0, 1.0, 1.0])
}

/// Convert one sRGB triple to raw `(L, a, b)`.
pub fn rgb_pixel_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_to_linear(f64::from(c) / 255.0));
    let xyz = mat_vec(&RGB_TO_XYZ, lin);
    let wp = white();
    let fx = lab_f(xyz[0] / wp[0]);
    let fy = lab_f(xyz[1] / wp[1]);
    let fz = lab_f(xyz[2] / wp[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Convert raw `(L, a, b)` to sRGB, clipping out-of-gamut channels.
pub fn lab_pixel_to_rgb(lab: [f64; 3]) -> [u8; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let wp = white();
    let xyz = [wp[0] * lab_f_inv(fx), wp[1] * lab_f_inv(fy), wp[2] * lab_f_inv(fz)];
    mat_vec(&XYZ_TO_RGB, xyz)
        .map(|c| (linear_to_srgb(c.clamp(0.0, 1.0)) * 255.0).round().clamp(0.0, 255.0) as u8)
}

pub fn rgb_to_lab(img: &ImageRGB) -> ImageLab {
    let n = img.width * img.height;
    let mut l = Vec::with_capacity(n);
    let mut ab = vec![0.0; 2 * n];
    for (i, px) in img.pixels.chunks_exact(3).enumerate() {
        let [lv, a, b] = rgb_pixel_to_lab([px[0], px[1], px[2]]);
        l.push(lv);
        ab[i] = a;
        ab[n + i] = b;
    }
    ImageLab {
        width: img.width,
        height: img.height,
        l,
        ab,
        normalized: false,
    }
}

pub fn lab_to_rgb(img: &ImageLab, id: impl Into<String>) -> Result<ImageRGB> {
    if img.normalized {
        return Err(Error::AlreadyNormalized);
    }
    let n = img.width * img.height;
    let pixels = (0..n)
        .flat_map(|i| lab_pixel_to_rgb([img.l[i], img.ab[i], img.ab[n + i]]))
        .collect();
    ImageRGB::new(id, img.width, img.height, pixels)
}

pub fn normalize_lightness(l: f64) -> f64 {
    l / 50.0 - 1.0
}

pub fn denormalize_lightness(l: f64) -> f64 {
    (l + 1.0) * 50.0
}

pub fn normalize_chroma(v: f64) -> f64 {
    (v - AB_MIN) / (AB_MAX - AB_MIN) * 2.0 - 1.0
}

pub fn denormalize_chroma(v: f64) -> f64 {
    (v + 1.0) / 2.0 * (AB_MAX - AB_MIN) + AB_MIN
}

pub fn normalize(img: &ImageLab) -> Result<ImageLab> {
    if img.normalized {
        return Err(Error::AlreadyNormalized);
    }
    Ok(ImageLab {
        width: img.width,
        height: img.height,
        l: img.l.iter().map(|&v| normalize_lightness(v)).collect(),
        ab: img.ab.iter().map(|&v| normalize_chroma(v)).collect(),
        normalized: true,
    })
}

pub fn denormalize(img: &ImageLab) -> Result<ImageLab> {
    if !img.normalized {
        return Err(Error::NotNormalized);
    }
    Ok(ImageLab {
        width: img.width,
        height: img.height,
        l: img.l.iter().map(|&v| denormalize_lightness(v)).collect(),
        ab: img.ab.iter().map(|&v| denormalize_chroma(v)).collect(),
        normalized: false,
    })
}

/// Join an input lightness plane with generated chroma. L passes through untouched.
pub fn compose_output(l: &LightnessPlane, ab: &ChromaPlanes) -> Result<ImageLab> {
    if l.width != ab.width || l.height != ab.height {
        return Err(Error::Shape(format!(
            "lightness {}x{} vs chroma {}x{}",
            l.width, l.height, ab.width, ab.height
        )));
    }
    let n = l.width * l.height;
    if l.values.len() != n || ab.values.len() != 2 * n {
        return Err(Error::Shape("plane buffers do not match their dimensions".into()));
    }
    if !l.normalized || !ab.normalized {
        return Err(Error::NotNormalized);
    }
    Ok(ImageLab {
        width: l.width,
        height: l.height,
        l: l.values.clone(),
        ab: ab.values.clone(),
        normalized: true,
    })
}
