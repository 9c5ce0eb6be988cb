//! Dominant-color labeling: k-means palette extraction, nearest X11 name,
//! and grouping of X11 names into twelve color classes.

mod kmeans;
mod x11;

use std::fmt;
use std::str::FromStr;

use image::{DynamicImage, RgbImage, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kmeans::{kmeans_palette, kmeans_pixels, KMeansMode, KMeansParams};
pub use x11::{canonical_shade, nearest_x11_name, x11_table, x11_to_class, X11Entry};

/// Side length of the square icons handled throughout the crate.
pub const ICON_SIZE: u32 = 32;
pub const ICON_PIXELS: usize = (ICON_SIZE * ICON_SIZE) as usize;
/// Palette size used for labeling.
pub const LABEL_K: usize = 3;
pub const LABEL_SEED: u64 = 0;
pub const LABEL_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb { r, g, b }
    }

    pub fn dist2(&self, other: &Rgb) -> u32 {
        let d = |a: u8, b: u8| (a as i32 - b as i32).pow(2) as u32;
        d(self.r, other.r) + d(self.g, other.g) + d(self.b, other.b)
    }

    pub fn hex(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.r, self.g, self.b)
    }

    pub fn from_hex(s: &str) -> Option<Rgb> {
        let s = s.strip_prefix('#')?;
        if s.len() != 6 {
            return None;
        }
        let p = |i: usize| u8::from_str_radix(&s[i..i + 2], 16).ok();
        Some(Rgb::new(p(0)?, p(2)?, p(4)?))
    }
}

impl From<image::Rgb<u8>> for Rgb {
    fn from(p: image::Rgb<u8>) -> Self {
        Rgb::new(p[0], p[1], p[2])
    }
}

impl From<Rgb> for image::Rgb<u8> {
    fn from(c: Rgb) -> Self {
        image::Rgb([c.r, c.g, c.b])
    }
}

/// The twelve label classes. Discriminants are the stable integer codes
/// (alphabetical order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorClass {
    Black = 0,
    Blue,
    Brown,
    Cyan,
    Gray,
    Green,
    Orange,
    Pink,
    Purple,
    Red,
    White,
    Yellow,
}

impl ColorClass {
    pub const COUNT: usize = 12;

    pub const ALL: [ColorClass; 12] = [
        ColorClass::Black,
        ColorClass::Blue,
        ColorClass::Brown,
        ColorClass::Cyan,
        ColorClass::Gray,
        ColorClass::Green,
        ColorClass::Orange,
        ColorClass::Pink,
        ColorClass::Purple,
        ColorClass::Red,
        ColorClass::White,
        ColorClass::Yellow,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<ColorClass> {
        ColorClass::ALL.get(code).copied().ok_or(Error::InvalidClassCode(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorClass::Black => "black",
            ColorClass::Blue => "blue",
            ColorClass::Brown => "brown",
            ColorClass::Cyan => "cyan",
            ColorClass::Gray => "gray",
            ColorClass::Green => "green",
            ColorClass::Orange => "orange",
            ColorClass::Pink => "pink",
            ColorClass::Purple => "purple",
            ColorClass::Red => "red",
            ColorClass::White => "white",
            ColorClass::Yellow => "yellow",
        }
    }

    pub fn names() -> Vec<&'static str> {
        ColorClass::ALL.iter().map(|c| c.name()).collect()
    }
}

impl fmt::Display for ColorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ColorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        ColorClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == lower)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub centroid: Rgb,
    pub count: usize,
}

/// k centroids with their pixel counts, largest cluster first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    pub entries: Vec<PaletteEntry>,
}

impl Palette {
    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorLabel {
    pub primary: ColorClass,
    pub top3: [ColorClass; 3],
    pub palette: Palette,
}

/// Composites an RGBA icon over opaque white.
pub fn alpha_flatten(image: &RgbaImage) -> Result<RgbImage> {
    check_icon_size(image.width(), image.height(), None)?;
    Ok(flatten_any(image))
}

fn flatten_any(image: &RgbaImage) -> RgbImage {
    RgbImage::from_fn(image.width(), image.height(), |x, y| {
        let p = image.get_pixel(x, y);
        let a = p[3] as f64 / 255.0;
        let mix = |c: u8| (a * c as f64 + (1.0 - a) * 255.0).round().clamp(0.0, 255.0) as u8;
        image::Rgb([mix(p[0]), mix(p[1]), mix(p[2])])
    })
}

pub(crate) fn check_icon_size(width: u32, height: u32, id: Option<&str>) -> Result<()> {
    if width != ICON_SIZE || height != ICON_SIZE {
        return Err(Error::ImageSize {
            id: id.map(str::to_string),
            width,
            height,
            expected_w: ICON_SIZE,
            expected_h: ICON_SIZE,
        });
    }
    Ok(())
}

/// Labels an RGB icon by its dominant palette colors.
pub fn label_rgb(image: &RgbImage) -> Result<ColorLabel> {
    check_icon_size(image.width(), image.height(), None)?;
    let palette = kmeans_palette(image, LABEL_K, LABEL_SEED, LABEL_MAX_ITERS)?;
    label_from_palette(palette)
}

/// Labels an RGB or RGBA icon; transparency is flattened over white first.
pub fn label_image(image: &DynamicImage) -> Result<ColorLabel> {
    check_icon_size(image.width(), image.height(), None)?;
    let rgb = if image.color().has_alpha() {
        flatten_any(&image.to_rgba8())
    } else {
        image.to_rgb8()
    };
    label_rgb(&rgb)
}

pub fn label_from_palette(palette: Palette) -> Result<ColorLabel> {
    let mut classes = Vec::with_capacity(palette.entries.len());
    for e in &palette.entries {
        classes.push(x11_to_class(nearest_x11_name(e.centroid))?);
    }
    let first = *classes.first().ok_or_else(|| Error::InvalidArgument("empty palette".into()))?;
    let top3 = [
        first,
        classes.get(1).copied().unwrap_or(first),
        classes.get(2).copied().unwrap_or(first),
    ];
    Ok(ColorLabel { primary: first, top3, palette })
}
