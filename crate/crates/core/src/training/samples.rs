//! Sample grids: per-class tiles and the 12-class contact sheet.

use std::path::{Path, PathBuf};

use image::{ImageEncoder, RgbImage};

use super::checkpoint::ModelBundle;
use crate::color::ColorClass;
use crate::dataset::to_image;
use crate::error::Result;
use crate::models::{sample_latent, GeneratorNet};

/// Classes per contact-sheet row.
pub const SHEET_COLUMNS: u32 = 4;
pub const SHEET_GUTTER: u32 = 4;

/// splitmix64 finalizer over the pair, so nearby inputs give unrelated seeds.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `n` inference-mode samples of one class from latents seeded by `seed`.
pub fn sample_class(generator: &GeneratorNet, class: ColorClass, n: usize, seed: u64) -> Result<Vec<RgbImage>> {
    let z = sample_latent(n, generator.arch.z_dim, seed)?;
    let out = generator.generate(&z, &vec![class; n])?;
    Ok(out.outer_iter().map(|img| to_image(img, true)).collect())
}

/// Tiles equally sized images row-major into `ceil(sqrt(n))` columns.
pub fn tile_grid(images: &[RgbImage]) -> RgbImage {
    let Some(first) = images.first() else {
        return RgbImage::new(0, 0);
    };
    let (w, h) = first.dimensions();
    let cols = (images.len() as f64).sqrt().ceil() as u32;
    let rows = (images.len() as u32).div_ceil(cols);
    let mut grid = RgbImage::new(cols * w, rows * h);
    for (i, img) in images.iter().enumerate() {
        let i = i as u32;
        image::imageops::replace(&mut grid, img, ((i % cols) * w) as i64, ((i / cols) * h) as i64);
    }
    grid
}

pub fn encode_png(image: &RgbImage) -> Vec<u8> {
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf)
        .write_image(image.as_raw(), image.width(), image.height(), image::ExtendedColorType::Rgb8)
        .expect("in-memory PNG encoding");
    buf
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrids {
    pub epoch: u64,
    /// One grid per class in class-code order.
    pub grids: Vec<(ColorClass, RgbImage)>,
    /// The class grids in a 4x3 layout separated by white gutters.
    pub sheet: RgbImage,
}

/// Samples every class with a seed derived from `(epoch, seed)`; the same
/// bundle, epoch and seed always give the same pixels.
pub fn snapshot_samples(bundle: &ModelBundle, epoch: u64, n_per_class: usize, seed: u64) -> Result<SampleGrids> {
    let epoch_seed = derive_seed(seed, epoch);
    let mut grids = Vec::with_capacity(ColorClass::COUNT);
    for class in ColorClass::ALL {
        let images = sample_class(&bundle.generator, class, n_per_class, derive_seed(epoch_seed, class.code() as u64))?;
        grids.push((class, tile_grid(&images)));
    }
    let (gw, gh) = grids[0].1.dimensions();
    let rows = (ColorClass::COUNT as u32).div_ceil(SHEET_COLUMNS);
    let mut sheet = RgbImage::from_pixel(
        SHEET_COLUMNS * gw + (SHEET_COLUMNS - 1) * SHEET_GUTTER,
        rows * gh + (rows - 1) * SHEET_GUTTER,
        image::Rgb([255, 255, 255]),
    );
    for (i, (_, g)) in grids.iter().enumerate() {
        let i = i as u32;
        let x = (i % SHEET_COLUMNS) * (gw + SHEET_GUTTER);
        let y = (i / SHEET_COLUMNS) * (gh + SHEET_GUTTER);
        image::imageops::replace(&mut sheet, g, x as i64, y as i64);
    }
    Ok(SampleGrids { epoch, grids, sheet })
}

/// Writes `epoch_<e>_<class>.png` per class and `epoch_<e>_sheet.png`.
pub fn write_samples(samples: &SampleGrids, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let e = samples.epoch;
    for (class, grid) in &samples.grids {
        let p = dir.join(format!("epoch_{e:04}_{class}.png"));
        std::fs::write(&p, encode_png(grid))?;
        written.push(p);
    }
    let p = dir.join(format!("epoch_{e:04}_sheet.png"));
    std::fs::write(&p, encode_png(&samples.sheet))?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::TrainConfig;

    fn bundle() -> ModelBundle {
        ModelBundle::new(TrainConfig {
            z_dim: 4,
            g_channels: vec![4, 3, 2],
            d_channels: vec![2],
            q_channels: vec![2],
            ..TrainConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn grid_dimensions() {
        let b = bundle();
        let s = snapshot_samples(&b, 0, 64, 1).unwrap();
        assert_eq!(s.grids.len(), 12);
        assert!(s.grids.iter().all(|(_, g)| g.dimensions() == (256, 256)));
        assert_eq!(s.sheet.dimensions(), (4 * 256 + 12, 3 * 256 + 8));
        let one = snapshot_samples(&b, 0, 1, 1).unwrap();
        assert!(one.grids.iter().all(|(_, g)| g.dimensions() == (32, 32)));
    }

    #[test]
    fn fixed_seed_gives_identical_png_bytes() {
        let b = bundle();
        let a = snapshot_samples(&b, 3, 4, 9).unwrap();
        let c = snapshot_samples(&b, 3, 4, 9).unwrap();
        assert_eq!(encode_png(&a.sheet), encode_png(&c.sheet));
        assert_ne!(a, snapshot_samples(&b, 4, 4, 9).unwrap());
    }

    #[test]
    fn tiling_layout() {
        let imgs: Vec<RgbImage> = (0..5).map(|i| RgbImage::from_pixel(2, 2, image::Rgb([i * 10, 0, 0]))).collect();
        let g = tile_grid(&imgs);
        assert_eq!(g.dimensions(), (6, 4));
        assert_eq!(g.get_pixel(4, 0).0, [20, 0, 0]);
        assert_eq!(g.get_pixel(2, 3).0, [40, 0, 0]);
        assert_eq!(g.get_pixel(5, 3).0, [0, 0, 0]);
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
        assert_ne!(derive_seed(0, 1), derive_seed(1, 0));
    }
}
