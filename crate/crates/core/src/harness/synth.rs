//! Synthetic leaf-and-caterpillar images for smoke runs with the scene mocks.

use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::io::save_image;
use crate::backends::scene::{CATERPILLAR_RGB, LEAF_RGB};
use crate::error::{Error, Result};
use crate::types::{BinaryMask, RasterImage};

#[derive(Clone, Debug)]
pub struct SynthSample {
    pub stem: String,
    pub image: RasterImage,
    pub gt: BinaryMask,
    pub class: String,
}

/// One image: shaded leaf background with an elliptical caterpillar.
/// Shading only scales brightness, so colour direction stays exact.
pub fn sample(index: usize, size: usize, seed: u64) -> Result<SynthSample> {
    if size < 8 {
        return Err(Error::InvalidInput("synthetic images need size >= 8".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let s = size as f64;
    let rx = rng.random_range(0.08..0.2) * s;
    let ry = rng.random_range(0.05..0.12) * s;
    let cx = rng.random_range(rx + 1.0..s - rx - 1.0);
    let cy = rng.random_range(ry + 1.0..s - ry - 1.0);
    let tilt = rng.random_range(0.0..0.3);
    let inside = |x: usize, y: usize| {
        let dx = (x as f64 + 0.5 - cx) / rx;
        let dy = (y as f64 + 0.5 - cy) / ry;
        dx * dx + dy * dy < 1.0
    };
    let shade: Vec<f64> = (0..size * size).map(|_| rng.random_range(0.92..1.0)).collect();
    let image = RasterImage::from_fn(size, size, |x, y| {
        let gradient = 0.75 + tilt * (x + y) as f64 / (2.0 * s);
        let k = gradient * shade[y * size + x];
        let base = if inside(x, y) { CATERPILLAR_RGB } else { LEAF_RGB };
        base.map(|c| (c * k).clamp(0.0, 1.0))
    })?;
    let gt = BinaryMask::from_fn(size, size, inside)?;
    Ok(SynthSample {
        stem: format!("synth_{index:03}"),
        image,
        gt,
        class: "caterpillar".into(),
    })
}

pub fn generate(count: usize, size: usize, seed: u64) -> Result<Vec<SynthSample>> {
    (0..count).map(|i| sample(i, size, seed)).collect()
}

/// Writes `images/`, `masks/` and `classes.txt` under `root`.
pub fn write_dataset(root: &Path, samples: &[SynthSample]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidInput(format!("{}: {e}", root.display()));
    fs::create_dir_all(root.join("images")).map_err(io)?;
    fs::create_dir_all(root.join("masks")).map_err(io)?;
    let mut classes = String::new();
    for s in samples {
        save_image(&s.image, &root.join("images").join(format!("{}.png", s.stem)))?;
        let (h, w) = s.gt.dims();
        let gray = GrayImage::from_fn(w as u32, h as u32, |x, y| {
            Luma([if s.gt.get(x as usize, y as usize) { 255 } else { 0 }])
        });
        let path = root.join("masks").join(format!("{}.png", s.stem));
        gray.save(&path)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        classes += &format!("{} = {}\n", s.stem, s.class);
    }
    fs::write(root.join("classes.txt"), classes).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{chroma_fraction, chromaticity};

    #[test]
    fn deterministic_and_non_trivial() {
        let a = generate(3, 48, 7).unwrap();
        let b = generate(3, 48, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.gt, y.gt);
            assert!(x.gt.count() > 10 && x.gt.count() < 48 * 48 / 2);
        }
        assert_ne!(a[0].gt, a[1].gt);
    }

    #[test]
    fn object_color_is_recognisable() {
        let s = sample(0, 64, 1).unwrap();
        let frac = chroma_fraction(&s.image, CATERPILLAR_RGB, 0.05);
        let expected = s.gt.count() as f64 / (64.0 * 64.0);
        assert!((frac - expected).abs() < 1e-9);
        assert!(chromaticity(s.image.pixel(0, 0)).is_some());
    }
}
