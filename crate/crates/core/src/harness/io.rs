//! Image file conversion and resizing.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::types::{BinaryMask, RasterImage, SoftMask};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

pub fn to_rgb8(image: &RasterImage) -> RgbImage {
    let bytes = image.data().iter().map(|v| (v * 255.0).round() as u8).collect();
    RgbImage::from_raw(image.width() as u32, image.height() as u32, bytes).expect("buffer matches dims")
}

pub fn from_rgb8(img: &RgbImage) -> Result<RasterImage> {
    let data = img.as_raw().iter().map(|b| f64::from(*b) / 255.0).collect();
    RasterImage::new(img.height() as usize, img.width() as usize, data)
}

pub fn load_image(path: &Path) -> Result<RasterImage> {
    let img = image::open(path).map_err(|e| io_err(path, e))?;
    from_rgb8(&img.to_rgb8())
}

/// Loads a ground-truth mask, thresholding 8-bit gray at 128. If `dims`
/// differs from the file, the mask is resized by nearest neighbour and the
/// second value is `true`.
pub fn load_gt(path: &Path, dims: Option<(usize, usize)>) -> Result<(BinaryMask, bool)> {
    let gray = image::open(path).map_err(|e| io_err(path, e))?.to_luma8();
    let binary: GrayImage = ImageBuffer::from_fn(gray.width(), gray.height(), |x, y| {
        Luma([if gray.get_pixel(x, y)[0] >= 128 { 255 } else { 0 }])
    });
    let (resized, img) = match dims {
        Some((h, w)) if (h as u32, w as u32) != (binary.height(), binary.width()) => {
            (true, imageops::resize(&binary, w as u32, h as u32, FilterType::Nearest))
        }
        _ => (false, binary),
    };
    let values = img.as_raw().iter().map(|b| u8::from(*b >= 128)).collect();
    Ok((
        BinaryMask::new(img.height() as usize, img.width() as usize, values)?,
        resized,
    ))
}

pub fn mask_to_gray8(mask: &SoftMask) -> GrayImage {
    let bytes = mask.values().iter().map(|v| (v * 255.0).round() as u8).collect();
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes).expect("buffer matches dims")
}

pub fn save_mask(mask: &SoftMask, path: &Path) -> Result<()> {
    mask_to_gray8(mask).save(path).map_err(|e| io_err(path, e))
}

pub fn load_mask(path: &Path) -> Result<SoftMask> {
    let gray = image::open(path).map_err(|e| io_err(path, e))?.to_luma8();
    let values = gray.as_raw().iter().map(|b| f64::from(*b) / 255.0).collect();
    SoftMask::new(gray.height() as usize, gray.width() as usize, values)
}

pub fn save_image(image: &RasterImage, path: &Path) -> Result<()> {
    to_rgb8(image).save(path).map_err(|e| io_err(path, e))
}

/// The image with the mask blended in red at half opacity.
pub fn overlay(image: &RasterImage, mask: &SoftMask) -> Result<RgbImage> {
    if image.dims() != mask.dims() {
        return Err(Error::ShapeMismatch {
            expected: image.dims(),
            actual: mask.dims(),
        });
    }
    let (h, w) = image.dims();
    Ok(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let px = image.pixel(x as usize, y as usize);
        let a = 0.5 * mask.get(x as usize, y as usize);
        let tint = [1.0, 0.0, 0.0];
        Rgb(std::array::from_fn(|c| {
            ((px[c] * (1.0 - a) + tint[c] * a) * 255.0).round() as u8
        }))
    }))
}

/// Downscales so the longer side is at most `max_side`; smaller images are
/// returned unchanged.
pub fn limit_size(image: &RasterImage, max_side: usize) -> RasterImage {
    let (h, w) = image.dims();
    let longest = h.max(w);
    if longest <= max_side {
        return image.clone();
    }
    let scale = max_side as f64 / longest as f64;
    let nw = ((w as f64 * scale).round() as u32).max(1);
    let nh = ((h as f64 * scale).round() as u32).max(1);
    let buf: ImageBuffer<Rgb<f32>, Vec<f32>> =
        ImageBuffer::from_raw(w as u32, h as u32, image.data().iter().map(|v| *v as f32).collect())
            .expect("buffer matches dims");
    let small = imageops::resize(&buf, nw, nh, FilterType::Triangle);
    let data = small.as_raw().iter().map(|v| f64::from(*v).clamp(0.0, 1.0)).collect();
    RasterImage::new(nh as usize, nw as usize, data).expect("resized dims are positive")
}

/// Bilinear resize of a soft mask to `(height, width)`.
pub fn resize_mask(mask: &SoftMask, height: usize, width: usize) -> Result<SoftMask> {
    if mask.dims() == (height, width) {
        return Ok(mask.clone());
    }
    let buf: ImageBuffer<Luma<f32>, Vec<f32>> = ImageBuffer::from_raw(
        mask.width() as u32,
        mask.height() as u32,
        mask.values().iter().map(|v| *v as f32).collect(),
    )
    .expect("buffer matches dims");
    let out = imageops::resize(&buf, width as u32, height as u32, FilterType::Triangle);
    SoftMask::new(
        height,
        width,
        out.as_raw().iter().map(|v| f64::from(*v).clamp(0.0, 1.0)).collect(),
    )
}
