//! Multi-scale partitioning of the working image and the local/global
//! coordinate mapping for patch-level answers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BoundingBox, PatchStrategy, RasterImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleTag {
    Whole,
    HalfTop,
    HalfBottom,
    HalfLeft,
    HalfRight,
    QuarterTl,
    QuarterTr,
    QuarterBl,
    QuarterBr,
}

impl ScaleTag {
    pub fn is_whole(&self) -> bool {
        matches!(self, ScaleTag::Whole)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub id: usize,
    pub crop: BoundingBox,
    pub scale: ScaleTag,
}

#[derive(Clone, Debug)]
pub struct Patch {
    pub spec: PatchSpec,
    pub image: RasterImage,
}

#[derive(Clone, Debug)]
pub struct Partition {
    pub patches: Vec<Patch>,
    /// Set when the image was too small to split and only the whole
    /// image was returned.
    pub fell_back: bool,
}

fn halves(width: usize, height: usize) -> [(ScaleTag, [usize; 4]); 4] {
    let ch = height.div_ceil(2);
    let cw = width.div_ceil(2);
    [
        (ScaleTag::HalfTop, [0, 0, width, ch]),
        (ScaleTag::HalfBottom, [0, ch, width, height]),
        (ScaleTag::HalfLeft, [0, 0, cw, height]),
        (ScaleTag::HalfRight, [cw, 0, width, height]),
    ]
}

fn quarters(width: usize, height: usize) -> [(ScaleTag, [usize; 4]); 4] {
    let ch = height.div_ceil(2);
    let cw = width.div_ceil(2);
    [
        (ScaleTag::QuarterTl, [0, 0, cw, ch]),
        (ScaleTag::QuarterTr, [cw, 0, width, ch]),
        (ScaleTag::QuarterBl, [0, ch, cw, height]),
        (ScaleTag::QuarterBr, [cw, ch, width, height]),
    ]
}

/// Crop rectangles for a strategy, in the fixed order whole, halves
/// (top, bottom, left, right), quarters (row-major). Odd dimensions give
/// the extra row/column to the top/left piece.
pub fn crops(width: usize, height: usize, strategy: PatchStrategy) -> Result<(Vec<PatchSpec>, bool)> {
    let whole = (ScaleTag::Whole, [0, 0, width, height]);
    let splittable = width >= 2 && height >= 2;
    let (with_whole, with_halves, with_quarters) = match strategy {
        PatchStrategy::Original => (true, false, false),
        PatchStrategy::Halve => (false, true, false),
        PatchStrategy::Quarters => (false, false, true),
        PatchStrategy::OriginalHalve => (true, true, false),
        PatchStrategy::OriginalHalveQuarters => (true, true, true),
    };
    let needs_split = with_halves || with_quarters;
    let mut rects = Vec::new();
    let fell_back = needs_split && !splittable;
    if fell_back {
        log::warn!("{width}x{height} image too small to split; using the whole image only");
        rects.push(whole);
    } else {
        if with_whole {
            rects.push(whole);
        }
        if with_halves {
            rects.extend(halves(width, height));
        }
        if with_quarters {
            rects.extend(quarters(width, height));
        }
    }
    let specs = rects
        .into_iter()
        .enumerate()
        .map(|(id, (scale, [x0, y0, x1, y1]))| {
            Ok(PatchSpec {
                id,
                crop: BoundingBox::within(x0, y0, x1, y1, width, height)?,
                scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((specs, fell_back))
}

pub fn partition(image: &RasterImage, strategy: PatchStrategy) -> Result<Partition> {
    let (specs, fell_back) = crops(image.width(), image.height(), strategy)?;
    let patches = specs
        .into_iter()
        .map(|spec| {
            Ok(Patch {
                image: image.crop(&spec.crop)?,
                spec,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition { patches, fell_back })
}

/// Full-size copy of `image` with everything outside the patch crop set
/// to black.
pub fn reintegrate(spec: &PatchSpec, image: &RasterImage) -> Result<RasterImage> {
    spec.crop.check_within(image.width(), image.height())?;
    let mut data = vec![0.0; image.data().len()];
    let w = image.width();
    for y in spec.crop.y_min()..spec.crop.y_max() {
        let start = (y * w + spec.crop.x_min()) * 3;
        let end = (y * w + spec.crop.x_max()) * 3;
        data[start..end].copy_from_slice(&image.data()[start..end]);
    }
    Ok(RasterImage::from_raw(image.height(), image.width(), data))
}

/// Maps raw patch-local coordinates `[x0, y0, x1, y1]` into the global
/// frame. Coordinates are clamped to the patch edges first; a box with no
/// area after clamping is rejected.
pub fn to_global(spec: &PatchSpec, local: [i64; 4]) -> Result<BoundingBox> {
    let pw = spec.crop.width() as i64;
    let ph = spec.crop.height() as i64;
    let [x0, y0, x1, y1] = local;
    let cx0 = x0.min(x1).clamp(0, pw) as usize;
    let cx1 = x0.max(x1).clamp(0, pw) as usize;
    let cy0 = y0.min(y1).clamp(0, ph) as usize;
    let cy1 = y0.max(y1).clamp(0, ph) as usize;
    if cx0 >= cx1 || cy0 >= cy1 {
        return Err(Error::InvalidBox(format!(
            "local box {local:?} is degenerate inside a {pw}x{ph} patch"
        )));
    }
    BoundingBox::new(
        cx0 + spec.crop.x_min(),
        cy0 + spec.crop.y_min(),
        cx1 + spec.crop.x_min(),
        cy1 + spec.crop.y_min(),
    )
}

/// Inverse of [`to_global`] for boxes fully inside the patch.
pub fn to_local(spec: &PatchSpec, global: &BoundingBox) -> Result<[i64; 4]> {
    if !spec.crop.contains_box(global) {
        return Err(Error::InvalidBox(format!(
            "{global} is not inside patch crop {}",
            spec.crop
        )));
    }
    Ok([
        (global.x_min() - spec.crop.x_min()) as i64,
        (global.y_min() - spec.crop.y_min()) as i64,
        (global.x_max() - spec.crop.x_min()) as i64,
        (global.y_max() - spec.crop.y_min()) as i64,
    ])
}
