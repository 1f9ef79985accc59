//! Pixel grids, boxes and the records passed between pipeline stages.
//!
//! Every constructor validates its invariants, so a value of any of these
//! types can be used without re-checking. Pixel values are reals in `[0, 1]`;
//! conversion to and from 8-bit happens only at file I/O.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::patching::ScaleTag;

fn check_unit(v: f64) -> bool {
    v.is_finite() && (0.0..=1.0).contains(&v)
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidInput(format!(
            "image dimensions must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

/// An RGB image with channel values in `[0, 1]`, stored row-major with
/// interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(Error::InvalidInput(format!(
                "expected {} values for a {height}x{width} RGB image, got {}",
                height * width * 3,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !check_unit(**v)) {
            return Err(Error::InvalidInput(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    /// Builds an image from a per-pixel closure called with `(x, y)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(height, width, data)
    }

    /// Caller guarantees the invariants (used by pixel-preserving transforms).
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * 3);
        debug_assert!(data.iter().all(|v| check_unit(*v)));
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Copies the region covered by `bbox`. The box must lie inside the image.
    pub fn crop(&self, bbox: &BoundingBox) -> Result<RasterImage> {
        bbox.check_within(self.width, self.height)?;
        let (w, h) = (bbox.width(), bbox.height());
        let mut data = Vec::with_capacity(w * h * 3);
        for y in bbox.y_min()..bbox.y_max() {
            let start = (y * self.width + bbox.x_min()) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(RasterImage::from_raw(h, w, data))
    }

    /// Multiplies every pixel by the mask value at that location.
    pub fn masked(&self, mask: &SoftMask) -> Result<RasterImage> {
        mask.check_dims(self.dims())?;
        let data = self
            .data
            .chunks_exact(3)
            .zip(mask.values())
            .flat_map(|(px, m)| [px[0] * m, px[1] * m, px[2] * m])
            .collect();
        Ok(RasterImage::from_raw(self.height, self.width, data))
    }

    /// Content hash over dimensions and exact pixel bits.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update((self.height as u64).to_le_bytes());
        hasher.update((self.width as u64).to_le_bytes());
        for v in &self.data {
            hasher.update(v.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// A per-pixel soft mask with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftMask {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SoftMask {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if values.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "expected {} mask values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !check_unit(**v)) {
            return Err(Error::InvalidInput(format!("mask value {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        check_dims(height, width)?;
        Self::new(height, width, vec![value; height * width])
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 0.0)
    }

    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 1.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(height, width)?;
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(height, width, values)
    }

    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        debug_assert!(values.iter().all(|v| check_unit(*v)));
        Self { height, width, values }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// True when every value is exactly zero.
    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Pixels with value `>= threshold` become set.
    pub fn binarize(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| *v >= threshold).collect(),
        }
    }

    pub(crate) fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::ShapeMismatch {
                expected: dims,
                actual: self.dims(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    /// Accepts only `0` and `1` entries.
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        check_dims(height, width)?;
        if values.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "expected {} mask values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| **v > 1) {
            return Err(Error::InvalidInput(format!("binary mask value {bad} is not 0 or 1")));
        }
        Ok(Self {
            height,
            width,
            values: values.into_iter().map(|v| v == 1).collect(),
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        check_dims(height, width)?;
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Ok(Self { height, width, values })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::from_fn(height, width, |_, _| false)
    }

    /// All pixels inside `bbox` set.
    pub fn from_box(height: usize, width: usize, bbox: &BoundingBox) -> Result<Self> {
        bbox.check_within(width, height)?;
        Self::from_fn(height, width, |x, y| bbox.contains(x, y))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.values.iter().any(|v| *v)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(BinaryMask {
            height: self.height,
            width: self.width,
            values: self.values.iter().zip(&other.values).map(|(a, b)| *a || *b).collect(),
        })
    }

    pub fn to_soft(&self) -> SoftMask {
        SoftMask::from_raw(
            self.height,
            self.width,
            self.values.iter().map(|v| f64::from(u8::from(*v))).collect(),
        )
    }

    /// Tight half-open rectangle around the set pixels.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bounds = Some(match bounds {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bounds.map(|(x0, y0, x1, y1)| BoundingBox {
            x_min: x0,
            y_min: y0,
            x_max: x1 + 1,
            y_max: y1 + 1,
        })
    }
}

/// Axis-aligned rectangle in pixel coordinates with half-open max edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 4]", into = "[usize; 4]")]
pub struct BoundingBox {
    x_min: usize,
    y_min: usize,
    x_max: usize,
    y_max: usize,
}

impl BoundingBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidBox(format!(
                "({x_min},{y_min},{x_max},{y_max}) has no area"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Validates against an image of the given size as well.
    pub fn within(x_min: usize, y_min: usize, x_max: usize, y_max: usize, width: usize, height: usize) -> Result<Self> {
        let b = Self::new(x_min, y_min, x_max, y_max)?;
        b.check_within(width, height)?;
        Ok(b)
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(0, 0, width, height)
    }

    /// Centered box covering roughly a quarter of the image area.
    pub fn center_quarter(width: usize, height: usize) -> Result<Self> {
        let w = width.div_ceil(2);
        let h = height.div_ceil(2);
        let x0 = (width - w) / 2;
        let y0 = (height - h) / 2;
        Self::new(x0, y0, x0 + w, y0 + h)
    }

    pub fn x_min(&self) -> usize {
        self.x_min
    }

    pub fn y_min(&self) -> usize {
        self.y_min
    }

    pub fn x_max(&self) -> usize {
        self.x_max
    }

    pub fn y_max(&self) -> usize {
        self.y_max
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..self.x_max).contains(&x) && (self.y_min..self.y_max).contains(&y)
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        other.x_min >= self.x_min && other.y_min >= self.y_min && other.x_max <= self.x_max && other.y_max <= self.y_max
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x_max > width || self.y_max > height {
            return Err(Error::InvalidBox(format!(
                "{self} exceeds image bounds {width}x{height}"
            )));
        }
        Ok(())
    }

    pub fn intersect(&self, other: &BoundingBox) -> Option<BoundingBox> {
        BoundingBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        )
        .ok()
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersect(other).map_or(0, |b| b.area());
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

impl TryFrom<[usize; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [usize; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [usize; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PatchStrategy {
    Original,
    /// Only the four half patches.
    Halve,
    /// Only the four quarter patches.
    Quarters,
    #[default]
    OriginalHalve,
    OriginalHalveQuarters,
}

impl PatchStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            PatchStrategy::Original => "original",
            PatchStrategy::Halve => "halve",
            PatchStrategy::Quarters => "quarters",
            PatchStrategy::OriginalHalve => "original+halve",
            PatchStrategy::OriginalHalveQuarters => "original+halve+quarters",
        }
    }
}

impl FromStr for PatchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized: String = s.to_ascii_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
        match normalized.as_str() {
            "original" | "whole" => Ok(PatchStrategy::Original),
            "halve" | "half" => Ok(PatchStrategy::Halve),
            "quarters" | "quarter" => Ok(PatchStrategy::Quarters),
            "original+halve" => Ok(PatchStrategy::OriginalHalve),
            "original+halve+quarters" => Ok(PatchStrategy::OriginalHalveQuarters),
            other => Err(Error::Config(format!("unknown patch strategy '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Sampled {
        seed: u64,
    },
}

/// How per-patch relevance scores become fusion weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FusionNormalization {
    /// Subtract the minimum, then divide by the sum.
    #[default]
    ShiftNormalize,
    Softmax,
}

impl FromStr for FusionNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shift" | "shift-normalize" | "shift_normalize" => Ok(Self::ShiftNormalize),
            "softmax" => Ok(Self::Softmax),
            other => Err(Error::Config(format!("unknown fusion normalization '{other}'"))),
        }
    }
}

/// What the candidate-selection step contrasts the working image against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VisualMarker {
    /// Object region removed by inpainting (the contrastive image).
    #[default]
    Inpaint,
    /// Whole image perturbed by Gaussian noise.
    Noise,
    /// Candidate boxes drawn onto the image; no contrast term.
    BoxOverlay,
    /// Plain scoring on the working image.
    None,
}

impl FromStr for VisualMarker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inpaint" | "ours" => Ok(Self::Inpaint),
            "noise" | "vcd" => Ok(Self::Noise),
            "bbox" | "box" | "box-overlay" | "box_overlay" => Ok(Self::BoxOverlay),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown visual marker '{other}'"))),
        }
    }
}

/// Per-task settings for one run of the cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub generic_prompt: String,
    pub alpha: f64,
    pub blend_weight: f64,
    pub iterations: usize,
    pub patch_strategy: PatchStrategy,
    pub binarize_threshold: f64,
    pub decode_mode: DecodeMode,
    pub seed: u64,
    pub fusion: FusionNormalization,
    pub visual_marker: VisualMarker,
    /// Pool selection scores over patches from the second iteration on.
    pub patch_vcr: bool,
    /// Record wall-clock timings in traces (makes traces non-reproducible).
    pub record_timing: bool,
}

/// Task prompts and iteration counts used for the benchmark tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskPreset {
    Camouflage,
    Polyp,
    SkinLesion,
    Glass,
}

impl FromStr for TaskPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cod" | "camouflage" | "camouflaged" => Ok(Self::Camouflage),
            "polyp" => Ok(Self::Polyp),
            "skin" | "skin-lesion" | "skin_lesion" => Ok(Self::SkinLesion),
            "glass" | "transparent" => Ok(Self::Glass),
            other => Err(Error::Config(format!("unknown task preset '{other}'"))),
        }
    }
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self::preset(TaskPreset::Camouflage)
    }
}

impl TaskConfig {
    pub fn preset(preset: TaskPreset) -> Self {
        let (prompt, iterations) = match preset {
            TaskPreset::Camouflage => ("camouflaged animal", 4),
            TaskPreset::Polyp => ("polyp", 6),
            TaskPreset::SkinLesion => ("skin lesion", 4),
            TaskPreset::Glass => ("glass", 4),
        };
        Self {
            generic_prompt: prompt.to_string(),
            alpha: 1.0,
            blend_weight: 0.3,
            iterations,
            patch_strategy: PatchStrategy::OriginalHalve,
            binarize_threshold: 0.5,
            decode_mode: DecodeMode::Greedy,
            seed: 0,
            fusion: FusionNormalization::ShiftNormalize,
            visual_marker: VisualMarker::Inpaint,
            patch_vcr: true,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.generic_prompt.trim().is_empty() {
            return Err(Error::Config("generic prompt must be non-empty".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !check_unit(self.blend_weight) {
            return Err(Error::Config(format!(
                "blend weight must lie in [0, 1], got {}",
                self.blend_weight
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::Config(format!(
                "binarize threshold must lie in (0, 1), got {}",
                self.binarize_threshold
            )));
        }
        Ok(())
    }
}

/// Lowercased, trimmed object/environment names from one model answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamePair {
    foreground: String,
    background: String,
}

impl NamePair {
    pub fn new(foreground: &str, background: &str) -> Result<Self> {
        let foreground = foreground.trim().to_lowercase();
        let background = background.trim().to_lowercase();
        if foreground.is_empty() || background.is_empty() {
            return Err(Error::InvalidInput("names must be non-empty".into()));
        }
        Ok(Self { foreground, background })
    }

    pub fn foreground(&self) -> &str {
        &self.foreground
    }

    pub fn background(&self) -> &str {
        &self.background
    }
}

/// What the language model reported for a single patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchHypothesis {
    pub patch_id: usize,
    pub scale: ScaleTag,
    pub caption: String,
    /// Global image coordinates; absent when the answer did not parse.
    pub bbox: Option<BoundingBox>,
    pub names: Option<NamePair>,
}

/// Deduplicated candidate names and boxes gathered in one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    names: Vec<NamePair>,
    boxes: Vec<BoundingBox>,
    /// For each name, the index of the box reported alongside it.
    paired_box: Vec<Option<usize>>,
}

impl CandidateSet {
    pub fn empty() -> Self {
        Self {
            names: Vec::new(),
            boxes: Vec::new(),
            paired_box: Vec::new(),
        }
    }

    /// Adds a name unless its foreground is already present
    /// (case-insensitive). Returns whether it was inserted.
    pub fn push_name(&mut self, pair: NamePair, paired_box: Option<BoundingBox>) -> bool {
        if self
            .names
            .iter()
            .any(|n| n.foreground().eq_ignore_ascii_case(pair.foreground()))
        {
            return false;
        }
        let box_index = paired_box.map(|b| self.push_box(b));
        self.names.push(pair);
        self.paired_box.push(box_index);
        true
    }

    /// Adds a box, returning its index; exact duplicates are merged.
    pub fn push_box(&mut self, bbox: BoundingBox) -> usize {
        if let Some(i) = self.boxes.iter().position(|b| *b == bbox) {
            return i;
        }
        self.boxes.push(bbox);
        self.boxes.len() - 1
    }

    pub fn names(&self) -> &[NamePair] {
        &self.names
    }

    pub fn boxes(&self) -> &[BoundingBox] {
        &self.boxes
    }

    pub fn paired_box(&self, name_index: usize) -> Option<BoundingBox> {
        self.paired_box
            .get(name_index)
            .copied()
            .flatten()
            .map(|i| self.boxes[i])
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        self.boxes.iter().try_for_each(|b| b.check_within(width, height))
    }
}

/// The verified name, environment and box that drive segmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstancePrompt {
    pub name: String,
    pub background: String,
    pub bbox: BoundingBox,
}

/// Everything produced by one iteration of the cycle.
#[derive(Clone, Debug)]
pub struct IterationState {
    /// One-based iteration index.
    pub index: usize,
    pub image: RasterImage,
    pub mask: SoftMask,
    pub prompt: InstancePrompt,
    pub contrastive_image: RasterImage,
    pub record: crate::engine::IterationRecord,
}

#[derive(Clone, Debug)]
pub struct CycleResult {
    pub iterations: Vec<IterationState>,
    /// One-based index of the selected iteration.
    pub selected_index: usize,
    pub final_mask: SoftMask,
}

impl CycleResult {
    pub fn masks(&self) -> Vec<&SoftMask> {
        self.iterations.iter().map(|s| &s.mask).collect()
    }
}
