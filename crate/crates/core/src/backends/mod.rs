//! Contracts for the four external models and the checked bundle the
//! pipeline calls through.
//!
//! Adapters implement the narrow traits below. The pipeline never calls an
//! adapter directly; it goes through [`Backends`], which validates inputs
//! and outputs, retries transient failures, serializes access to adapters
//! that are not thread-safe, and re-composites inpainting results so that
//! pixels outside the region are never altered.

pub mod cache;
pub mod mock;
pub mod scene;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::types::{BinaryMask, BoundingBox, DecodeMode, RasterImage, SoftMask};

pub type TokenId = u32;
pub type BackendResult<T> = std::result::Result<T, BackendError>;

/// Raw (unnormalized) next-token logits, one vector per answer token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenLogits {
    vocab_size: usize,
    per_step: Vec<Vec<f64>>,
}

impl TokenLogits {
    pub fn new(vocab_size: usize, per_step: Vec<Vec<f64>>) -> BackendResult<Self> {
        if vocab_size == 0 {
            return Err(BackendError::InvalidInput("vocabulary size must be positive".into()));
        }
        for (t, row) in per_step.iter().enumerate() {
            if row.len() != vocab_size {
                return Err(BackendError::InvalidInput(format!(
                    "step {t} has {} logits, expected {vocab_size}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(BackendError::InvalidInput(format!("step {t} has non-finite logits")));
            }
        }
        Ok(Self { vocab_size, per_step })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn steps(&self) -> usize {
        self.per_step.len()
    }

    pub fn per_step(&self) -> &[Vec<f64>] {
        &self.per_step
    }
}

/// Text-conditioned relevance map over the image grid, max-normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl HeatMap {
    /// Negative and non-finite entries become zero; the rest are scaled so
    /// the maximum is 1. An all-zero input stays all-zero.
    pub fn normalized(height: usize, width: usize, raw: Vec<f64>) -> BackendResult<Self> {
        if raw.len() != height * width || height == 0 || width == 0 {
            return Err(BackendError::InvalidInput(format!(
                "heatmap of {} values does not fit {height}x{width}",
                raw.len()
            )));
        }
        let cleaned: Vec<f64> = raw
            .into_iter()
            .map(|v| if v.is_finite() && v > 0.0 { v } else { 0.0 })
            .collect();
        let max = cleaned.iter().copied().fold(0.0, f64::max);
        let values = if max > 0.0 {
            cleaned.into_iter().map(|v| v / max).collect()
        } else {
            cleaned
        };
        Ok(Self { height, width, values })
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

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    fn extreme_in(&self, region: &BoundingBox, better: impl Fn(f64, f64) -> bool) -> (usize, usize) {
        let mut best = (region.x_min(), region.y_min());
        let mut best_value = self.get(best.0, best.1);
        for y in region.y_min()..region.y_max() {
            for x in region.x_min()..region.x_max() {
                let v = self.get(x, y);
                if better(v, best_value) {
                    best = (x, y);
                    best_value = v;
                }
            }
        }
        best
    }

    /// Location of the maximum inside `region`; ties go to the first pixel
    /// in row-major order.
    pub fn argmax_in(&self, region: &BoundingBox) -> (usize, usize) {
        self.extreme_in(region, |v, best| v > best)
    }

    pub fn argmin_in(&self, region: &BoundingBox) -> (usize, usize) {
        self.extreme_in(region, |v, best| v < best)
    }

    pub fn argmax(&self) -> (usize, usize) {
        self.argmax_in(&BoundingBox::new(0, 0, self.width, self.height).expect("non-empty map"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointPrompt {
    pub x: usize,
    pub y: usize,
    /// `true` marks the object, `false` marks background.
    pub positive: bool,
}

/// Multimodal language model.
pub trait MultimodalLlm: Send + Sync {
    fn complete(&self, image: &RasterImage, prompt: &str, mode: DecodeMode) -> BackendResult<String>;

    fn tokenize(&self, text: &str) -> BackendResult<Vec<TokenId>>;

    /// Teacher-forced logits: one vector per answer token, each conditioned
    /// on the image, the prompt and the preceding answer tokens.
    fn score_tokens(&self, image: &RasterImage, prompt: &str, tokens: &[TokenId]) -> BackendResult<TokenLogits>;

    fn thread_safe(&self) -> bool {
        false
    }
}

/// Promptable segmenter.
pub trait Segmenter: Send + Sync {
    fn segment(
        &self,
        image: &RasterImage,
        bbox: Option<&BoundingBox>,
        points: &[PointPrompt],
    ) -> BackendResult<SoftMask>;

    fn thread_safe(&self) -> bool {
        false
    }
}

/// Text-image relevance model.
pub trait TextImageScorer: Send + Sync {
    /// Similarity in `[-1, 1]`; higher is a better match.
    fn similarity(&self, image: &RasterImage, text: &str) -> BackendResult<f64>;

    fn spatial_heatmap(&self, image: &RasterImage, text: &str) -> BackendResult<HeatMap>;

    /// Text-text similarity in `[-1, 1]`.
    fn text_similarity(&self, a: &str, b: &str) -> BackendResult<f64>;

    fn thread_safe(&self) -> bool {
        false
    }
}

pub trait Inpainter: Send + Sync {
    fn inpaint(
        &self,
        image: &RasterImage,
        region: &BinaryMask,
        positive_prompt: &str,
        negative_prompt: &str,
        seed: u64,
    ) -> BackendResult<RasterImage>;

    fn thread_safe(&self) -> bool {
        false
    }
}

#[derive(Clone, Default)]
struct Gate(Option<Arc<Mutex<()>>>);

impl Gate {
    fn new(thread_safe: bool) -> Self {
        Gate((!thread_safe).then(|| Arc::new(Mutex::new(()))))
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        match &self.0 {
            Some(lock) => {
                let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
                f()
            }
            None => f(),
        }
    }
}

/// The four adapters plus the contract checks the pipeline relies on.
#[derive(Clone)]
pub struct Backends {
    mllm: Arc<dyn MultimodalLlm>,
    segmenter: Arc<dyn Segmenter>,
    scorer: Arc<dyn TextImageScorer>,
    inpainter: Arc<dyn Inpainter>,
    gates: [Gate; 4],
    max_retries: usize,
}

impl Backends {
    pub fn new(
        mllm: Arc<dyn MultimodalLlm>,
        segmenter: Arc<dyn Segmenter>,
        scorer: Arc<dyn TextImageScorer>,
        inpainter: Arc<dyn Inpainter>,
    ) -> Self {
        let gates = [
            Gate::new(mllm.thread_safe()),
            Gate::new(segmenter.thread_safe()),
            Gate::new(scorer.thread_safe()),
            Gate::new(inpainter.thread_safe()),
        ];
        Self {
            mllm,
            segmenter,
            scorer,
            inpainter,
            gates,
            max_retries: 2,
        }
    }

    pub fn with_max_retries(mut self, retries: usize) -> Self {
        self.max_retries = retries;
        self
    }

    pub fn mllm(&self) -> &Arc<dyn MultimodalLlm> {
        &self.mllm
    }

    pub fn segmenter(&self) -> &Arc<dyn Segmenter> {
        &self.segmenter
    }

    pub fn scorer(&self) -> &Arc<dyn TextImageScorer> {
        &self.scorer
    }

    pub fn inpainter(&self) -> &Arc<dyn Inpainter> {
        &self.inpainter
    }

    fn retry<T>(&self, gate: usize, mut f: impl FnMut() -> BackendResult<T>) -> BackendResult<T> {
        let mut attempt = 0;
        loop {
            match self.gates[gate].run(&mut f) {
                Err(e) if e.is_retriable() && attempt < self.max_retries => {
                    attempt += 1;
                    log::debug!("retrying backend call after: {e}");
                }
                other => return other,
            }
        }
    }

    pub fn complete(&self, image: &RasterImage, prompt: &str, mode: DecodeMode) -> BackendResult<String> {
        if prompt.trim().is_empty() {
            return Err(BackendError::InvalidInput("prompt must be non-empty".into()));
        }
        let text = self.retry(0, || self.mllm.complete(image, prompt, mode))?;
        if text.trim().is_empty() {
            return Err(BackendError::DegenerateResponse);
        }
        Ok(text)
    }

    pub fn tokenize(&self, text: &str) -> BackendResult<Vec<TokenId>> {
        let tokens = self.retry(0, || self.mllm.tokenize(text))?;
        if tokens.is_empty() {
            return Err(BackendError::InvalidInput(format!("'{text}' produced no tokens")));
        }
        Ok(tokens)
    }

    pub fn score_tokens(&self, image: &RasterImage, prompt: &str, tokens: &[TokenId]) -> BackendResult<TokenLogits> {
        if tokens.is_empty() {
            return Err(BackendError::InvalidInput("answer tokens must be non-empty".into()));
        }
        let logits = self.retry(0, || self.mllm.score_tokens(image, prompt, tokens))?;
        if logits.steps() != tokens.len() {
            return Err(BackendError::InvalidInput(format!(
                "backend returned {} steps for {} tokens",
                logits.steps(),
                tokens.len()
            )));
        }
        if let Some(t) = tokens.iter().find(|t| **t as usize >= logits.vocab_size()) {
            return Err(BackendError::InvalidInput(format!("token {t} outside vocabulary")));
        }
        Ok(logits)
    }

    pub fn segment(
        &self,
        image: &RasterImage,
        bbox: Option<&BoundingBox>,
        points: &[PointPrompt],
    ) -> BackendResult<SoftMask> {
        if bbox.is_none() && points.is_empty() {
            return Err(BackendError::InvalidInput("segment needs a box or a point".into()));
        }
        if let Some(b) = bbox {
            b.check_within(image.width(), image.height())
                .map_err(|e| BackendError::InvalidInput(e.to_string()))?;
        }
        if points.iter().any(|p| p.x >= image.width() || p.y >= image.height()) {
            return Err(BackendError::InvalidInput("point prompt outside the image".into()));
        }
        let mask = self.retry(1, || self.segmenter.segment(image, bbox, points))?;
        if mask.dims() != image.dims() {
            return Err(BackendError::InvalidInput(format!(
                "segmenter returned {:?} for a {:?} image",
                mask.dims(),
                image.dims()
            )));
        }
        Ok(mask)
    }

    pub fn similarity(&self, image: &RasterImage, text: &str) -> BackendResult<f64> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidInput("text must be non-empty".into()));
        }
        let s = self.retry(2, || self.scorer.similarity(image, text))?;
        if !s.is_finite() {
            return Err(BackendError::InvalidInput("non-finite similarity".into()));
        }
        Ok(s.clamp(-1.0, 1.0))
    }

    pub fn spatial_heatmap(&self, image: &RasterImage, text: &str) -> BackendResult<HeatMap> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidInput("text must be non-empty".into()));
        }
        let map = self.retry(2, || self.scorer.spatial_heatmap(image, text))?;
        if map.dims() != image.dims() {
            return Err(BackendError::InvalidInput(
                "heatmap does not match the image grid".into(),
            ));
        }
        Ok(map)
    }

    pub fn text_similarity(&self, a: &str, b: &str) -> BackendResult<f64> {
        let s = self.retry(2, || self.scorer.text_similarity(a, b))?;
        if !s.is_finite() {
            return Err(BackendError::InvalidInput("non-finite similarity".into()));
        }
        Ok(s.clamp(-1.0, 1.0))
    }

    /// Inpaints `region` and composites the result so every pixel outside
    /// the region is bit-identical to `image`.
    pub fn inpaint(
        &self,
        image: &RasterImage,
        region: &BinaryMask,
        positive_prompt: &str,
        negative_prompt: &str,
        seed: u64,
    ) -> BackendResult<RasterImage> {
        if region.dims() != image.dims() {
            return Err(BackendError::InvalidInput(
                "inpaint region does not match the image".into(),
            ));
        }
        if region.is_empty() {
            return Err(BackendError::InvalidInput("inpaint region is empty".into()));
        }
        let filled = self.retry(3, || {
            self.inpainter
                .inpaint(image, region, positive_prompt, negative_prompt, seed)
        })?;
        if filled.dims() != image.dims() {
            return Err(BackendError::InvalidInput("inpainter changed the image size".into()));
        }
        let data = image
            .data()
            .chunks_exact(3)
            .zip(filled.data().chunks_exact(3))
            .zip(region.values())
            .flat_map(|((orig, new), inside)| {
                if *inside {
                    [new[0], new[1], new[2]]
                } else {
                    [orig[0], orig[1], orig[2]]
                }
            })
            .collect();
        Ok(RasterImage::from_raw(image.height(), image.width(), data))
    }
}
