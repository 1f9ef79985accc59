//! Content-aware mock backends for synthetic scenes.
//!
//! A scene is described by a list of concepts, each identified by a color
//! direction. The mock language model "sees" a concept when enough lit
//! pixels share that direction, answers box and name queries from what it
//! sees, and falls back to the concept with the strongest prior when nothing
//! is visible (a co-occurrence hallucination). Its logits combine a
//! per-concept prior with visible evidence, so contrasting an image against
//! a copy with the object inpainted away cancels the prior and keeps the
//! evidence. Chromaticity is invariant under the per-pixel scaling applied
//! between iterations, so concepts stay recognizable across the cycle.

use std::sync::Arc;

use super::mock::{chroma_distance, chromaticity, text_cosine, MeanFillInpainter, WordTokenizer};
use super::{
    BackendResult, Backends, HeatMap, MultimodalLlm, PointPrompt, Segmenter, TextImageScorer, TokenId, TokenLogits,
};
use crate::types::{BoundingBox, DecodeMode, RasterImage, SoftMask};

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConcept {
    pub name: String,
    pub background: String,
    pub rgb: [f64; 3],
    /// Logit the model assigns to this name regardless of the image.
    pub prior: f64,
}

impl SceneConcept {
    pub fn new(name: &str, background: &str, rgb: [f64; 3], prior: f64) -> Self {
        Self {
            name: name.to_lowercase(),
            background: background.to_lowercase(),
            rgb,
            prior,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SceneModel {
    pub concepts: Vec<SceneConcept>,
    pub tolerance: f64,
    /// Minimum lit-pixel fraction for a concept to count as visible.
    pub min_fraction: f64,
    /// Logit gain per unit of visible fraction.
    pub gain: f64,
}

/// Colors used by the synthetic dataset generator.
pub const LEAF_RGB: [f64; 3] = [0.25, 0.55, 0.2];
pub const CATERPILLAR_RGB: [f64; 3] = [0.6, 0.4, 0.12];

impl Default for SceneModel {
    fn default() -> Self {
        Self {
            concepts: vec![
                SceneConcept::new("caterpillar", "leaf", CATERPILLAR_RGB, 0.0),
                SceneConcept::new("frog", "leaf", [0.2, 0.3, 0.6], 0.5),
            ],
            tolerance: 0.05,
            min_fraction: 0.002,
            gain: 20.0,
        }
    }
}

struct Sighting {
    concept: usize,
    fraction: f64,
    bbox: Option<BoundingBox>,
}

impl SceneModel {
    fn matches(&self, concept: &SceneConcept, px: [f64; 3]) -> Option<f64> {
        let target = chromaticity(concept.rgb)?;
        let c = chromaticity(px)?;
        let d = chroma_distance(c, target);
        (d <= self.tolerance).then_some(d)
    }

    fn sightings(&self, image: &RasterImage) -> Vec<Sighting> {
        let lit = image.pixels().filter(|p| chromaticity(*p).is_some()).count();
        self.concepts
            .iter()
            .enumerate()
            .map(|(i, concept)| {
                let mut hits = 0usize;
                let mut bounds: Option<(usize, usize, usize, usize)> = None;
                for y in 0..image.height() {
                    for x in 0..image.width() {
                        if self.matches(concept, image.pixel(x, y)).is_some() {
                            hits += 1;
                            bounds = Some(match bounds {
                                None => (x, y, x, y),
                                Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                            });
                        }
                    }
                }
                let fraction = if lit == 0 { 0.0 } else { hits as f64 / lit as f64 };
                Sighting {
                    concept: i,
                    fraction,
                    bbox: bounds.and_then(|(a, b, c, d)| BoundingBox::new(a, b, c + 1, d + 1).ok()),
                }
            })
            .collect()
    }

    fn best_visible(&self, image: &RasterImage) -> Option<Sighting> {
        self.sightings(image)
            .into_iter()
            .filter(|s| s.fraction >= self.min_fraction)
            .fold(None, |best: Option<Sighting>, s| match best {
                Some(b) if b.fraction >= s.fraction => Some(b),
                _ => Some(s),
            })
    }

    fn strongest_prior(&self) -> Option<&SceneConcept> {
        self.concepts
            .iter()
            .filter(|c| c.prior > 0.0)
            .fold(None, |best: Option<&SceneConcept>, c| match best {
                Some(b) if b.prior >= c.prior => Some(b),
                _ => Some(c),
            })
    }

    fn concept_named(&self, text: &str) -> Option<&SceneConcept> {
        let text = text.trim().to_lowercase();
        self.concepts.iter().find(|c| c.name == text)
    }

    /// Per-pixel closeness to `concept`, or to any concept when `None`.
    fn closeness(&self, concept: Option<&SceneConcept>, px: [f64; 3]) -> f64 {
        let score = |c: &SceneConcept| self.matches(c, px).map_or(0.0, |d| 1.0 - d / (2.0 * self.tolerance));
        match concept {
            Some(c) => score(c),
            None => self.concepts.iter().map(score).fold(0.0, f64::max),
        }
    }

    fn vocabulary(&self) -> Vec<String> {
        let mut words: Vec<String> = Vec::new();
        for c in &self.concepts {
            words.extend(WordTokenizer::pieces(&c.name));
            words.extend(WordTokenizer::pieces(&c.background));
        }
        words
    }
}

pub struct SceneMllm {
    model: Arc<SceneModel>,
    tokenizer: WordTokenizer,
}

impl SceneMllm {
    pub fn new(model: Arc<SceneModel>) -> Self {
        let tokenizer = WordTokenizer::new(&model.vocabulary());
        Self { model, tokenizer }
    }
}

impl MultimodalLlm for SceneMllm {
    fn complete(&self, image: &RasterImage, prompt: &str, _mode: DecodeMode) -> BackendResult<String> {
        let prompt = prompt.to_lowercase();
        let seen = self.model.best_visible(image);
        if prompt.contains("bounding box") {
            return Ok(match seen.and_then(|s| s.bbox) {
                Some(b) => format!("[{}, {}, {}, {}]", b.x_min(), b.y_min(), b.x_max(), b.y_max()),
                None => "none".to_string(),
            });
        }
        if prompt.contains("name of") {
            let concept = seen
                .map(|s| &self.model.concepts[s.concept])
                .or_else(|| self.model.strongest_prior());
            return Ok(match concept {
                Some(c) => format!("{}, {}", c.name, c.background),
                None => "unknown".to_string(),
            });
        }
        Ok(match seen {
            Some(s) => format!("a photo of a {}", self.model.concepts[s.concept].name),
            None => "a photo of a natural scene".to_string(),
        })
    }

    fn tokenize(&self, text: &str) -> BackendResult<Vec<TokenId>> {
        Ok(self.tokenizer.tokenize(text))
    }

    fn score_tokens(&self, image: &RasterImage, _prompt: &str, tokens: &[TokenId]) -> BackendResult<TokenLogits> {
        let v = self.tokenizer.vocab_size();
        let mut row = vec![0.0; v];
        for s in self.model.sightings(image) {
            let c = &self.model.concepts[s.concept];
            for piece in WordTokenizer::pieces(&c.name) {
                if let Some(id) = self.tokenizer.id(&piece) {
                    row[id as usize] = c.prior + self.model.gain * s.fraction;
                }
            }
        }
        TokenLogits::new(v, vec![row; tokens.len()])
    }

    fn thread_safe(&self) -> bool {
        true
    }
}

/// Segments the pixels inside the box that match the concept under the
/// positive point (or the most common concept in the box).
pub struct SceneSegmenter {
    model: Arc<SceneModel>,
}

impl SceneSegmenter {
    pub fn new(model: Arc<SceneModel>) -> Self {
        Self { model }
    }
}

impl Segmenter for SceneSegmenter {
    fn segment(
        &self,
        image: &RasterImage,
        bbox: Option<&BoundingBox>,
        points: &[PointPrompt],
    ) -> BackendResult<SoftMask> {
        let (h, w) = image.dims();
        let region = match bbox {
            Some(b) => *b,
            None => BoundingBox::full(w, h).map_err(|e| crate::error::BackendError::InvalidInput(e.to_string()))?,
        };
        let from_point = points.iter().filter(|p| p.positive).find_map(|p| {
            let px = image.pixel(p.x, p.y);
            self.model.concepts.iter().find(|c| self.model.matches(c, px).is_some())
        });
        let concept = from_point.or_else(|| {
            let inside = image.crop(&region).ok()?;
            self.model
                .best_visible(&inside)
                .map(|s| &self.model.concepts[s.concept])
        });
        let mask = SoftMask::from_fn(h, w, |x, y| match concept {
            Some(c) if region.contains(x, y) => self.model.closeness(Some(c), image.pixel(x, y)),
            _ => 0.0,
        });
        mask.map_err(|e| crate::error::BackendError::InvalidInput(e.to_string()))
    }

    fn thread_safe(&self) -> bool {
        true
    }
}

/// Lit-pixel share at which a region's similarity is halved.
const EVIDENCE_FRACTION: f64 = 0.01;

pub struct SceneScorer {
    model: Arc<SceneModel>,
}

impl SceneScorer {
    pub fn new(model: Arc<SceneModel>) -> Self {
        Self { model }
    }
}

impl TextImageScorer for SceneScorer {
    fn similarity(&self, image: &RasterImage, text: &str) -> BackendResult<f64> {
        let concept = self.model.concept_named(text);
        let mut lit = 0usize;
        let mut total = 0.0;
        for px in image.pixels() {
            if chromaticity(px).is_some() {
                lit += 1;
                total += self.model.closeness(concept, px);
            }
        }
        if lit == 0 {
            return Ok(-1.0);
        }
        // a mostly black crop carries little evidence: damp by lit area
        let evidence = lit as f64 / (lit as f64 + EVIDENCE_FRACTION * image.pixels().count() as f64);
        Ok((2.0 * total / lit as f64 - 1.0) * evidence)
    }

    fn spatial_heatmap(&self, image: &RasterImage, text: &str) -> BackendResult<HeatMap> {
        let concept = self.model.concept_named(text);
        let raw = image.pixels().map(|px| self.model.closeness(concept, px)).collect();
        HeatMap::normalized(image.height(), image.width(), raw)
    }

    fn text_similarity(&self, a: &str, b: &str) -> BackendResult<f64> {
        Ok(text_cosine(a, b))
    }

    fn thread_safe(&self) -> bool {
        true
    }
}

/// Scene-aware language model, segmenter and scorer plus the mean-fill
/// inpainter.
pub fn scene_backends(model: SceneModel) -> Backends {
    let model = Arc::new(model);
    Backends::new(
        Arc::new(SceneMllm::new(model.clone())),
        Arc::new(SceneSegmenter::new(model.clone())),
        Arc::new(SceneScorer::new(model)),
        Arc::new(MeanFillInpainter),
    )
}
