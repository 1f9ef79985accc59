//! Deterministic table-driven mock backends for tests and GPU-free runs.
//!
//! Every mock here is a pure function of its inputs (and seed).

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    BackendResult, HeatMap, Inpainter, MultimodalLlm, PointPrompt, Segmenter, TextImageScorer, TokenId, TokenLogits,
};
use crate::error::BackendError;
use crate::types::{BinaryMask, BoundingBox, DecodeMode, RasterImage, SoftMask};

/// Pixels whose channel sum is below this are treated as black.
pub const DARK_LEVEL: f64 = 0.05;

/// Normalized color direction `rgb / (r + g + b)`, or `None` for
/// near-black pixels. Invariant under uniform per-pixel scaling.
pub fn chromaticity(px: [f64; 3]) -> Option<[f64; 3]> {
    let sum = px[0] + px[1] + px[2];
    (sum >= DARK_LEVEL).then(|| [px[0] / sum, px[1] / sum, px[2] / sum])
}

pub fn chroma_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Fraction of non-black pixels whose chromaticity lies within `tolerance`
/// of the chromaticity of `rgb`.
pub fn chroma_fraction(image: &RasterImage, rgb: [f64; 3], tolerance: f64) -> f64 {
    let Some(target) = chromaticity(rgb) else {
        return 0.0;
    };
    let mut lit = 0usize;
    let mut hits = 0usize;
    for c in image.pixels().filter_map(chromaticity) {
        lit += 1;
        if chroma_distance(c, target) <= tolerance {
            hits += 1;
        }
    }
    if lit == 0 {
        0.0
    } else {
        hits as f64 / lit as f64
    }
}

/// Cosine similarity of character-bigram counts; a cheap deterministic
/// stand-in for a text encoder.
pub fn text_cosine(a: &str, b: &str) -> f64 {
    fn bigrams(s: &str) -> HashMap<(char, char), f64> {
        let chars: Vec<char> = format!(" {} ", s.trim().to_lowercase()).chars().collect();
        let mut counts = HashMap::new();
        for w in chars.windows(2) {
            *counts.entry((w[0], w[1])).or_insert(0.0) += 1.0;
        }
        counts
    }
    let (ca, cb) = (bigrams(a), bigrams(b));
    let dot: f64 = ca.iter().map(|(k, v)| v * cb.get(k).unwrap_or(&0.0)).sum();
    let na: f64 = ca.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = cb.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Selects which images a scripted rule applies to.
#[derive(Clone, Debug, PartialEq)]
pub enum ImageMatcher {
    Any,
    Fingerprint(u64),
    Size {
        height: usize,
        width: usize,
    },
    /// At least `min_fraction` of the lit pixels have this color direction.
    Chroma {
        rgb: [f64; 3],
        tolerance: f64,
        min_fraction: f64,
    },
    Not(Box<ImageMatcher>),
    All(Vec<ImageMatcher>),
}

impl ImageMatcher {
    pub fn matches(&self, image: &RasterImage) -> bool {
        match self {
            ImageMatcher::Any => true,
            ImageMatcher::Fingerprint(fp) => image.fingerprint() == *fp,
            ImageMatcher::Size { height, width } => image.dims() == (*height, *width),
            ImageMatcher::Chroma {
                rgb,
                tolerance,
                min_fraction,
            } => chroma_fraction(image, *rgb, *tolerance) >= *min_fraction,
            ImageMatcher::Not(inner) => !inner.matches(image),
            ImageMatcher::All(all) => all.iter().all(|m| m.matches(image)),
        }
    }
}

/// Word-level tokenizer over a fixed vocabulary. Id 0 is `<unk>`.
#[derive(Clone, Debug)]
pub struct WordTokenizer {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl WordTokenizer {
    pub fn new<S: AsRef<str>>(vocabulary: &[S]) -> Self {
        let mut words = vec!["<unk>".to_string()];
        let mut index = HashMap::from([("<unk>".to_string(), 0)]);
        for w in vocabulary {
            let w = w.as_ref().trim().to_lowercase();
            if w.is_empty() || index.contains_key(&w) {
                continue;
            }
            index.insert(w.clone(), words.len() as TokenId);
            words.push(w);
        }
        Self { words, index }
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(&word.to_lowercase()).copied()
    }

    /// Splits into alphanumeric runs and single punctuation characters.
    pub fn pieces(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut word = String::new();
        for c in text.chars() {
            if c.is_alphanumeric() {
                word.extend(c.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                if !c.is_whitespace() {
                    out.push(c.to_string());
                }
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
        out
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        Self::pieces(text)
            .iter()
            .map(|p| self.index.get(p).copied().unwrap_or(0))
            .collect()
    }
}

fn prompt_matches(pattern: &Option<String>, prompt: &str) -> bool {
    pattern
        .as_ref()
        .is_none_or(|p| prompt.to_lowercase().contains(&p.to_lowercase()))
}

#[derive(Clone, Debug)]
struct ResponseRule {
    image: ImageMatcher,
    prompt: Option<String>,
    responses: Vec<String>,
}

#[derive(Clone, Debug)]
struct LogitRule {
    image: ImageMatcher,
    prompt: Option<String>,
    logits: Vec<f64>,
}

/// Table-driven language model. Rules are checked in insertion order and
/// the first match wins; unmatched completions return the fallback text.
#[derive(Clone, Debug)]
pub struct ScriptedMllm {
    tokenizer: WordTokenizer,
    responses: Vec<ResponseRule>,
    logits: Vec<LogitRule>,
    fallback: String,
    default_logits: Vec<f64>,
}

impl ScriptedMllm {
    pub fn new<S: AsRef<str>>(vocabulary: &[S]) -> Self {
        let tokenizer = WordTokenizer::new(vocabulary);
        let default_logits = vec![0.0; tokenizer.vocab_size()];
        Self {
            tokenizer,
            responses: Vec::new(),
            logits: Vec::new(),
            fallback: "unknown".to_string(),
            default_logits,
        }
    }

    pub fn tokenizer(&self) -> &WordTokenizer {
        &self.tokenizer
    }

    pub fn with_fallback(mut self, text: &str) -> Self {
        self.fallback = text.to_string();
        self
    }

    /// Scripts a completion. With several responses, greedy decoding takes
    /// the first and sampled decoding picks one by seed.
    pub fn respond(mut self, image: ImageMatcher, prompt_contains: Option<&str>, responses: &[&str]) -> Self {
        self.responses.push(ResponseRule {
            image,
            prompt: prompt_contains.map(str::to_string),
            responses: responses.iter().map(|s| s.to_string()).collect(),
        });
        self
    }

    /// Scripts a dense logit vector returned at every answer step.
    pub fn logits(mut self, image: ImageMatcher, prompt_contains: Option<&str>, logits: Vec<f64>) -> Self {
        assert_eq!(
            logits.len(),
            self.tokenizer.vocab_size(),
            "logit vector must cover the vocabulary"
        );
        self.logits.push(LogitRule {
            image,
            prompt: prompt_contains.map(str::to_string),
            logits,
        });
        self
    }

    /// Like [`ScriptedMllm::logits`] but given per-word values; unlisted
    /// words get zero.
    pub fn word_logits(self, image: ImageMatcher, prompt_contains: Option<&str>, values: &[(&str, f64)]) -> Self {
        let mut dense = vec![0.0; self.tokenizer.vocab_size()];
        for (word, v) in values {
            let id = self
                .tokenizer
                .id(word)
                .unwrap_or_else(|| panic!("'{word}' is not in the mock vocabulary"));
            dense[id as usize] = *v;
        }
        self.logits(image, prompt_contains, dense)
    }

    /// Logits used when no rule matches.
    pub fn default_logits(mut self, logits: Vec<f64>) -> Self {
        assert_eq!(logits.len(), self.tokenizer.vocab_size());
        self.default_logits = logits;
        self
    }
}

pub(crate) fn sample_index(n: usize, seed: u64, salt: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.rotate_left(17));
    rng.random_range(0..n)
}

pub(crate) fn text_salt(text: &str) -> u64 {
    // FNV-1a
    text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl MultimodalLlm for ScriptedMllm {
    fn complete(&self, image: &RasterImage, prompt: &str, mode: DecodeMode) -> BackendResult<String> {
        let rule = self
            .responses
            .iter()
            .find(|r| prompt_matches(&r.prompt, prompt) && r.image.matches(image));
        let Some(rule) = rule else {
            return Ok(self.fallback.clone());
        };
        let text = match (mode, rule.responses.len()) {
            (_, 0) => return Err(BackendError::DegenerateResponse),
            (DecodeMode::Greedy, _) | (_, 1) => rule.responses[0].clone(),
            (DecodeMode::Sampled { seed }, n) => {
                let salt = text_salt(prompt) ^ image.fingerprint();
                rule.responses[sample_index(n, seed, salt)].clone()
            }
        };
        if text.trim().is_empty() {
            return Err(BackendError::DegenerateResponse);
        }
        Ok(text)
    }

    fn tokenize(&self, text: &str) -> BackendResult<Vec<TokenId>> {
        Ok(self.tokenizer.tokenize(text))
    }

    fn score_tokens(&self, image: &RasterImage, prompt: &str, tokens: &[TokenId]) -> BackendResult<TokenLogits> {
        let v = self.tokenizer.vocab_size();
        if let Some(t) = tokens.iter().find(|t| **t as usize >= v) {
            return Err(BackendError::InvalidInput(format!("token {t} not in vocabulary")));
        }
        let row = self
            .logits
            .iter()
            .find(|r| prompt_matches(&r.prompt, prompt) && r.image.matches(image))
            .map_or(&self.default_logits, |r| &r.logits);
        TokenLogits::new(v, vec![row.clone(); tokens.len()])
    }

    fn thread_safe(&self) -> bool {
        true
    }
}

/// Table-driven text-image scorer.
#[derive(Clone, Debug, Default)]
pub struct ScriptedScorer {
    scores: Vec<(ImageMatcher, String, f64)>,
    bumps: Vec<(String, BoundingBox)>,
    default_score: f64,
}

impl ScriptedScorer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn score(mut self, image: ImageMatcher, text: &str, value: f64) -> Self {
        self.scores.push((image, text.to_lowercase(), value));
        self
    }

    pub fn default_score(mut self, value: f64) -> Self {
        self.default_score = value;
        self
    }

    /// Heatmap for `text` becomes a Gaussian bump centered in `bbox`.
    pub fn bump(mut self, text: &str, bbox: BoundingBox) -> Self {
        self.bumps.push((text.to_lowercase(), bbox));
        self
    }
}

impl TextImageScorer for ScriptedScorer {
    fn similarity(&self, image: &RasterImage, text: &str) -> BackendResult<f64> {
        let text = text.to_lowercase();
        Ok(self
            .scores
            .iter()
            .find(|(m, t, _)| *t == text && m.matches(image))
            .map_or(self.default_score, |(_, _, v)| *v))
    }

    fn spatial_heatmap(&self, image: &RasterImage, text: &str) -> BackendResult<HeatMap> {
        let (h, w) = image.dims();
        let text = text.to_lowercase();
        let raw = match self.bumps.iter().find(|(t, _)| *t == text) {
            Some((_, b)) => {
                let cx = (b.x_min() + b.x_max()) as f64 / 2.0;
                let cy = (b.y_min() + b.y_max()) as f64 / 2.0;
                let sx = (b.width() as f64 / 4.0).max(0.5);
                let sy = (b.height() as f64 / 4.0).max(0.5);
                let mut raw = Vec::with_capacity(h * w);
                for y in 0..h {
                    for x in 0..w {
                        let dx = (x as f64 + 0.5 - cx) / sx;
                        let dy = (y as f64 + 0.5 - cy) / sy;
                        raw.push((-0.5 * (dx * dx + dy * dy)).exp());
                    }
                }
                raw
            }
            None => vec![1.0; h * w],
        };
        HeatMap::normalized(h, w, raw)
    }

    fn text_similarity(&self, a: &str, b: &str) -> BackendResult<f64> {
        Ok(text_cosine(a, b))
    }

    fn thread_safe(&self) -> bool {
        true
    }
}

/// Geometric segmenters driven purely by the prompts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MockSegmenter {
    /// 1 inside the box; without a box, a 5px square around each positive point.
    BoxFill,
    /// Ellipse inscribed in the box, strictly inside it.
    EllipseInBox,
}

const POINT_RADIUS: usize = 2;

impl Segmenter for MockSegmenter {
    fn segment(
        &self,
        image: &RasterImage,
        bbox: Option<&BoundingBox>,
        points: &[PointPrompt],
    ) -> BackendResult<SoftMask> {
        let (h, w) = image.dims();
        let mask = match (self, bbox) {
            (MockSegmenter::BoxFill, Some(b)) => SoftMask::from_fn(h, w, |x, y| f64::from(u8::from(b.contains(x, y)))),
            (MockSegmenter::EllipseInBox, Some(b)) => {
                let cx = (b.x_min() + b.x_max()) as f64 / 2.0;
                let cy = (b.y_min() + b.y_max()) as f64 / 2.0;
                let rx = b.width() as f64 / 2.0;
                let ry = b.height() as f64 / 2.0;
                SoftMask::from_fn(h, w, |x, y| {
                    let dx = (x as f64 + 0.5 - cx) / rx;
                    let dy = (y as f64 + 0.5 - cy) / ry;
                    f64::from(u8::from(dx * dx + dy * dy < 1.0))
                })
            }
            (_, None) => SoftMask::from_fn(h, w, |x, y| {
                let hit = points
                    .iter()
                    .filter(|p| p.positive)
                    .any(|p| x.abs_diff(p.x) <= POINT_RADIUS && y.abs_diff(p.y) <= POINT_RADIUS);
                f64::from(u8::from(hit))
            }),
        };
        mask.map_err(|e| BackendError::InvalidInput(e.to_string()))
    }

    fn thread_safe(&self) -> bool {
        true
    }
}

/// Replaces region pixels with the mean color of the pixels outside it.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanFillInpainter;

impl Inpainter for MeanFillInpainter {
    fn inpaint(
        &self,
        image: &RasterImage,
        region: &BinaryMask,
        _: &str,
        _: &str,
        _seed: u64,
    ) -> BackendResult<RasterImage> {
        if region.dims() != image.dims() {
            return Err(BackendError::InvalidInput("region does not match image".into()));
        }
        if region.is_empty() {
            return Err(BackendError::InvalidInput("region is empty".into()));
        }
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for (px, inside) in image.pixels().zip(region.values()) {
            if !inside {
                for c in 0..3 {
                    sum[c] += px[c];
                }
                n += 1;
            }
        }
        let fill = if n == 0 {
            [0.5; 3]
        } else {
            sum.map(|s| (s / n as f64).clamp(0.0, 1.0))
        };
        let data = image
            .pixels()
            .zip(region.values())
            .flat_map(|(px, inside)| if *inside { fill } else { px })
            .collect();
        RasterImage::new(image.height(), image.width(), data).map_err(|e| BackendError::InvalidInput(e.to_string()))
    }

    fn thread_safe(&self) -> bool {
        true
    }
}
