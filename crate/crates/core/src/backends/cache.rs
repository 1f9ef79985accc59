//! On-disk memoization of backend responses, keyed by a hash of the inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    BackendResult, Backends, HeatMap, Inpainter, MultimodalLlm, PointPrompt, Segmenter, TextImageScorer, TokenId,
    TokenLogits,
};
use crate::types::{BinaryMask, BoundingBox, DecodeMode, RasterImage, SoftMask};

/// Environment variable naming the cache directory.
pub const CACHE_ENV: &str = "PROMAC_CACHE";

#[derive(Debug)]
pub struct DiskCache {
    root: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Grid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn from_env() -> Option<Self> {
        let dir = std::env::var_os(CACHE_ENV)?;
        match Self::new(PathBuf::from(dir)) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("cannot use {CACHE_ENV}: {e}");
                None
            }
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn key(parts: &[&[u8]]) -> String {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        let bytes = fs::read(self.root.join(format!("{key}.json"))).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    fn put<T: Serialize>(&self, key: &str, value: &T) {
        let path = self.root.join(format!("{key}.json"));
        let tmp = self.root.join(format!("{key}.{}.tmp", std::process::id()));
        let write = serde_json::to_vec(value)
            .map_err(std::io::Error::other)
            .and_then(|bytes| fs::write(&tmp, bytes))
            .and_then(|_| fs::rename(&tmp, &path));
        if let Err(e) = write {
            log::warn!("cache write failed for {key}: {e}");
        }
    }

    fn memo<T, F>(&self, parts: &[&[u8]], compute: F) -> BackendResult<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> BackendResult<T>,
    {
        let key = Self::key(parts);
        if let Some(hit) = self.get(&key) {
            return Ok(hit);
        }
        let value = compute()?;
        self.put(&key, &value);
        Ok(value)
    }
}

fn image_key(image: &RasterImage) -> [u8; 8] {
    image.fingerprint().to_le_bytes()
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).unwrap_or_default()
}

struct CachedMllm {
    inner: Arc<dyn MultimodalLlm>,
    cache: Arc<DiskCache>,
}

impl MultimodalLlm for CachedMllm {
    fn complete(&self, image: &RasterImage, prompt: &str, mode: DecodeMode) -> BackendResult<String> {
        self.cache.memo(
            &[b"complete", &image_key(image), prompt.as_bytes(), &to_json(&mode)],
            || self.inner.complete(image, prompt, mode),
        )
    }

    fn tokenize(&self, text: &str) -> BackendResult<Vec<TokenId>> {
        self.inner.tokenize(text)
    }

    fn score_tokens(&self, image: &RasterImage, prompt: &str, tokens: &[TokenId]) -> BackendResult<TokenLogits> {
        self.cache.memo(
            &[b"score_tokens", &image_key(image), prompt.as_bytes(), &to_json(&tokens)],
            || self.inner.score_tokens(image, prompt, tokens),
        )
    }

    fn thread_safe(&self) -> bool {
        self.inner.thread_safe()
    }
}

struct CachedSegmenter {
    inner: Arc<dyn Segmenter>,
    cache: Arc<DiskCache>,
}

impl Segmenter for CachedSegmenter {
    fn segment(
        &self,
        image: &RasterImage,
        bbox: Option<&BoundingBox>,
        points: &[PointPrompt],
    ) -> BackendResult<SoftMask> {
        let grid: Grid = self.cache.memo(
            &[b"segment", &image_key(image), &to_json(&bbox), &to_json(&points)],
            || {
                let m = self.inner.segment(image, bbox, points)?;
                Ok(Grid {
                    height: m.height(),
                    width: m.width(),
                    values: m.values().to_vec(),
                })
            },
        )?;
        SoftMask::new(grid.height, grid.width, grid.values)
            .map_err(|e| crate::error::BackendError::InvalidInput(format!("corrupt cache entry: {e}")))
    }

    fn thread_safe(&self) -> bool {
        self.inner.thread_safe()
    }
}

struct CachedScorer {
    inner: Arc<dyn TextImageScorer>,
    cache: Arc<DiskCache>,
}

impl TextImageScorer for CachedScorer {
    fn similarity(&self, image: &RasterImage, text: &str) -> BackendResult<f64> {
        self.cache
            .memo(&[b"similarity", &image_key(image), text.as_bytes()], || {
                self.inner.similarity(image, text)
            })
    }

    fn spatial_heatmap(&self, image: &RasterImage, text: &str) -> BackendResult<HeatMap> {
        self.cache.memo(&[b"heatmap", &image_key(image), text.as_bytes()], || {
            self.inner.spatial_heatmap(image, text)
        })
    }

    fn text_similarity(&self, a: &str, b: &str) -> BackendResult<f64> {
        self.cache.memo(&[b"text_similarity", a.as_bytes(), b.as_bytes()], || {
            self.inner.text_similarity(a, b)
        })
    }

    fn thread_safe(&self) -> bool {
        self.inner.thread_safe()
    }
}

struct CachedInpainter {
    inner: Arc<dyn Inpainter>,
    cache: Arc<DiskCache>,
}

impl Inpainter for CachedInpainter {
    fn inpaint(
        &self,
        image: &RasterImage,
        region: &BinaryMask,
        positive: &str,
        negative: &str,
        seed: u64,
    ) -> BackendResult<RasterImage> {
        let region_bits: Vec<u8> = region.values().iter().map(|v| u8::from(*v)).collect();
        let grid: Grid = self.cache.memo(
            &[
                b"inpaint",
                &image_key(image),
                &region_bits,
                positive.as_bytes(),
                negative.as_bytes(),
                &seed.to_le_bytes(),
            ],
            || {
                let out = self.inner.inpaint(image, region, positive, negative, seed)?;
                Ok(Grid {
                    height: out.height(),
                    width: out.width(),
                    values: out.data().to_vec(),
                })
            },
        )?;
        RasterImage::new(grid.height, grid.width, grid.values)
            .map_err(|e| crate::error::BackendError::InvalidInput(format!("corrupt cache entry: {e}")))
    }

    fn thread_safe(&self) -> bool {
        self.inner.thread_safe()
    }
}

impl Backends {
    /// Wraps every adapter so responses are memoized in `cache`.
    pub fn with_cache(self, cache: DiskCache) -> Backends {
        let cache = Arc::new(cache);
        Backends::new(
            Arc::new(CachedMllm {
                inner: self.mllm().clone(),
                cache: cache.clone(),
            }),
            Arc::new(CachedSegmenter {
                inner: self.segmenter().clone(),
                cache: cache.clone(),
            }),
            Arc::new(CachedScorer {
                inner: self.scorer().clone(),
                cache: cache.clone(),
            }),
            Arc::new(CachedInpainter {
                inner: self.inpainter().clone(),
                cache,
            }),
        )
    }
}
