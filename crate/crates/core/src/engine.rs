//! The prompt-mask cycle: each iteration proposes an instance prompt,
//! segments with it, and reweights the working image by the new mask.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::Backends;
use crate::error::{Error, Result};
use crate::maskgen::{generate_mask, CandidateRecord};
use crate::patching::partition;
use crate::promptgen::{
    accumulate, draw_boxes, harvest_hypotheses, make_contrastive_image, noisy_image, select_instance_prompt,
    PromptTemplates, RegionFallback, RegionSource, ScoringView, Selection,
};
use crate::types::{
    BinaryMask, BoundingBox, CandidateSet, CycleResult, DecodeMode, InstancePrompt, IterationState, PatchHypothesis,
    RasterImage, SoftMask, TaskConfig, VisualMarker,
};

const NOISE_SIGMA: f64 = 0.1;

/// `w * (x * m) + (1 - w) * x` per pixel and channel.
///
/// Computed as `x - w * x * (1 - m)` so an all-ones mask returns the input
/// bit for bit, then clamped into `[(1 - w) x, x]` to absorb rounding.
pub fn reweight_image(image: &RasterImage, mask: &SoftMask, w: f64) -> Result<RasterImage> {
    if image.dims() != mask.dims() {
        return Err(Error::ShapeMismatch {
            expected: image.dims(),
            actual: mask.dims(),
        });
    }
    if !(w.is_finite() && (0.0..=1.0).contains(&w)) {
        return Err(Error::InvalidInput(format!("blend weight must lie in [0, 1], got {w}")));
    }
    let data = image
        .data()
        .chunks_exact(3)
        .zip(mask.values())
        .flat_map(|(px, m)| {
            let f = |x: f64| (x - w * x * (1.0 - m)).clamp((1.0 - w) * x, x);
            [f(px[0]), f(px[1]), f(px[2])]
        })
        .collect();
    Ok(RasterImage::from_raw(image.height(), image.width(), data))
}

/// Returns the one-based index of the mask closest (L1) to the pixel-wise
/// mean of all masks, with ties going to the earliest, and that mask.
pub fn select_final(masks: &[SoftMask]) -> Result<(usize, SoftMask)> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidInput("no masks to select from".into()))?;
    let dims = first.dims();
    if let Some(m) = masks.iter().find(|m| m.dims() != dims) {
        return Err(Error::ShapeMismatch {
            expected: dims,
            actual: m.dims(),
        });
    }
    let n = masks.len() as f64;
    let mut mean = vec![0.0; dims.0 * dims.1];
    for m in masks {
        for (acc, v) in mean.iter_mut().zip(m.values()) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= n;
    }
    let mut best = (0, f64::INFINITY);
    for (i, m) in masks.iter().enumerate() {
        let d: f64 = m.values().iter().zip(&mean).map(|(a, b)| (a - b).abs()).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok((best.0 + 1, masks[best.0].clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastRecord {
    pub marker: VisualMarker,
    /// Pixels handed to the inpainter; zero for other markers.
    pub region_pixels: usize,
    pub region_fallback: Option<RegionFallback>,
}

/// What one iteration saw and decided, in serializable form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub hypotheses: Vec<PatchHypothesis>,
    pub candidates: CandidateSet,
    pub contrast: ContrastRecord,
    pub selection: Selection,
    pub mask_candidates: Vec<CandidateRecord>,
    /// The fused mask was empty and the box fill was used instead.
    pub mask_fallback: bool,
    pub mask_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
#[error("cycle aborted at iteration {iteration}: {source}")]
pub struct CycleError {
    pub iteration: usize,
    #[source]
    pub source: Error,
    /// Iterations completed before the failure.
    pub partial: Vec<IterationState>,
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a combined word
    let mut z = a ^ b.rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-image, per-iteration seed so results do not depend on batch order.
pub fn iteration_seed(base: u64, image: &RasterImage, iteration: usize) -> u64 {
    mix(mix(base, image.fingerprint()), iteration as u64)
}

struct Step {
    state: IterationState,
}

#[allow(clippy::too_many_arguments)]
fn run_iteration(
    index: usize,
    working: &RasterImage,
    previous: Option<&IterationState>,
    config: &TaskConfig,
    templates: &PromptTemplates,
    backends: &Backends,
    seed: u64,
) -> Result<Step> {
    let started = Instant::now();
    let task = config.generic_prompt.as_str();
    let (h, w) = working.dims();
    let parts = partition(working, config.patch_strategy)?;
    let mode = match config.decode_mode {
        DecodeMode::Greedy => DecodeMode::Greedy,
        DecodeMode::Sampled { .. } => DecodeMode::Sampled { seed },
    };
    let hypotheses = harvest_hypotheses(&parts.patches, templates, task, backends, mode)?;
    let candidates = accumulate(&hypotheses, previous.map(|p| &p.prompt), task);
    candidates.check_within(w, h)?;

    let head = &candidates.names()[0];
    let zeros;
    let (scored_image, contrast_image, contrast) = match config.visual_marker {
        VisualMarker::Inpaint => {
            let source = match previous {
                Some(p) => RegionSource::Mask(&p.mask),
                None if !candidates.boxes().is_empty() => RegionSource::Boxes(candidates.boxes()),
                None => {
                    zeros = SoftMask::zeros(h, w)?;
                    RegionSource::Mask(&zeros)
                }
            };
            let sample = make_contrastive_image(
                working,
                source,
                head,
                task,
                templates,
                backends,
                config.binarize_threshold,
                seed,
            )?;
            let record = ContrastRecord {
                marker: config.visual_marker,
                region_pixels: sample.region.count(),
                region_fallback: Some(sample.fallback),
            };
            (working.clone(), Some(sample.image), record)
        }
        VisualMarker::Noise => (
            working.clone(),
            Some(noisy_image(working, NOISE_SIGMA, seed)?),
            ContrastRecord {
                marker: config.visual_marker,
                region_pixels: 0,
                region_fallback: None,
            },
        ),
        VisualMarker::BoxOverlay | VisualMarker::None => {
            let shown = if config.visual_marker == VisualMarker::BoxOverlay {
                draw_boxes(working, candidates.boxes())?
            } else {
                working.clone()
            };
            (
                shown,
                None,
                ContrastRecord {
                    marker: config.visual_marker,
                    region_pixels: 0,
                    region_fallback: None,
                },
            )
        }
    };

    let regions: Vec<BoundingBox> = if index > 1 && config.patch_vcr {
        parts.patches.iter().map(|p| p.spec.crop).collect()
    } else {
        vec![BoundingBox::full(w, h)?]
    };
    let caption = hypotheses
        .iter()
        .find(|hyp| hyp.scale.is_whole())
        .map(|hyp| hyp.caption.as_str())
        .unwrap_or("");
    let view = ScoringView {
        image: &scored_image,
        contrast: contrast_image.as_ref(),
        alpha: config.alpha,
        caption,
    };
    let selection = select_instance_prompt(&view, &regions, &candidates, templates, task, backends)?;
    let prompt = selection.prompt.clone();

    let outcome = generate_mask(&parts.patches, &prompt, working, config.fusion, backends)?;
    let (mask, mask_fallback) = match outcome.mask {
        Some(m) if !m.is_empty() => (m, false),
        _ => {
            log::warn!("iteration {index}: empty mask, using the box {}", prompt.bbox);
            (BinaryMask::from_box(h, w, &prompt.bbox)?.to_soft(), true)
        }
    };

    let record = IterationRecord {
        index,
        hypotheses,
        candidates,
        contrast,
        selection,
        mask_candidates: outcome.candidates,
        mask_fallback,
        mask_mean: mask.mean(),
        elapsed_ms: config.record_timing.then(|| started.elapsed().as_secs_f64() * 1e3),
    };
    Ok(Step {
        state: IterationState {
            index,
            image: working.clone(),
            mask,
            prompt,
            contrastive_image: contrast_image.unwrap_or(scored_image),
            record,
        },
    })
}

/// Runs the full cycle on one image.
pub fn run_cycle(
    image: &RasterImage,
    config: &TaskConfig,
    templates: &PromptTemplates,
    backends: &Backends,
) -> std::result::Result<CycleResult, CycleError> {
    let abort = |iteration, source, partial| CycleError {
        iteration,
        source,
        partial,
    };
    config.validate().map_err(|e| abort(0, e, Vec::new()))?;
    let mut states: Vec<IterationState> = Vec::with_capacity(config.iterations);
    let mut working = image.clone();
    for index in 1..=config.iterations {
        let seed = iteration_seed(config.seed, image, index);
        let step = run_iteration(index, &working, states.last(), config, templates, backends, seed);
        let step = match step {
            Ok(s) => s,
            Err(e) => return Err(abort(index, e, states)),
        };
        let reweighted = reweight_image(&working, &step.state.mask, config.blend_weight);
        states.push(step.state);
        working = match reweighted {
            Ok(img) => img,
            Err(e) => return Err(abort(index, e, states)),
        };
    }
    let masks: Vec<SoftMask> = states.iter().map(|s| s.mask.clone()).collect();
    let (selected_index, final_mask) = match select_final(&masks) {
        Ok(r) => r,
        Err(e) => return Err(abort(config.iterations, e, states)),
    };
    Ok(CycleResult {
        iterations: states,
        selected_index,
        final_mask,
    })
}

/// Serializable per-image trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub image: String,
    pub config: TaskConfig,
    pub iterations: Vec<IterationRecord>,
    pub prompts: Vec<InstancePrompt>,
    /// One-based; absent when the cycle aborted.
    pub selected_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trace {
    pub fn from_outcome(
        image: &str,
        config: &TaskConfig,
        outcome: &std::result::Result<CycleResult, CycleError>,
    ) -> Self {
        let (states, selected, error) = match outcome {
            Ok(r) => (&r.iterations, Some(r.selected_index), None),
            Err(e) => (&e.partial, None, Some(e.to_string())),
        };
        Trace {
            image: image.to_string(),
            config: config.clone(),
            iterations: states.iter().map(|s| s.record.clone()).collect(),
            prompts: states.iter().map(|s| s.prompt.clone()).collect(),
            selected_index: selected,
            error,
        }
    }
}

/// Runs one cycle per image on a pool of `workers` threads. Results come
/// back in input order.
pub fn run_batch(
    images: &[(String, RasterImage)],
    config: &TaskConfig,
    templates: &PromptTemplates,
    backends: &Backends,
    workers: usize,
) -> Result<Vec<std::result::Result<CycleResult, CycleError>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        images
            .par_iter()
            .map(|(name, img)| {
                log::info!("processing {name}");
                run_cycle(img, config, templates, backends)
            })
            .collect()
    }))
}
