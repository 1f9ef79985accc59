//! Per-patch segmentation, relevance scoring of the masked regions, and
//! score-weighted fusion into one mask per iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{Backends, HeatMap, PointPrompt};
use crate::error::{Error, Result};
use crate::patching::{reintegrate, Patch, ScaleTag};
use crate::promptgen::contrast::softmax;
use crate::types::{FusionNormalization, InstancePrompt, RasterImage, SoftMask};

#[derive(Clone, Debug, PartialEq)]
pub struct MaskCandidate {
    pub patch_id: usize,
    /// Full-image frame.
    pub mask: SoftMask,
    pub raw_score: f64,
    /// Filled in by [`fuse_masks`]; zero until then.
    pub normalized_weight: f64,
}

impl MaskCandidate {
    pub fn new(patch_id: usize, mask: SoftMask, raw_score: f64) -> Self {
        Self {
            patch_id,
            mask,
            raw_score,
            normalized_weight: 0.0,
        }
    }
}

/// Positive point at the heatmap maximum and negative point at the minimum,
/// both searched inside the patch crop. A map that is flat over the crop
/// carries no spatial information and yields no points.
pub fn point_prompts(heatmap: &HeatMap, patch: &Patch) -> Vec<PointPrompt> {
    let crop = &patch.spec.crop;
    let (px, py) = heatmap.argmax_in(crop);
    let (nx, ny) = heatmap.argmin_in(crop);
    if heatmap.get(px, py) <= heatmap.get(nx, ny) {
        return Vec::new();
    }
    vec![
        PointPrompt {
            x: px,
            y: py,
            positive: true,
        },
        PointPrompt {
            x: nx,
            y: ny,
            positive: false,
        },
    ]
}

/// Segments one patch. The patch is pasted onto a black full frame, the
/// box is clipped to the visible crop, and the mask comes back in the full
/// frame. Returns `None` when the box does not overlap the patch.
pub fn segment_patch(
    patch: &Patch,
    prompt: &InstancePrompt,
    image: &RasterImage,
    heatmap: &HeatMap,
    backends: &Backends,
) -> Result<Option<SoftMask>> {
    let Some(visible) = prompt.bbox.intersect(&patch.spec.crop) else {
        log::debug!("box {} misses patch {}", prompt.bbox, patch.spec.id);
        return Ok(None);
    };
    let framed;
    let input = if patch.spec.scale == ScaleTag::Whole {
        image
    } else {
        framed = reintegrate(&patch.spec, image)?;
        &framed
    };
    let points = point_prompts(heatmap, patch);
    Ok(Some(backends.segment(input, Some(&visible), &points)?))
}

/// Similarity between the masked image and the object name; an empty mask
/// gets the worst score.
pub fn score_mask(mask: &SoftMask, image: &RasterImage, name: &str, backends: &Backends) -> Result<f64> {
    if mask.is_empty() {
        return Ok(-1.0);
    }
    Ok(backends.similarity(&image.masked(mask)?, name)?)
}

/// Turns raw scores into weights that sum to one.
pub fn normalize_scores(scores: &[f64], how: FusionNormalization) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    match how {
        FusionNormalization::Softmax => softmax(scores),
        FusionNormalization::ShiftNormalize => {
            let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let shifted: Vec<f64> = scores.iter().map(|s| s - min).collect();
            let total: f64 = shifted.iter().sum();
            if total > 0.0 {
                shifted.iter().map(|s| s / total).collect()
            } else {
                vec![1.0 / scores.len() as f64; scores.len()]
            }
        }
    }
}

/// Weighted sum of the candidate masks, clipped to `[0, 1]`. Stores each
/// candidate's weight in `normalized_weight`.
pub fn fuse_masks(candidates: &mut [MaskCandidate], how: FusionNormalization) -> Result<SoftMask> {
    let first = candidates
        .first()
        .ok_or_else(|| Error::DegenerateInput("no mask candidates to fuse".into()))?;
    let dims = first.mask.dims();
    if let Some(c) = candidates.iter().find(|c| c.mask.dims() != dims) {
        return Err(Error::ShapeMismatch {
            expected: dims,
            actual: c.mask.dims(),
        });
    }
    if candidates.iter().any(|c| !c.raw_score.is_finite()) {
        return Err(Error::InvalidInput("mask scores must be finite".into()));
    }
    let scores: Vec<f64> = candidates.iter().map(|c| c.raw_score).collect();
    let weights = normalize_scores(&scores, how);
    let mut acc = vec![0.0; dims.0 * dims.1];
    for (c, w) in candidates.iter_mut().zip(&weights) {
        c.normalized_weight = *w;
        for (a, v) in acc.iter_mut().zip(c.mask.values()) {
            *a += w * v;
        }
    }
    for a in &mut acc {
        *a = a.clamp(0.0, 1.0);
    }
    SoftMask::new(dims.0, dims.1, acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub patch_id: usize,
    pub raw_score: f64,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct MaskOutcome {
    /// `None` when no patch produced a candidate.
    pub mask: Option<SoftMask>,
    pub candidates: Vec<CandidateRecord>,
}

/// Segments every patch, scores the results and fuses them.
pub fn generate_mask(
    patches: &[Patch],
    prompt: &InstancePrompt,
    image: &RasterImage,
    how: FusionNormalization,
    backends: &Backends,
) -> Result<MaskOutcome> {
    let heatmap = backends.spatial_heatmap(image, &prompt.name)?;
    let found: Vec<Option<MaskCandidate>> = patches
        .par_iter()
        .map(|patch| -> Result<Option<MaskCandidate>> {
            let Some(mask) = segment_patch(patch, prompt, image, &heatmap, backends)? else {
                return Ok(None);
            };
            let score = score_mask(&mask, image, &prompt.name, backends)?;
            Ok(Some(MaskCandidate::new(patch.spec.id, mask, score)))
        })
        .collect::<Result<_>>()?;
    let mut candidates: Vec<MaskCandidate> = found.into_iter().flatten().collect();
    if candidates.is_empty() {
        return Ok(MaskOutcome {
            mask: None,
            candidates: Vec::new(),
        });
    }
    let mask = fuse_masks(&mut candidates, how)?;
    let records = candidates
        .iter()
        .map(|c| CandidateRecord {
            patch_id: c.patch_id,
            raw_score: c.raw_score,
            weight: c.normalized_weight,
        })
        .collect();
    Ok(MaskOutcome {
        mask: Some(mask),
        candidates: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{ImageMatcher, MeanFillInpainter, MockSegmenter, ScriptedMllm, ScriptedScorer};
    use crate::patching::partition;
    use crate::types::{BoundingBox, PatchStrategy};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn backends(scorer: ScriptedScorer) -> Backends {
        Backends::new(
            Arc::new(ScriptedMllm::new(&["x"])),
            Arc::new(MockSegmenter::BoxFill),
            Arc::new(scorer),
            Arc::new(MeanFillInpainter),
        )
    }

    fn prompt(b: BoundingBox) -> InstancePrompt {
        InstancePrompt {
            name: "lion".into(),
            background: "grass".into(),
            bbox: b,
        }
    }

    #[test]
    fn whole_patch_box_fill() {
        let img = RasterImage::filled(20, 20, [0.5; 3]).unwrap();
        let parts = partition(&img, PatchStrategy::Original).unwrap();
        let b = backends(ScriptedScorer::new());
        let bbox = BoundingBox::new(2, 3, 8, 9).unwrap();
        let heat = b.spatial_heatmap(&img, "lion").unwrap();
        let m = segment_patch(&parts.patches[0], &prompt(bbox), &img, &heat, &b)
            .unwrap()
            .unwrap();
        assert_eq!(m.sum(), bbox.area() as f64);
    }

    #[test]
    fn box_outside_patch_is_skipped() {
        let img = RasterImage::filled(20, 20, [0.5; 3]).unwrap();
        let parts = partition(&img, PatchStrategy::OriginalHalve).unwrap();
        let top = parts
            .patches
            .iter()
            .find(|p| p.spec.scale == ScaleTag::HalfTop)
            .unwrap();
        let b = backends(ScriptedScorer::new());
        let heat = b.spatial_heatmap(&img, "lion").unwrap();
        let bbox = BoundingBox::new(0, 12, 5, 18).unwrap();
        assert!(segment_patch(top, &prompt(bbox), &img, &heat, &b).unwrap().is_none());
    }

    #[test]
    fn heatmap_peak_becomes_positive_point() {
        let img = RasterImage::filled(80, 80, [0.5; 3]).unwrap();
        let parts = partition(&img, PatchStrategy::Original).unwrap();
        let b = backends(ScriptedScorer::new().bump("lion", BoundingBox::new(30, 30, 51, 51).unwrap()));
        let heat = b.spatial_heatmap(&img, "lion").unwrap();
        let points = point_prompts(&heat, &parts.patches[0]);
        assert_eq!(
            points[0],
            PointPrompt {
                x: 40,
                y: 40,
                positive: true
            }
        );
        assert!(!points[1].positive);
    }

    #[test]
    fn flat_heatmap_gives_no_points() {
        let img = RasterImage::filled(10, 10, [0.5; 3]).unwrap();
        let parts = partition(&img, PatchStrategy::Original).unwrap();
        let b = backends(ScriptedScorer::new());
        let heat = b.spatial_heatmap(&img, "lion").unwrap();
        assert!(point_prompts(&heat, &parts.patches[0]).is_empty());
    }

    #[test]
    fn mask_scoring() {
        let img = RasterImage::filled(6, 6, [0.5; 3]).unwrap();
        let b = backends(ScriptedScorer::new().score(ImageMatcher::Fingerprint(img.fingerprint()), "lion", 0.7));
        assert_eq!(
            score_mask(&SoftMask::ones(6, 6).unwrap(), &img, "lion", &b).unwrap(),
            0.7
        );
        assert_eq!(
            score_mask(&SoftMask::zeros(6, 6).unwrap(), &img, "lion", &b).unwrap(),
            -1.0
        );
    }

    #[test]
    fn fusion_examples() {
        let ones = SoftMask::ones(4, 4).unwrap();
        let zeros = SoftMask::zeros(4, 4).unwrap();
        let mut single = vec![MaskCandidate::new(0, zeros.clone(), 0.2)];
        assert_eq!(
            fuse_masks(&mut single, FusionNormalization::ShiftNormalize).unwrap(),
            zeros
        );
        assert_eq!(single[0].normalized_weight, 1.0);

        let mut pair = vec![
            MaskCandidate::new(0, ones.clone(), 0.75),
            MaskCandidate::new(1, zeros.clone(), 0.25),
        ];
        assert_eq!(
            fuse_masks(&mut pair, FusionNormalization::ShiftNormalize).unwrap(),
            ones
        );
        assert_eq!((pair[0].normalized_weight, pair[1].normalized_weight), (1.0, 0.0));

        let half = SoftMask::filled(4, 4, 0.5).unwrap();
        let mut same = vec![
            MaskCandidate::new(0, half.clone(), 0.3),
            MaskCandidate::new(1, half.clone(), 0.3),
        ];
        assert_eq!(
            fuse_masks(&mut same, FusionNormalization::ShiftNormalize).unwrap(),
            half
        );
        assert!(fuse_masks(&mut [], FusionNormalization::ShiftNormalize).is_err());
    }

    #[test]
    fn softmax_weights_sum_to_one() {
        let w = normalize_scores(&[0.1, 0.5, -0.2], FusionNormalization::Softmax);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(w[1] > w[0] && w[0] > w[2]);
    }

    #[test]
    fn generate_mask_fuses_patch_results() {
        let img = RasterImage::filled(20, 20, [0.5; 3]).unwrap();
        let parts = partition(&img, PatchStrategy::OriginalHalve).unwrap();
        let b = backends(ScriptedScorer::new().default_score(0.4));
        let bbox = BoundingBox::new(2, 2, 8, 8).unwrap();
        let out = generate_mask(
            &parts.patches,
            &prompt(bbox),
            &img,
            FusionNormalization::ShiftNormalize,
            &b,
        )
        .unwrap();
        // whole, top and left halves see the box
        assert_eq!(out.candidates.len(), 3);
        assert_eq!(out.mask.unwrap().sum(), 36.0);
    }

    proptest! {
        #[test]
        fn unique_best_score_gets_largest_weight(scores in prop::collection::vec(-1.0f64..1.0, 2..9)) {
            let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(scores.iter().filter(|s| **s == best).count() == 1);
            let w = normalize_scores(&scores, FusionNormalization::ShiftNormalize);
            let i = scores.iter().position(|s| *s == best).unwrap();
            for (j, wj) in w.iter().enumerate() {
                if j != i {
                    prop_assert!(w[i] > *wj);
                }
            }
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
