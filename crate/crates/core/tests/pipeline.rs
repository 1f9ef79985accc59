//! End-to-end behaviour of the cycle with scripted and scene mocks.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::*;
use promac::backends::mock::{MeanFillInpainter, MockSegmenter, ScriptedMllm, ScriptedScorer};
use promac::backends::scene::{scene_backends, SceneModel};
use promac::backends::{Backends, MultimodalLlm, TokenId, TokenLogits};
use promac::error::BackendError;
use promac::harness::synth;
use promac::metrics::s_measure;
use promac::promptgen::PromptTemplates;
use promac::{run_batch, run_cycle, DecodeMode, Error, RasterImage, TaskConfig, Trace, VisualMarker};

fn names(result: &promac::CycleResult) -> Vec<String> {
    result.iterations.iter().map(|s| s.prompt.name.clone()).collect()
}

#[test]
fn contrast_recovers_the_object_name() {
    let result = run_cycle(
        &hallucination_image(),
        &TaskConfig::default(),
        &PromptTemplates::default(),
        &hallucination_backends(),
    )
    .unwrap();
    assert_eq!(names(&result), vec!["caterpillar"; 4]);

    let first = &result.iterations[0].record;
    let candidates: Vec<&str> = first.candidates.names().iter().map(|p| p.foreground()).collect();
    assert_eq!(candidates, vec!["leaf", "caterpillar"]);
    // only the whole image reported a box, so the inpainted region is that box
    assert_eq!(first.contrast.region_pixels, caterpillar_box().area());
    let scores = &first.selection.name_scores;
    assert!(scores[1] > scores[0], "{scores:?}");
    assert_eq!(result.iterations[0].prompt.bbox, caterpillar_box());
}

#[test]
fn plain_scoring_keeps_the_hallucination() {
    let templates = PromptTemplates::default();
    let backends = hallucination_backends();
    for cfg in [
        TaskConfig {
            visual_marker: VisualMarker::None,
            ..TaskConfig::default()
        },
        TaskConfig {
            alpha: 0.0,
            ..TaskConfig::default()
        },
    ] {
        let result = run_cycle(&hallucination_image(), &cfg, &templates, &backends).unwrap();
        assert_eq!(result.iterations[0].prompt.name, "leaf", "{:?}", cfg.visual_marker);
    }
}

#[test]
fn whole_frame_scoring_also_recovers_the_object() {
    let cfg = TaskConfig {
        patch_vcr: false,
        ..TaskConfig::default()
    };
    let result = run_cycle(
        &hallucination_image(),
        &cfg,
        &PromptTemplates::default(),
        &hallucination_backends(),
    )
    .unwrap();
    assert_eq!(names(&result), vec!["caterpillar"; 4]);
}

#[test]
fn scene_mocks_segment_the_synthetic_object() {
    let backends = scene_backends(SceneModel::default());
    for s in synth::generate(3, 64, 21).unwrap() {
        let result = run_cycle(&s.image, &TaskConfig::default(), &PromptTemplates::default(), &backends).unwrap();
        assert_eq!(result.iterations.len(), 4);
        assert!((1..=4).contains(&result.selected_index));
        assert_eq!(result.iterations[result.selected_index - 1].prompt.name, "caterpillar");
        let s_alpha = s_measure(&result.final_mask, &s.gt).unwrap();
        assert!(s_alpha > 0.9, "{}: S = {s_alpha}", s.stem);
    }
}

#[test]
fn polyp_preset_runs_six_iterations() {
    let cfg = TaskConfig::preset(promac::TaskPreset::Polyp);
    let s = synth::sample(0, 48, 2).unwrap();
    let result = run_cycle(
        &s.image,
        &cfg,
        &PromptTemplates::default(),
        &scene_backends(SceneModel::default()),
    )
    .unwrap();
    assert_eq!(result.iterations.len(), 6);
    assert_eq!(cfg.generic_prompt, "polyp");
}

/// Answers normally for the first `budget` completions, then fails.
struct Exhausting {
    inner: ScriptedMllm,
    budget: usize,
    calls: AtomicUsize,
}

impl MultimodalLlm for Exhausting {
    fn complete(&self, image: &RasterImage, prompt: &str, mode: DecodeMode) -> Result<String, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.budget {
            return Err(BackendError::InvalidInput("quota exhausted".into()));
        }
        self.inner.complete(image, prompt, mode)
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, BackendError> {
        self.inner.tokenize(text)
    }

    fn score_tokens(&self, image: &RasterImage, prompt: &str, tokens: &[TokenId]) -> Result<TokenLogits, BackendError> {
        self.inner.score_tokens(image, prompt, tokens)
    }

    fn thread_safe(&self) -> bool {
        true
    }
}

#[test]
fn failure_after_first_iteration_keeps_partial_trace() {
    // five patches times caption, box and name queries
    let mllm = Exhausting {
        inner: ScriptedMllm::new(&["leaf", "caterpillar"]).respond(
            promac::backends::mock::ImageMatcher::Any,
            Some("name of"),
            &["caterpillar, leaf"],
        ),
        budget: 15,
        calls: AtomicUsize::new(0),
    };
    let backends = Backends::new(
        Arc::new(mllm),
        Arc::new(MockSegmenter::BoxFill),
        Arc::new(ScriptedScorer::new()),
        Arc::new(MeanFillInpainter),
    );
    let image = hallucination_image();
    let cfg = TaskConfig::default();
    let outcome = run_cycle(&image, &cfg, &PromptTemplates::default(), &backends);
    let Err(err) = outcome.as_ref() else {
        panic!("cycle should abort")
    };
    assert_eq!(err.iteration, 2);
    assert_eq!(err.partial.len(), 1);
    assert!(matches!(err.source, Error::DegenerateInput(_)), "{}", err.source);

    let trace = Trace::from_outcome("x", &cfg, &outcome);
    assert_eq!(trace.iterations.len(), 1);
    assert!(trace.selected_index.is_none());
    assert!(trace.error.unwrap().contains("iteration 2"));
}

#[test]
fn batch_matches_single_runs() {
    let backends = scene_backends(SceneModel::default());
    let templates = PromptTemplates::default();
    let cfg = TaskConfig {
        seed: 5,
        ..TaskConfig::default()
    };
    let images: Vec<(String, RasterImage)> = synth::generate(4, 40, 9)
        .unwrap()
        .into_iter()
        .map(|s| (s.stem, s.image))
        .collect();
    let batch = run_batch(&images, &cfg, &templates, &backends, 3).unwrap();
    for ((_, img), got) in images.iter().zip(batch) {
        let want = run_cycle(img, &cfg, &templates, &backends).unwrap();
        let got = got.unwrap();
        assert_eq!(got.final_mask, want.final_mask);
        assert_eq!(got.selected_index, want.selected_index);
    }
}

#[test]
fn traces_round_trip_through_json() {
    let cfg = TaskConfig::default();
    let outcome = run_cycle(
        &hallucination_image(),
        &cfg,
        &PromptTemplates::default(),
        &hallucination_backends(),
    );
    let trace = Trace::from_outcome("scene", &cfg, &outcome);
    let text = serde_json::to_string(&trace).unwrap();
    let back: Trace = serde_json::from_str(&text).unwrap();
    assert_eq!(back, trace);
    assert!(!text.contains("elapsed_ms"));
}
