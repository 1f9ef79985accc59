//! Brute-force reference implementations and fixtures shared by the
//! integration and acceptance tests. Written directly from the textbook
//! definitions, without the histogram and running-sum shortcuts used in
//! the library.
#![allow(dead_code)]

use std::sync::Arc;

use promac::backends::mock::{ImageMatcher, MeanFillInpainter, MockSegmenter, ScriptedMllm, ScriptedScorer};
use promac::backends::scene::{CATERPILLAR_RGB, LEAF_RGB};
use promac::backends::Backends;
use promac::{BinaryMask, BoundingBox, RasterImage, SoftMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = f64::EPSILON;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- contrastive decoding ----

pub fn softmax_oracle(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

// ---- fusion ----

pub fn fuse_oracle(masks: &[SoftMask], scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let total: f64 = scores.iter().map(|s| s - min).sum();
    let weights: Vec<f64> = if total > 0.0 {
        scores.iter().map(|s| (s - min) / total).collect()
    } else {
        vec![1.0 / scores.len() as f64; scores.len()]
    };
    let (h, w) = masks[0].dims();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let v: f64 = masks.iter().zip(&weights).map(|(m, wt)| wt * m.get(x, y)).sum();
            out.push(v.clamp(0.0, 1.0));
        }
    }
    out
}

// ---- final selection ----

pub fn select_oracle(masks: &[SoftMask]) -> usize {
    let (h, w) = masks[0].dims();
    let n = masks.len() as f64;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, m) in masks.iter().enumerate() {
        let mut d = 0.0;
        for y in 0..h {
            for x in 0..w {
                let mean = masks.iter().map(|k| k.get(x, y)).sum::<f64>() / n;
                d += (m.get(x, y) - mean).abs();
            }
        }
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best + 1
}

// ---- metrics ----

fn cells(pred: &SoftMask, gt: &BinaryMask) -> Vec<(f64, bool)> {
    let (h, w) = gt.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            out.push((pred.get(x, y), gt.get(x, y)));
        }
    }
    out
}

pub fn mae_oracle(pred: &SoftMask, gt: &BinaryMask) -> f64 {
    let c = cells(pred, gt);
    c.iter()
        .map(|(p, g)| (p - if *g { 1.0 } else { 0.0 }).abs())
        .sum::<f64>()
        / c.len() as f64
}

pub fn f_oracle(pred: &SoftMask, gt: &BinaryMask) -> Option<f64> {
    let c = cells(pred, gt);
    if !c.iter().any(|(_, g)| *g) {
        return None;
    }
    let mean = c.iter().map(|(p, _)| p).sum::<f64>() / c.len() as f64;
    let thr = if 2.0 * mean > 1.0 { 1.0 } else { 2.0 * mean };
    let predicted: Vec<bool> = c.iter().map(|(p, _)| *p >= thr).collect();
    let tp = c.iter().zip(&predicted).filter(|((_, g), p)| *g && **p).count() as f64;
    if tp == 0.0 {
        return Some(0.0);
    }
    let precision = tp / predicted.iter().filter(|p| **p).count() as f64;
    let recall = tp / c.iter().filter(|(_, g)| *g).count() as f64;
    Some(1.3 * precision * recall / (0.3 * precision + recall))
}

/// Enhanced alignment built from explicit bias-matrices at each threshold.
pub fn e_oracle(pred: &SoftMask, gt: &BinaryMask) -> f64 {
    let c = cells(pred, gt);
    let n = c.len() as f64;
    let g: Vec<f64> = c.iter().map(|(_, g)| if *g { 1.0 } else { 0.0 }).collect();
    let gt_sum: f64 = g.iter().sum();
    let mut scores = Vec::new();
    for k in 1..=255u32 {
        let fm: Vec<f64> = c
            .iter()
            .map(|(p, _)| if p * 255.0 >= k as f64 { 1.0 } else { 0.0 })
            .collect();
        let enhanced: Vec<f64> = if gt_sum == 0.0 {
            fm.iter().map(|v| 1.0 - v).collect()
        } else if gt_sum == n {
            fm.clone()
        } else {
            let mu_fm = fm.iter().sum::<f64>() / n;
            let mu_gt = gt_sum / n;
            fm.iter()
                .zip(&g)
                .map(|(f, gv)| {
                    let a = f - mu_fm;
                    let b = gv - mu_gt;
                    let denom = a * a + b * b;
                    let align = if denom == 0.0 { 0.0 } else { 2.0 * a * b / denom };
                    (align + 1.0) * (align + 1.0) / 4.0
                })
                .collect()
        };
        scores.push(enhanced.iter().sum::<f64>() / n);
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn ssim_oracle(p: &[f64], g: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let n = p.len() as f64;
    let (x, y) = (mean(p), mean(g));
    let sx = p.iter().map(|v| (v - x) * (v - x)).sum::<f64>() / (n - 1.0 + EPS);
    let sy = g.iter().map(|v| (v - y) * (v - y)).sum::<f64>() / (n - 1.0 + EPS);
    let sxy = p.iter().zip(g).map(|(a, b)| (a - x) * (b - y)).sum::<f64>() / (n - 1.0 + EPS);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn object_score(values: &[f64]) -> f64 {
    let x = mean(values);
    let sigma = if values.len() > 1 {
        (values.iter().map(|v| (v - x) * (v - x)).sum::<f64>() / (values.len() as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * x / (x * x + 1.0 + sigma + EPS)
}

pub fn s_oracle(pred: &SoftMask, gt: &BinaryMask) -> f64 {
    let (h, w) = gt.dims();
    let c = cells(pred, gt);
    let n = c.len() as f64;
    let y_mean = c.iter().filter(|(_, g)| *g).count() as f64 / n;
    if y_mean == 0.0 {
        return 1.0 - c.iter().map(|(p, _)| p).sum::<f64>() / n;
    }
    if y_mean == 1.0 {
        return c.iter().map(|(p, _)| p).sum::<f64>() / n;
    }
    let fg: Vec<f64> = c.iter().filter(|(_, g)| *g).map(|(p, _)| *p).collect();
    let bg: Vec<f64> = c.iter().filter(|(_, g)| !*g).map(|(p, _)| 1.0 - p).collect();
    let object = y_mean * object_score(&fg) + (1.0 - y_mean) * object_score(&bg);

    let coords: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|(x, y)| gt.get(*x, *y))
        .collect();
    let cx = coords.iter().map(|(x, _)| *x as f64).sum::<f64>() / coords.len() as f64;
    let cy = coords.iter().map(|(_, y)| *y as f64).sum::<f64>() / coords.len() as f64;
    let xs = cx.round_ties_even() as usize + 1;
    let ys = cy.round_ties_even() as usize + 1;
    let mut regions: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); 4];
    for y in 0..h {
        for x in 0..w {
            let q = match (x < xs, y < ys) {
                (true, true) => 0,
                (false, true) => 1,
                (true, false) => 2,
                (false, false) => 3,
            };
            regions[q].0.push(pred.get(x, y));
            regions[q].1.push(if gt.get(x, y) { 1.0 } else { 0.0 });
        }
    }
    let area = (h * w) as f64;
    let w1 = (xs * ys) as f64 / area;
    let w2 = ((w - xs.min(w)) * ys) as f64 / area;
    let w3 = (xs * (h - ys.min(h))) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let region = [w1, w2, w3, w4]
        .iter()
        .zip(&regions)
        .map(|(wt, (p, g))| wt * ssim_oracle(p, g))
        .sum::<f64>();
    let s = 0.5 * object + 0.5 * region;
    if s < 0.0 {
        0.0
    } else {
        s
    }
}

// ---- random fixtures ----

/// Predictions of mixed character: continuous, 8-bit quantized, binary,
/// constant.
pub fn random_pred(r: &mut ChaCha8Rng, h: usize, w: usize) -> SoftMask {
    let kind = r.random_range(0..5);
    let c: f64 = r.random();
    SoftMask::from_fn(h, w, |_, _| match kind {
        0 => r.random(),
        1 => r.random_range(0..=255) as f64 / 255.0,
        2 => f64::from(u8::from(r.random_bool(0.4))),
        3 => c,
        _ => r.random::<f64>().powi(3),
    })
    .unwrap()
}

/// Ground truth as a random rectangle blob, noise, empty or full.
pub fn random_gt(r: &mut ChaCha8Rng, h: usize, w: usize) -> BinaryMask {
    match r.random_range(0..10) {
        0 => BinaryMask::empty(h, w).unwrap(),
        1 => BinaryMask::from_fn(h, w, |_, _| true).unwrap(),
        2..=4 => BinaryMask::from_fn(h, w, |_, _| r.random_bool(0.3)).unwrap(),
        _ => {
            let x0 = r.random_range(0..w - 1);
            let y0 = r.random_range(0..h - 1);
            let x1 = r.random_range(x0 + 1..=w);
            let y1 = r.random_range(y0 + 1..=h);
            BinaryMask::from_fn(h, w, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y)).unwrap()
        }
    }
}

/// Predictions correlated with the ground truth, for realistic values.
pub fn noisy_copy(r: &mut ChaCha8Rng, gt: &BinaryMask, noise: f64) -> SoftMask {
    let (h, w) = gt.dims();
    SoftMask::from_fn(h, w, |x, y| {
        let base = if gt.get(x, y) { 1.0 } else { 0.0 };
        (base + r.random_range(-noise..=noise)).clamp(0.0, 1.0)
    })
    .unwrap()
}

pub fn random_image(r: &mut ChaCha8Rng, h: usize, w: usize) -> RasterImage {
    RasterImage::from_fn(h, w, |_, _| [r.random(), r.random(), r.random()]).unwrap()
}

pub fn random_soft(r: &mut ChaCha8Rng, h: usize, w: usize) -> SoftMask {
    SoftMask::from_fn(h, w, |_, _| r.random()).unwrap()
}

// ---- scripted hallucination scenario ----

pub const SCENE: usize = 64;
/// Caterpillar occupies this box; it falls in the bottom and right halves.
pub fn caterpillar_box() -> BoundingBox {
    BoundingBox::new(40, 40, 56, 52).unwrap()
}

pub fn hallucination_image() -> RasterImage {
    let b = caterpillar_box();
    RasterImage::from_fn(
        SCENE,
        SCENE,
        |x, y| if b.contains(x, y) { CATERPILLAR_RGB } else { LEAF_RGB },
    )
    .unwrap()
}

fn caterpillar_visible() -> ImageMatcher {
    ImageMatcher::Chroma {
        rgb: CATERPILLAR_RGB,
        tolerance: 0.05,
        min_fraction: 0.001,
    }
}

/// The whole image is described as a leaf; only a half patch reveals the
/// caterpillar. Logits on any image showing the caterpillar are
/// `leaf 3, caterpillar 2`; with the caterpillar inpainted away they are
/// `leaf 3, caterpillar 0`. Plain scoring therefore prefers "leaf" and the
/// contrastive combination `2 * orig - contrast` gives `leaf 3,
/// caterpillar 4`.
pub fn hallucination_backends() -> Backends {
    let whole = ImageMatcher::Size {
        height: SCENE,
        width: SCENE,
    };
    let b = caterpillar_box();
    let whole_box = format!("[{}, {}, {}, {}]", b.x_min(), b.y_min(), b.x_max(), b.y_max());
    let mllm = ScriptedMllm::new(&["leaf", "caterpillar", "branch"])
        .respond(whole.clone(), Some("name of"), &["leaf, branch"])
        .respond(whole.clone(), Some("bounding box"), &[whole_box.as_str()])
        .respond(caterpillar_visible(), Some("name of"), &["caterpillar, leaf"])
        .respond(ImageMatcher::Any, Some("name of"), &["leaf, branch"])
        .respond(ImageMatcher::Any, Some("bounding box"), &["none"])
        .respond(ImageMatcher::Any, None, &["a green plant"])
        .word_logits(caterpillar_visible(), None, &[("leaf", 3.0), ("caterpillar", 2.0)])
        .word_logits(ImageMatcher::Any, None, &[("leaf", 3.0), ("caterpillar", 0.0)]);
    Backends::new(
        Arc::new(mllm),
        Arc::new(MockSegmenter::BoxFill),
        Arc::new(ScriptedScorer::new().default_score(0.5)),
        Arc::new(MeanFillInpainter),
    )
}
