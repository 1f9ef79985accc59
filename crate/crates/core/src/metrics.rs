//! Evaluation measures for soft predictions against binary ground truth:
//! MAE, adaptive F-measure, mean E-measure, S-measure and mIoU.
//!
//! Predictions are used as given (no min-max rescaling).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BinaryMask, SoftMask};

const EPS: f64 = f64::EPSILON;
const BETA2: f64 = 0.3;

fn check(pred: &SoftMask, gt: &BinaryMask) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(Error::ShapeMismatch {
            expected: gt.dims(),
            actual: pred.dims(),
        });
    }
    Ok(())
}

pub fn mae(pred: &SoftMask, gt: &BinaryMask) -> Result<f64> {
    check(pred, gt)?;
    let total: f64 = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| (p - f64::from(u8::from(*g))).abs())
        .sum();
    Ok(total / pred.values().len() as f64)
}

/// F-measure with beta^2 = 0.3 after binarizing at `min(2 * mean, 1)`.
/// Undefined when the ground truth has no foreground.
pub fn f_beta_adaptive(pred: &SoftMask, gt: &BinaryMask) -> Result<f64> {
    check(pred, gt)?;
    if gt.is_empty() {
        return Err(Error::Undefined(
            "F-measure needs foreground in the ground truth".into(),
        ));
    }
    let threshold = (2.0 * pred.mean()).min(1.0);
    let (mut tp, mut predicted) = (0usize, 0usize);
    for (p, g) in pred.values().iter().zip(gt.values()) {
        if *p >= threshold {
            predicted += 1;
            if *g {
                tp += 1;
            }
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / predicted as f64;
    let recall = tp as f64 / gt.count() as f64;
    Ok((1.0 + BETA2) * precision * recall / (BETA2 * precision + recall))
}

fn enhanced(a: f64, b: f64) -> f64 {
    let norm = a * a + b * b;
    let align = if norm == 0.0 { 0.0 } else { 2.0 * a * b / norm };
    (align + 1.0).powi(2) / 4.0
}

/// Mean enhanced-alignment score over the 255 thresholds `k / 255`,
/// `k = 1..=255`. A pixel is foreground at threshold `k` when
/// `pred * 255 >= k`.
pub fn e_measure(pred: &SoftMask, gt: &BinaryMask) -> Result<f64> {
    check(pred, gt)?;
    let n = pred.values().len();
    let gt_fg = gt.count();
    // level[v] = pixels whose quantized prediction is exactly v
    let mut fg_hist = [0usize; 256];
    let mut bg_hist = [0usize; 256];
    for (p, g) in pred.values().iter().zip(gt.values()) {
        let level = (p * 255.0).floor().clamp(0.0, 255.0) as usize;
        if *g {
            fg_hist[level] += 1;
        } else {
            bg_hist[level] += 1;
        }
    }
    let (mut fg_fg, mut fg_bg) = (0usize, 0usize);
    let mut total = 0.0;
    for k in (1..=255).rev() {
        fg_fg += fg_hist[k];
        fg_bg += bg_hist[k];
        let pred_fg = fg_fg + fg_bg;
        let pred_bg = n - pred_fg;
        let sum = if gt_fg == 0 {
            pred_bg as f64
        } else if gt_fg == n {
            pred_fg as f64
        } else {
            let bg_fg = gt_fg - fg_fg;
            let bg_bg = pred_bg - bg_fg;
            let mean_pred = pred_fg as f64 / n as f64;
            let mean_gt = gt_fg as f64 / n as f64;
            let (pf, pb) = (1.0 - mean_pred, -mean_pred);
            let (gf, gb) = (1.0 - mean_gt, -mean_gt);
            enhanced(pf, gf) * fg_fg as f64
                + enhanced(pf, gb) * fg_bg as f64
                + enhanced(pb, gf) * bg_fg as f64
                + enhanced(pb, gb) * bg_bg as f64
        };
        total += sum;
    }
    Ok(total / (255.0 * n as f64))
}

/// Sums for one quadrant. Means come from a first pass and centered
/// moments from a second, so constant regions give exact zeros.
#[derive(Default)]
struct Region {
    n: f64,
    sx: f64,
    sy: f64,
    vx: f64,
    vy: f64,
    cxy: f64,
}

impl Region {
    fn ssim(&self) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        let mx = self.sx / self.n;
        let my = self.sy / self.n;
        let denom = self.n - 1.0 + EPS;
        let (vx, vy, cxy) = (self.vx / denom, self.vy / denom, self.cxy / denom);
        let alpha = 4.0 * mx * my * cxy;
        let beta = (mx * mx + my * my) * (vx + vy);
        if alpha != 0.0 {
            alpha / (beta + EPS)
        } else if beta == 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

fn s_object(sum: f64, sum_sq: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mean = sum / nf;
    let sigma = if n > 1 {
        ((sum_sq - nf * mean * mean).max(0.0) / (nf - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + sigma + EPS)
}

/// Structure measure mixing object-aware and region-aware similarity
/// equally.
pub fn s_measure(pred: &SoftMask, gt: &BinaryMask) -> Result<f64> {
    check(pred, gt)?;
    let (h, w) = gt.dims();
    let n = h * w;
    let fg = gt.count();
    let mean_gt = fg as f64 / n as f64;
    if fg == 0 {
        return Ok(1.0 - pred.mean());
    }
    if fg == n {
        return Ok(pred.mean());
    }

    // object term
    let (mut fs, mut fss, mut bs, mut bss) = (0.0, 0.0, 0.0, 0.0);
    let (mut cx, mut cy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let p = pred.get(x, y);
            if gt.get(x, y) {
                fs += p;
                fss += p * p;
                cx += x as f64;
                cy += y as f64;
            } else {
                bs += 1.0 - p;
                bss += (1.0 - p) * (1.0 - p);
            }
        }
    }
    let object = mean_gt * s_object(fs, fss, fg) + (1.0 - mean_gt) * s_object(bs, bss, n - fg);

    // region term, split at the foreground centroid
    let sx = (cx / fg as f64).round_ties_even() as usize + 1;
    let sy = (cy / fg as f64).round_ties_even() as usize + 1;
    let quadrant = |x: usize, y: usize| usize::from(x >= sx) + 2 * usize::from(y >= sy);
    let label = |x: usize, y: usize| f64::from(u8::from(gt.get(x, y)));
    let mut parts: [Region; 4] = Default::default();
    for y in 0..h {
        for x in 0..w {
            let r = &mut parts[quadrant(x, y)];
            r.n += 1.0;
            r.sx += pred.get(x, y);
            r.sy += label(x, y);
        }
    }
    let means: Vec<(f64, f64)> = parts
        .iter()
        .map(|r| {
            if r.n > 0.0 {
                (r.sx / r.n, r.sy / r.n)
            } else {
                (0.0, 0.0)
            }
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let q = quadrant(x, y);
            let dx = pred.get(x, y) - means[q].0;
            let dy = label(x, y) - means[q].1;
            let r = &mut parts[q];
            r.vx += dx * dx;
            r.vy += dy * dy;
            r.cxy += dx * dy;
        }
    }
    let area = n as f64;
    let w1 = (sx * sy) as f64 / area;
    let w2 = (sy * (w - sx.min(w))) as f64 / area;
    let w3 = ((h - sy.min(h)) * sx) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let region = w1 * parts[0].ssim() + w2 * parts[1].ssim() + w3 * parts[2].ssim() + w4 * parts[3].ssim();

    Ok((0.5 * object + 0.5 * region).max(0.0))
}

/// Mean IoU over classes; classes whose union is empty are skipped.
pub fn miou(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidInput(format!(
            "{} predicted classes for {} ground-truth classes",
            preds.len(),
            gts.len()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (p, g) in preds.iter().zip(gts) {
        if p.dims() != g.dims() {
            return Err(Error::ShapeMismatch {
                expected: g.dims(),
                actual: p.dims(),
            });
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in p.values().iter().zip(g.values()) {
            inter += usize::from(*a && *b);
            union += usize::from(*a || *b);
        }
        if union > 0 {
            total += inter as f64 / union as f64;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::Undefined("every class has an empty union".into()));
    }
    Ok(total / counted as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    pub mae: f64,
    /// Absent when the ground truth has no foreground.
    pub f_beta: Option<f64>,
    pub e_phi: f64,
    pub s_alpha: f64,
}

pub fn evaluate(name: &str, pred: &SoftMask, gt: &BinaryMask) -> Result<ImageMetrics> {
    let f_beta = match f_beta_adaptive(pred, gt) {
        Ok(f) => Some(f),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ImageMetrics {
        name: name.to_string(),
        mae: mae(pred, gt)?,
        f_beta,
        e_phi: e_measure(pred, gt)?,
        s_alpha: s_measure(pred, gt)?,
    })
}

/// Dataset-level means of the per-image measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub f_beta: f64,
    pub e_phi: f64,
    pub s_alpha: f64,
    /// Images with no ground-truth foreground, left out of `f_beta`.
    pub f_beta_skipped: usize,
    pub per_image: Vec<ImageMetrics>,
}

impl MetricReport {
    pub fn from_images(per_image: Vec<ImageMetrics>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::Undefined("no evaluated images".into()));
        }
        let n = per_image.len() as f64;
        let mean = |f: fn(&ImageMetrics) -> f64| per_image.iter().map(f).sum::<f64>() / n;
        let fs: Vec<f64> = per_image.iter().filter_map(|m| m.f_beta).collect();
        Ok(Self {
            mae: mean(|m| m.mae),
            f_beta: if fs.is_empty() {
                0.0
            } else {
                fs.iter().sum::<f64>() / fs.len() as f64
            },
            e_phi: mean(|m| m.e_phi),
            s_alpha: mean(|m| m.s_alpha),
            f_beta_skipped: per_image.len() - fs.len(),
            per_image,
        })
    }

    /// Fixed-width text table, one row per image plus the mean.
    pub fn to_table(&self) -> String {
        let width = self.per_image.iter().map(|m| m.name.len()).max().unwrap_or(0).max(5);
        let mut out = format!(
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}\n",
            "image", "M", "F_beta", "E_phi", "S_alpha"
        );
        for m in &self.per_image {
            let f = m.f_beta.map_or_else(|| "-".to_string(), |f| format!("{f:.4}"));
            out += &format!(
                "{:<width$}  {:>7.4}  {:>7}  {:>7.4}  {:>7.4}\n",
                m.name, m.mae, f, m.e_phi, m.s_alpha
            );
        }
        out += &format!(
            "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}\n",
            "mean", self.mae, self.f_beta, self.e_phi, self.s_alpha
        );
        out
    }
}
