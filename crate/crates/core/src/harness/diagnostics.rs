//! Per-iteration quality of prompts and masks: name similarity to the true
//! class, box IoU against the ground-truth rectangle, and mask metrics.

use serde::{Deserialize, Serialize};

use super::io::resize_mask;
use crate::backends::Backends;
use crate::error::Result;
use crate::metrics::{evaluate, ImageMetrics};
use crate::types::{BinaryMask, BoundingBox, CycleResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostic {
    pub iteration: usize,
    pub cos: Option<f64>,
    pub iou: f64,
    pub metrics: ImageMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub iteration: usize,
    /// Absent when no class names were supplied.
    pub cos: Option<f64>,
    pub iou: f64,
    pub mae: f64,
    pub f_beta: f64,
    pub e_phi: f64,
    pub s_alpha: f64,
    pub images: usize,
}

/// Maps a box from a `(h, w)` working frame to `(oh, ow)`, rounding outward.
pub fn scale_box(b: &BoundingBox, from: (usize, usize), to: (usize, usize)) -> Result<BoundingBox> {
    if from == to {
        return Ok(*b);
    }
    let sx = to.1 as f64 / from.1 as f64;
    let sy = to.0 as f64 / from.0 as f64;
    let x0 = (b.x_min() as f64 * sx).floor() as usize;
    let y0 = (b.y_min() as f64 * sy).floor() as usize;
    let x1 = ((b.x_max() as f64 * sx).ceil() as usize).clamp(x0 + 1, to.1);
    let y1 = ((b.y_max() as f64 * sy).ceil() as usize).clamp(y0 + 1, to.0);
    BoundingBox::new(x0, y0, x1, y1)
}

/// Diagnostics for every iteration of one image. `gt` is in the original
/// resolution; masks and boxes are mapped up from the working frame.
pub fn image_diagnostics(
    stem: &str,
    result: &CycleResult,
    gt: &BinaryMask,
    class: Option<&str>,
    backends: &Backends,
) -> Result<Vec<IterationDiagnostic>> {
    let (gh, gw) = gt.dims();
    let rect = gt.bounding_box();
    result
        .iterations
        .iter()
        .map(|state| {
            let mask = resize_mask(&state.mask, gh, gw)?;
            let bbox = scale_box(&state.prompt.bbox, state.mask.dims(), (gh, gw))?;
            let cos = match class {
                Some(c) => Some(backends.text_similarity(&state.prompt.name, c)?),
                None => None,
            };
            Ok(IterationDiagnostic {
                iteration: state.index,
                cos,
                iou: rect.map_or(0.0, |r| r.iou(&bbox)),
                metrics: evaluate(stem, &mask, gt)?,
            })
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Averages per-image diagnostics into one row per iteration, in
/// iteration order.
pub fn diagnostics(per_image: &[Vec<IterationDiagnostic>]) -> Vec<DiagnosticRow> {
    let iterations = per_image.iter().map(Vec::len).max().unwrap_or(0);
    (1..=iterations)
        .filter_map(|i| {
            let rows: Vec<&IterationDiagnostic> = per_image
                .iter()
                .filter_map(|d| d.iter().find(|r| r.iteration == i))
                .collect();
            if rows.is_empty() {
                return None;
            }
            Some(DiagnosticRow {
                iteration: i,
                cos: mean(rows.iter().filter_map(|r| r.cos)),
                iou: mean(rows.iter().map(|r| r.iou)).unwrap_or(0.0),
                mae: mean(rows.iter().map(|r| r.metrics.mae)).unwrap_or(0.0),
                f_beta: mean(rows.iter().filter_map(|r| r.metrics.f_beta)).unwrap_or(0.0),
                e_phi: mean(rows.iter().map(|r| r.metrics.e_phi)).unwrap_or(0.0),
                s_alpha: mean(rows.iter().map(|r| r.metrics.s_alpha)).unwrap_or(0.0),
                images: rows.len(),
            })
        })
        .collect()
}

pub fn to_table(rows: &[DiagnosticRow]) -> String {
    let with_cos = rows.iter().any(|r| r.cos.is_some());
    let mut out = String::from("iter");
    if with_cos {
        out += "     cos";
    }
    out += "     IoU       M  F_beta   E_phi S_alpha\n";
    for r in rows {
        out += &format!("{:>4}", r.iteration);
        if with_cos {
            out += &format!("  {:>6.4}", r.cos.unwrap_or(f64::NAN));
        }
        out += &format!(
            "  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}\n",
            r.iou, r.mae, r.f_beta, r.e_phi, r.s_alpha
        );
    }
    out
}
