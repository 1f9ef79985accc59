//! Python bindings: configs, the cycle on the mock backends, and the
//! standalone operations (contrastive scoring, fusion, reweighting,
//! final selection, metrics). Images cross the boundary as nested lists
//! `[row][col][rgb]`, masks as `[row][col]`.

// the pyo3 0.22 function macros trip this lint
#![allow(clippy::useless_conversion)]

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use promac::backends::TokenLogits;
use promac::harness::{self, synth, Layout, RunOptions, RunSettings};
use promac::maskgen::{fuse_masks, MaskCandidate};
use promac::metrics;
use promac::promptgen::PromptTemplates;
use promac::{BinaryMask, FusionNormalization, RasterImage, SoftMask};

type Image = Vec<Vec<[f64; 3]>>;
type Grid = Vec<Vec<f64>>;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn grid_dims<T>(rows: &[Vec<T>]) -> PyResult<(usize, usize)> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("expected a non-empty rectangular grid"));
    }
    Ok((h, w))
}

fn to_image(rows: Image) -> PyResult<RasterImage> {
    let (h, w) = grid_dims(&rows)?;
    RasterImage::new(h, w, rows.into_iter().flatten().flatten().collect()).map_err(value_err)
}

fn from_image(img: &RasterImage) -> Image {
    (0..img.height())
        .map(|y| (0..img.width()).map(|x| img.pixel(x, y)).collect())
        .collect()
}

fn to_mask(rows: Grid) -> PyResult<SoftMask> {
    let (h, w) = grid_dims(&rows)?;
    SoftMask::new(h, w, rows.into_iter().flatten().collect()).map_err(value_err)
}

fn from_mask(m: &SoftMask) -> Grid {
    m.values().chunks(m.width()).map(<[f64]>::to_vec).collect()
}

fn to_binary(rows: Vec<Vec<bool>>) -> PyResult<BinaryMask> {
    let (h, w) = grid_dims(&rows)?;
    BinaryMask::new(h, w, rows.into_iter().flatten().map(u8::from).collect()).map_err(value_err)
}

/// Run settings: a task config plus harness options, editable by key.
#[pyclass(name = "Settings")]
#[derive(Clone)]
struct PySettings {
    inner: RunSettings,
}

#[pymethods]
impl PySettings {
    #[new]
    #[pyo3(signature = (preset=None))]
    fn new(preset: Option<&str>) -> PyResult<Self> {
        let mut inner = RunSettings::default();
        if let Some(p) = preset {
            inner.set("preset", p).map_err(value_err)?;
        }
        Ok(Self { inner })
    }

    /// Parses `key = value` lines, as in a config file.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RunSettings::parse(text).map_err(value_err)?,
        })
    }

    /// Applies one setting; an invalid value leaves the settings unchanged.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.set(key, value).map_err(value_err)?;
        next.validate().map_err(value_err)?;
        self.inner = next;
        Ok(())
    }

    #[getter]
    fn task_prompt(&self) -> String {
        self.inner.task.generic_prompt.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.task.iterations
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.task.alpha
    }

    #[getter]
    fn blend_weight(&self) -> f64 {
        self.inner.task.blend_weight
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.task.seed
    }

    /// The task config as JSON.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.task).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Settings(task_prompt={:?}, iterations={}, alpha={}, blend_weight={})",
            self.inner.task.generic_prompt,
            self.inner.task.iterations,
            self.inner.task.alpha,
            self.inner.task.blend_weight
        )
    }
}

/// Outcome of one cycle.
#[pyclass(name = "CycleResult")]
struct PyCycleResult {
    #[pyo3(get)]
    selected_index: usize,
    #[pyo3(get)]
    names: Vec<String>,
    #[pyo3(get)]
    boxes: Vec<[usize; 4]>,
    #[pyo3(get)]
    final_mask: Grid,
    #[pyo3(get)]
    masks: Vec<Grid>,
    #[pyo3(get)]
    trace_json: String,
}

/// Runs the cycle on one image with the named mock backend.
#[pyfunction]
#[pyo3(signature = (image, settings=None, backend="mock"))]
fn run_cycle(py: Python<'_>, image: Image, settings: Option<PySettings>, backend: &str) -> PyResult<PyCycleResult> {
    let image = to_image(image)?;
    let settings = settings.map_or_else(RunSettings::default, |s| s.inner);
    let backends = harness::backends_by_name(backend).map_err(value_err)?;
    let templates = PromptTemplates::default();
    let outcome = py.allow_threads(|| promac::run_cycle(&image, &settings.task, &templates, &backends));
    let trace = promac::Trace::from_outcome("image", &settings.task, &outcome);
    let trace_json = serde_json::to_string(&trace).map_err(value_err)?;
    let result = outcome.map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyCycleResult {
        selected_index: result.selected_index,
        names: result.iterations.iter().map(|s| s.prompt.name.clone()).collect(),
        boxes: result
            .iterations
            .iter()
            .map(|s| {
                let b = s.prompt.bbox;
                [b.x_min(), b.y_min(), b.x_max(), b.y_max()]
            })
            .collect(),
        final_mask: from_mask(&result.final_mask),
        masks: result.iterations.iter().map(|s| from_mask(&s.mask)).collect(),
        trace_json,
    })
}

/// Runs a whole dataset and writes masks, traces and reports under `out`.
/// Returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (dataset, out, settings=None, layout="paired", backend="mock"))]
fn run_task(
    py: Python<'_>,
    dataset: PathBuf,
    out: PathBuf,
    settings: Option<PySettings>,
    layout: &str,
    backend: &str,
) -> PyResult<String> {
    let settings = settings.map_or_else(RunSettings::default, |s| s.inner);
    let layout: Layout = layout.parse().map_err(value_err)?;
    let backends = harness::backends_by_name(backend).map_err(value_err)?;
    let manifest = harness::load_dataset(&dataset, layout).map_err(value_err)?;
    let report = py
        .allow_threads(|| {
            harness::run_task(
                &manifest,
                &settings,
                &PromptTemplates::default(),
                &backends,
                &out,
                &RunOptions::default(),
            )
        })
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    serde_json::to_string(&report).map_err(value_err)
}

/// Synthetic image and ground truth matching the mock backends.
#[pyfunction]
#[pyo3(signature = (index=0, size=64, seed=0))]
fn synth_sample(index: usize, size: usize, seed: u64) -> PyResult<(Image, Vec<Vec<bool>>)> {
    let s = synth::sample(index, size, seed).map_err(value_err)?;
    let (h, w) = s.gt.dims();
    let gt = (0..h).map(|y| (0..w).map(|x| s.gt.get(x, y)).collect()).collect();
    Ok((from_image(&s.image), gt))
}

/// Per-step contrastive probabilities from original and contrast logits.
#[pyfunction]
fn contrastive_distribution(original: Grid, contrast: Grid, alpha: f64) -> PyResult<Grid> {
    let vocab = original.first().map_or(0, Vec::len);
    let lo = TokenLogits::new(vocab, original).map_err(value_err)?;
    let lc = TokenLogits::new(vocab, contrast).map_err(value_err)?;
    promac::promptgen::contrastive_distribution(&lo, &lc, alpha).map_err(value_err)
}

/// Weighted fusion of candidate masks by their relevance scores.
#[pyfunction]
#[pyo3(signature = (masks, scores, softmax=false))]
fn fuse(masks: Vec<Grid>, scores: Vec<f64>, softmax: bool) -> PyResult<(Grid, Vec<f64>)> {
    if masks.len() != scores.len() {
        return Err(PyValueError::new_err("one score per mask is required"));
    }
    let mut cands = masks
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (m, s))| Ok(MaskCandidate::new(i, to_mask(m)?, s)))
        .collect::<PyResult<Vec<_>>>()?;
    let how = if softmax {
        FusionNormalization::Softmax
    } else {
        FusionNormalization::ShiftNormalize
    };
    let fused = fuse_masks(&mut cands, how).map_err(value_err)?;
    Ok((from_mask(&fused), cands.iter().map(|c| c.normalized_weight).collect()))
}

#[pyfunction]
fn reweight_image(image: Image, mask: Grid, w: f64) -> PyResult<Image> {
    let out = promac::reweight_image(&to_image(image)?, &to_mask(mask)?, w).map_err(value_err)?;
    Ok(from_image(&out))
}

/// One-based index of the mask closest to the mean, and that mask.
#[pyfunction]
fn select_final(masks: Vec<Grid>) -> PyResult<(usize, Grid)> {
    let masks = masks.into_iter().map(to_mask).collect::<PyResult<Vec<_>>>()?;
    let (i, m) = promac::select_final(&masks).map_err(value_err)?;
    Ok((i, from_mask(&m)))
}

/// MAE, adaptive F, mean E and S for one prediction. `f_beta` is `None`
/// when the ground truth is empty.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, pred: Grid, gt: Vec<Vec<bool>>) -> PyResult<Bound<'py, PyDict>> {
    let m = metrics::evaluate("image", &to_mask(pred)?, &to_binary(gt)?).map_err(value_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("mae", m.mae)?;
    d.set_item("f_beta", m.f_beta)?;
    d.set_item("e_phi", m.e_phi)?;
    d.set_item("s_alpha", m.s_alpha)?;
    Ok(d)
}

#[pymodule]
fn promac_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySettings>()?;
    m.add_class::<PyCycleResult>()?;
    m.add_function(wrap_pyfunction!(run_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(run_task, m)?)?;
    m.add_function(wrap_pyfunction!(synth_sample, m)?)?;
    m.add_function(wrap_pyfunction!(contrastive_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(reweight_image, m)?)?;
    m.add_function(wrap_pyfunction!(select_final, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
