//! Python bindings: color labeling, metrics, the synthetic corpus, and
//! checkpoint loading with generation and evaluation.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use logogen::color::{self, ColorClass, ColorLabel, Palette, Rgb};
use logogen::evaluation::{self, ConfusionCounts, EvalReport, RunMetadata};
use logogen::service::{self, GenerateRequest};
use logogen::training::{self, resolve_checkpoint, ModelBundle, TrainConfig};

fn py_err(e: logogen::Error) -> PyErr {
    match e {
        logogen::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_class(name: &str) -> PyResult<ColorClass> {
    name.parse().map_err(py_err)
}

fn rgb(c: (u8, u8, u8)) -> Rgb {
    Rgb::new(c.0, c.1, c.2)
}

fn rgb_tuple(c: Rgb) -> (u8, u8, u8) {
    (c.r, c.g, c.b)
}

fn icon_from_raw(raw: &[u8]) -> PyResult<image::RgbImage> {
    let side = color::ICON_SIZE;
    image::RgbImage::from_raw(side, side, raw.to_vec())
        .ok_or_else(|| PyValueError::new_err(format!("expected {} raw RGB bytes, got {}", 3 * color::ICON_PIXELS, raw.len())))
}

fn palette_list(p: &Palette) -> Vec<((u8, u8, u8), usize)> {
    p.entries.iter().map(|e| (rgb_tuple(e.centroid), e.count)).collect()
}

/// Dominant-color label of one icon.
#[pyclass(name = "ColorLabel", frozen, get_all)]
pub struct PyColorLabel {
    pub primary: String,
    pub top3: [String; 3],
    /// `((r, g, b), pixel_count)` per cluster, largest first.
    pub palette: Vec<((u8, u8, u8), usize)>,
}

impl From<&ColorLabel> for PyColorLabel {
    fn from(l: &ColorLabel) -> Self {
        PyColorLabel {
            primary: l.primary.to_string(),
            top3: l.top3.map(|c| c.to_string()),
            palette: palette_list(&l.palette),
        }
    }
}

#[pymethods]
impl PyColorLabel {
    fn __repr__(&self) -> String {
        format!("ColorLabel(primary={:?}, top3={:?})", self.primary, self.top3)
    }
}

#[pyfunction]
fn class_names() -> Vec<&'static str> {
    ColorClass::names()
}

#[pyfunction]
fn nearest_x11_name(rgb_value: (u8, u8, u8)) -> &'static str {
    color::nearest_x11_name(rgb(rgb_value))
}

#[pyfunction]
fn x11_to_class(name: &str) -> PyResult<String> {
    color::x11_to_class(name).map(|c| c.to_string()).map_err(py_err)
}

#[pyfunction]
fn canonical_shade(class_name: &str) -> PyResult<(u8, u8, u8)> {
    Ok(rgb_tuple(color::canonical_shade(parse_class(class_name)?)))
}

#[pyfunction]
#[pyo3(signature = (pixels, k = color::LABEL_K, seed = color::LABEL_SEED, max_iters = color::LABEL_MAX_ITERS))]
fn kmeans_palette(pixels: Vec<(u8, u8, u8)>, k: usize, seed: u64, max_iters: usize) -> PyResult<Vec<((u8, u8, u8), usize)>> {
    let px: Vec<Rgb> = pixels.into_iter().map(rgb).collect();
    let palette = color::kmeans_pixels(&px, color::KMeansParams::new(k, seed, max_iters)).map_err(py_err)?;
    Ok(palette_list(&palette))
}

/// Labels a 32x32 icon given as row-major raw RGB bytes.
#[pyfunction]
fn label_rgb(raw: &[u8]) -> PyResult<PyColorLabel> {
    let label = color::label_rgb(&icon_from_raw(raw)?).map_err(py_err)?;
    Ok(PyColorLabel::from(&label))
}

/// Labels an encoded 32x32 image (PNG and other formats `image` reads).
#[pyfunction]
fn label_image(encoded: &[u8]) -> PyResult<PyColorLabel> {
    let img = image::load_from_memory(encoded).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let label = color::label_image(&img).map_err(py_err)?;
    Ok(PyColorLabel::from(&label))
}

fn counts(matrix: Vec<Vec<usize>>) -> PyResult<ConfusionCounts> {
    let n = ColorClass::COUNT;
    if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(format!("confusion matrix must be {n}x{n}")));
    }
    let mut m = [[0usize; ColorClass::COUNT]; ColorClass::COUNT];
    for (row, values) in m.iter_mut().zip(matrix) {
        row.copy_from_slice(&values);
    }
    Ok(ConfusionCounts::from_matrix(m))
}

/// Precision of `class_name` from a 12x12 `[conditioned][extracted]` matrix.
#[pyfunction]
fn precision(matrix: Vec<Vec<usize>>, class_name: &str) -> PyResult<Option<f64>> {
    Ok(evaluation::precision(&counts(matrix)?, parse_class(class_name)?))
}

#[pyfunction]
fn recall(matrix: Vec<Vec<usize>>, class_name: &str) -> PyResult<Option<f64>> {
    Ok(evaluation::recall(&counts(matrix)?, parse_class(class_name)?))
}

#[pyfunction]
fn f1(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    evaluation::f1(precision, recall)
}

/// Full JSON report for a confusion matrix, without top-3 data.
#[pyfunction]
fn report_from_matrix(matrix: Vec<Vec<usize>>) -> PyResult<String> {
    let meta = RunMetadata { checkpoint: None, seed: 0, n_per_class: 0 };
    Ok(EvalReport::from_counts(counts(matrix)?, &Default::default(), meta).to_json())
}

/// `(id, class, raw RGB bytes)` for each icon of the labeled synthetic corpus.
#[pyfunction]
fn synth_corpus(py: Python<'_>, n_per_class: usize, seed: u64) -> PyResult<Vec<(String, String, Py<PyBytes>)>> {
    let corpus = py.detach(|| logogen::dataset::synth_corpus(n_per_class, seed)).map_err(py_err)?;
    Ok(corpus
        .icons
        .iter()
        .enumerate()
        .map(|(i, icon)| (icon.id.clone(), corpus.class_of(i).to_string(), PyBytes::new(py, icon.pixels().as_raw()).unbind()))
        .collect())
}

/// A generator, critic and classifier with their training state.
#[pyclass(name = "Model", frozen)]
pub struct PyModel {
    bundle: ModelBundle,
    #[pyo3(get)]
    checkpoint_id: String,
}

#[pymethods]
impl PyModel {
    /// Loads a checkpoint file or the latest checkpoint of a run directory.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let path = resolve_checkpoint(&path).map_err(py_err)?;
        let state = service::AppState::load(&path).map_err(py_err)?;
        let state = std::sync::Arc::try_unwrap(state).map_err(|_| PyValueError::new_err("checkpoint state is shared"))?;
        Ok(PyModel { bundle: state.bundle, checkpoint_id: state.checkpoint_id })
    }

    /// A hand-built generator that paints solid canonical shades.
    #[staticmethod]
    fn oracle() -> PyResult<Self> {
        Ok(PyModel { bundle: evaluation::canonical_oracle_bundle().map_err(py_err)?, checkpoint_id: "oracle".into() })
    }

    /// Trains from `key = value` config text.
    #[staticmethod]
    fn train(py: Python<'_>, config: &str) -> PyResult<Self> {
        let cfg = TrainConfig::parse(config).map_err(py_err)?;
        let out = py
            .detach(|| training::load_corpus(&cfg.data).and_then(|corpus| training::train(&cfg, &corpus)))
            .map_err(py_err)?;
        Ok(PyModel { bundle: out.bundle, checkpoint_id: "trained".into() })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.bundle.save(&path).map_err(py_err)
    }

    #[getter]
    fn generator_steps(&self) -> u64 {
        self.bundle.counters.generator_steps
    }

    #[getter]
    fn checksum(&self) -> String {
        self.bundle.checksum()
    }

    /// Returns `(seed_used, [png bytes], grid png bytes)`.
    #[pyo3(signature = (class_name, count = 1, seed = None))]
    fn generate(
        &self,
        py: Python<'_>,
        class_name: &str,
        count: usize,
        seed: Option<u64>,
    ) -> PyResult<(u64, Vec<Py<PyBytes>>, Py<PyBytes>)> {
        if count == 0 || count > service::MAX_COUNT {
            return Err(PyValueError::new_err(format!("count must be between 1 and {}", service::MAX_COUNT)));
        }
        let req = GenerateRequest { class: parse_class(class_name)?, count, seed };
        let g = py.detach(|| service::handle_generate(&req, &self.bundle.generator)).map_err(py_err)?;
        let images = g.images.iter().map(|b| PyBytes::new(py, b).unbind()).collect();
        Ok((g.seed_used, images, PyBytes::new(py, &g.grid).unbind()))
    }

    /// JSON evaluation report.
    #[pyo3(signature = (n_per_class = evaluation::EVAL_PER_CLASS, seed = 0))]
    fn evaluate(&self, py: Python<'_>, n_per_class: usize, seed: u64) -> PyResult<String> {
        let id = Some(self.checkpoint_id.clone());
        let report = py.detach(|| evaluation::evaluate_generation(&self.bundle, n_per_class, seed, id)).map_err(py_err)?;
        Ok(report.to_json())
    }

    fn __repr__(&self) -> String {
        format!("Model(checkpoint_id={:?}, generator_steps={})", self.checkpoint_id, self.generator_steps())
    }
}

#[pymodule]
pub fn logogen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CLASSES", ColorClass::names())?;
    m.add_class::<PyColorLabel>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(class_names, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_x11_name, m)?)?;
    m.add_function(wrap_pyfunction!(x11_to_class, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_shade, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans_palette, m)?)?;
    m.add_function(wrap_pyfunction!(label_rgb, m)?)?;
    m.add_function(wrap_pyfunction!(label_image, m)?)?;
    m.add_function(wrap_pyfunction!(precision, m)?)?;
    m.add_function(wrap_pyfunction!(recall, m)?)?;
    m.add_function(wrap_pyfunction!(f1, m)?)?;
    m.add_function(wrap_pyfunction!(report_from_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    Ok(())
}
