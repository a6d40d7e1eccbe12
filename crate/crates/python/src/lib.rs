//! Python bindings: load, render and fit scenes, and run the gradient check.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use volprim::diff::{gradcheck as run_gradcheck, small_scene, GradcheckConfig};
use volprim::fit::{fit as run_fit, FitConfig, FitOptions, LossWeights};
use volprim::image::Image;
use volprim::io::{
    load_dataset, load_scene as load_bundle, make_synthetic as build_synthetic, save_scene, write_synthetic, SceneBundle, SyntheticConfig,
};
use volprim::renderer::{composite, render as render_view};
use volprim::Error;

fn to_py(e: Error) -> PyErr {
    let msg = format!("{}: {e}", e.category());
    match e {
        Error::MissingFile(_) => PyFileNotFoundError::new_err(msg),
        Error::InvalidInput(_) | Error::ShapeMismatch(_) | Error::Parse(_) => PyValueError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

/// `(width, height, channels, values)` with values row-major and channels interleaved.
type PyImage = (u32, u32, u32, Vec<f32>);

fn image_tuple(img: Image) -> PyImage {
    (img.width(), img.height(), img.channels(), img.into_data())
}

/// A scene together with its render settings and cameras.
#[pyclass(name = "Scene")]
struct PyScene {
    bundle: SceneBundle,
}

#[pymethods]
impl PyScene {
    #[getter]
    fn n_prim(&self) -> usize {
        self.bundle.scene.n_prim()
    }

    /// Voxel grid resolution per axis.
    #[getter]
    fn m(&self) -> usize {
        self.bundle.scene.params.payload.m()
    }

    #[getter]
    fn n_cameras(&self) -> usize {
        self.bundle.cameras.len()
    }

    /// Flat payload in slab order.
    fn payload(&self) -> Vec<f32> {
        self.bundle.scene.params.payload.data().to_vec()
    }

    /// Renders stored camera `camera`. Returns a dict with premultiplied
    /// `color`, `alpha`, and per-pixel `samples` counts.
    #[pyo3(signature = (camera, step=None, early_eps=None))]
    fn render<'py>(&self, py: Python<'py>, camera: usize, step: Option<f64>, early_eps: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        let cam = self
            .bundle
            .cameras
            .get(camera)
            .ok_or_else(|| PyValueError::new_err(format!("camera {camera} of {}", self.bundle.cameras.len())))?;
        let mut march = self.bundle.march;
        if let Some(s) = step {
            march.step = s;
        }
        if let Some(e) = early_eps {
            march.early_eps = e;
        }
        let scene = &self.bundle.scene;
        let out = py
            .detach(|| {
                let geometry = scene.geometry()?;
                let view = scene.view(&geometry)?;
                render_view(&view, cam, &march, camera as u32)
            })
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("samples", out.samples.clone())?;
        d.set_item("color", image_tuple(out.color))?;
        d.set_item("alpha", image_tuple(out.alpha))?;
        Ok(d)
    }

    /// Render of `camera` composited over `background`, an image tuple.
    fn composite(&self, py: Python<'_>, camera: usize, background: PyImage) -> PyResult<PyImage> {
        let cam = self
            .bundle
            .cameras
            .get(camera)
            .ok_or_else(|| PyValueError::new_err(format!("camera {camera} of {}", self.bundle.cameras.len())))?;
        let (w, h, c, data) = background;
        let bg = Image::from_data(w, h, c, data).map_err(to_py)?;
        let scene = &self.bundle.scene;
        let march = self.bundle.march;
        py.detach(|| {
            let geometry = scene.geometry()?;
            let view = scene.view(&geometry)?;
            composite(&render_view(&view, cam, &march, camera as u32)?, &bg)
        })
        .map(image_tuple)
        .map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let b = &self.bundle;
        save_scene(&path, &b.scene, &b.march, &b.cameras).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (path, frame=0))]
fn load_scene(path: PathBuf, frame: usize) -> PyResult<PyScene> {
    Ok(PyScene {
        bundle: load_bundle(&path, frame).map_err(to_py)?,
    })
}

/// Writes a synthetic dataset to `out`. `config` is generator JSON; missing
/// fields take defaults.
#[pyfunction]
#[pyo3(signature = (out, config=None, seed=0))]
fn make_synthetic(py: Python<'_>, out: PathBuf, config: Option<&str>, seed: u64) -> PyResult<()> {
    let cfg: SyntheticConfig = match config {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => SyntheticConfig::default(),
    };
    py.detach(|| write_synthetic(&build_synthetic(&cfg, seed)?, &out)).map_err(to_py)
}

/// Fits `init` (a scene file) to the dataset at `dataset` and returns the
/// fitted scene plus the per-iteration loss log as a list of dicts.
#[pyfunction]
#[pyo3(signature = (dataset, init, config=None, iterations=None, seed=None))]
fn fit<'py>(
    py: Python<'py>,
    dataset: PathBuf,
    init: PathBuf,
    config: Option<&str>,
    iterations: Option<usize>,
    seed: Option<u64>,
) -> PyResult<(PyScene, Vec<Bound<'py, PyDict>>)> {
    let mut cfg: FitConfig = match config {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => FitConfig::default(),
    };
    if let Some(n) = iterations {
        cfg.iterations = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.march.seed = s;
    }
    let path = if dataset.is_dir() { dataset.join("dataset.json") } else { dataset };
    let (bundle, log) = py
        .detach(|| {
            let ds = load_dataset(&path, 0)?;
            let mut bundle = load_bundle(&init, 0)?;
            let outcome = run_fit(&mut bundle.scene, &ds.views, &ds.train, &ds.heldout, &cfg, &FitOptions::default(), |_| {})?;
            bundle.march = cfg.march;
            Ok::<_, Error>((bundle, outcome.log))
        })
        .map_err(to_py)?;
    let rows = log
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("iteration", r.iteration)?;
            d.set_item("pho", r.pho)?;
            d.set_item("geo", r.geo)?;
            d.set_item("vol", r.vol)?;
            d.set_item("del", r.del)?;
            d.set_item("heldout_psnr", r.heldout_psnr)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((PyScene { bundle }, rows))
}

/// Finite-difference check of the analytic gradient on a small random
/// scene. Returns `[(group, max relative error)]` and the overall verdict.
#[pyfunction]
#[pyo3(signature = (m=8, rays=64, params=200, tolerance=1e-5, seed=0))]
fn gradcheck(py: Python<'_>, m: usize, rays: usize, params: usize, tolerance: f64, seed: u64) -> PyResult<(Vec<(String, f64)>, bool)> {
    let report = py
        .detach(|| {
            let (scene, batch, march) = small_scene(m, rays, seed)?;
            let gc = GradcheckConfig {
                n_params: params,
                seed,
                tolerance,
                ..Default::default()
            };
            let weights = LossWeights {
                pho: 1.0,
                geo: 0.1,
                vol: 0.01,
                del: 0.01,
            };
            run_gradcheck(&scene, &batch, &weights, &march, &gc)
        })
        .map_err(to_py)?;
    let groups = report.groups.iter().map(|g| (g.group.name().to_string(), g.max_rel_err)).collect();
    Ok((groups, report.passed()))
}

#[pymodule(name = "volprim")]
fn volprim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_function(wrap_pyfunction!(load_scene, m)?)?;
    m.add_function(wrap_pyfunction!(make_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
