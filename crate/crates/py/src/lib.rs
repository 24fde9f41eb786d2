//! Python bindings: masks, the generator/discriminator pair, training
//! steps, checkpoints, and loss evaluation, all over numpy arrays.

use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4, Axis};
use numpy::{IntoPyArray, PyArray3, PyArray4, PyReadonlyArray3, PyReadonlyArray4};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use outpaint_core::data::{self, Batch, Mask};
use outpaint_core::objectives::{self, LossWeights};
use outpaint_core::train::{self, TrainState};
use outpaint_core::{TrainConfig, Variant};

fn err(e: outpaint_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_variant(s: &str) -> PyResult<Variant> {
    s.parse().map_err(err)
}

/// Band mask over an outer frame with a preserved centered square.
#[pyclass(name = "Mask")]
struct PyMask {
    inner: Mask,
}

#[pymethods]
impl PyMask {
    #[new]
    #[pyo3(signature = (outer, inner, margin = 0))]
    fn new(outer: usize, inner: usize, margin: usize) -> PyResult<Self> {
        Ok(PyMask { inner: Mask::band_with_margin(outer, inner, margin).map_err(err)? })
    }

    #[getter]
    fn outer(&self) -> usize {
        self.inner.outer
    }

    #[getter]
    fn inner_size(&self) -> usize {
        self.inner.inner
    }

    fn ones_count(&self) -> usize {
        self.inner.ones_count()
    }

    /// The (1, outer, outer) float32 mask plane.
    fn array<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<f32>> {
        self.inner.data.clone().into_pyarray(py)
    }

    /// Generator input for a (3, H, W) image: band-zeroed RGB plus the
    /// mask channel.
    fn masked_input<'py>(
        &self,
        py: Python<'py>,
        image: PyReadonlyArray3<'py, f32>,
    ) -> PyResult<Bound<'py, PyArray3<f32>>> {
        let img = image.as_array().to_owned();
        Ok(data::make_masked_input(&img, &self.inner)
            .map_err(err)?
            .into_pyarray(py))
    }

    /// Elementwise mask product (the local discriminator operand).
    fn local_crop<'py>(
        &self,
        py: Python<'py>,
        image: PyReadonlyArray3<'py, f32>,
    ) -> PyResult<Bound<'py, PyArray3<f32>>> {
        let img = image.as_array().to_owned();
        Ok(data::local_crop(&img, &self.inner).map_err(err)?.into_pyarray(py))
    }
}

/// One model variant: generator, discriminators, and both optimizers.
#[pyclass(name = "Model")]
struct PyModel {
    state: TrainState,
    weights: LossWeights,
}

impl PyModel {
    fn from_state(state: TrainState) -> PyModel {
        PyModel { state, weights: LossWeights::default() }
    }
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (variant = "residual", seed = 0))]
    fn new(variant: &str, seed: u64) -> PyResult<Self> {
        let variant = parse_variant(variant)?;
        let cfg = TrainConfig { variant, seed, ..TrainConfig::default() };
        Ok(PyModel::from_state(TrainState::init(&cfg)))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let state = outpaint_core::checkpoint::load_checkpoint(&path).map_err(err)?;
        Ok(PyModel::from_state(state))
    }

    fn save(&mut self, path: PathBuf) -> PyResult<()> {
        outpaint_core::checkpoint::save_checkpoint(&mut self.state, &path).map_err(err)
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.state.variant.label()
    }

    #[getter]
    fn epoch(&self) -> u32 {
        self.state.epoch
    }

    #[getter]
    fn step(&self) -> u64 {
        self.state.step
    }

    /// Generator forward over a (N, 4, 192, 192) masked batch.
    fn generate<'py>(
        &self,
        py: Python<'py>,
        masked: PyReadonlyArray4<'py, f32>,
    ) -> PyResult<Bound<'py, PyArray4<f32>>> {
        let x = masked.as_array().to_owned();
        Ok(self.state.models.gen.forward(&x).map_err(err)?.into_pyarray(py))
    }

    /// Outpaint a single (3, 192, 192) image; `paste` keeps the interior.
    #[pyo3(signature = (image, mask, paste = true))]
    fn outpaint<'py>(
        &self,
        py: Python<'py>,
        image: PyReadonlyArray3<'py, f32>,
        mask: &PyMask,
        paste: bool,
    ) -> PyResult<Bound<'py, PyArray3<f32>>> {
        let gt: Array3<f32> = image.as_array().to_owned();
        let masked = data::make_masked_input(&gt, &mask.inner)
            .map_err(err)?
            .insert_axis(Axis(0));
        let y = self.state.models.gen.forward(&masked).map_err(err)?;
        let generated = y.index_axis(Axis(0), 0).to_owned();
        Ok(data::composite_paste(&generated, &gt, &mask.inner, paste)
            .map_err(err)?
            .into_pyarray(py))
    }

    /// Averaged discriminator score map for (N, 3, 192, 192) frames.
    fn score<'py>(
        &self,
        py: Python<'py>,
        frames: PyReadonlyArray4<'py, f32>,
        mask: &PyMask,
    ) -> PyResult<Bound<'py, PyArray4<f32>>> {
        let x: Array4<f32> = frames.as_array().to_owned();
        Ok(self
            .state
            .models
            .disc
            .combined_score(&x, &mask.inner)
            .map_err(err)?
            .into_pyarray(py))
    }

    /// One alternating update; returns the pre-update losses as a dict.
    fn train_step<'py>(
        &mut self,
        py: Python<'py>,
        masked: PyReadonlyArray4<'py, f32>,
        gt: PyReadonlyArray4<'py, f32>,
        mask: &PyMask,
        epoch: u32,
    ) -> PyResult<Py<PyAny>> {
        let batch = Batch {
            masked: masked.as_array().to_owned(),
            gt: gt.as_array().to_owned(),
            paths: Vec::new(),
        };
        let weights = self.weights.clone();
        let l = train::train_step(&mut self.state, &batch, &mask.inner, &weights, epoch)
            .map_err(err)?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("loss_g", l.loss_g)?;
        d.set_item("loss_d", l.loss_d)?;
        d.set_item("loss_rec", l.loss_rec)?;
        d.set_item("loss_adv", l.loss_adv)?;
        d.set_item("lambda_adv", l.lambda_adv)?;
        Ok(d.into())
    }
}

/// λ_adv(n) under the default 0.001 / 0.005 / 0.015 schedule.
#[pyfunction]
fn lambda_adv(epoch: u32) -> PyResult<f64> {
    objectives::lambda_adv(epoch).map_err(err)
}

/// Mean absolute elementwise difference of two equal-shape arrays.
#[pyfunction]
fn rec_loss(a: PyReadonlyArray4<'_, f32>, b: PyReadonlyArray4<'_, f32>) -> PyResult<f64> {
    objectives::rec_loss(&a.as_array(), &b.as_array()).map_err(err)
}

/// Decode, resize, and center-crop an image file to (3, size, size).
#[pyfunction]
#[pyo3(signature = (path, size = 192))]
fn load_image(py: Python<'_>, path: PathBuf, size: usize) -> PyResult<Bound<'_, PyArray3<f32>>> {
    Ok(data::load_image(Path::new(&path), size).map_err(err)?.into_pyarray(py))
}

#[pymodule]
fn outpaint_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMask>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(lambda_adv, m)?)?;
    m.add_function(wrap_pyfunction!(rec_loss, m)?)?;
    m.add_function(wrap_pyfunction!(load_image, m)?)?;
    m.add("FRAME", outpaint_core::FRAME)?;
    Ok(())
}
