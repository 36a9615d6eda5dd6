//! Python bindings. Images cross the boundary as flat row-major,
//! channel-interleaved float lists plus a `(height, width, channels)` tuple;
//! task configurations are JSON strings with the same fields as the `[task]`
//! table of a CLI config file.

use pnp_core::apps::{degrade_for_task, run_task, Observation, TaskConfig, TaskResult};
use pnp_core::solver::compute_schedule;
use pnp_core::{ImageTensor, PixelMask, Shape};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Dims = (usize, usize, usize);

fn py_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

pub fn parse_config(json: &str) -> pnp_core::Result<TaskConfig> {
    let config: TaskConfig =
        serde_json::from_str(json).map_err(|e| pnp_core::Error::Config(e.to_string()))?;
    config.resolve()?;
    Ok(config)
}

pub fn tensor(data: Vec<f64>, (h, w, c): Dims) -> pnp_core::Result<ImageTensor> {
    ImageTensor::new(Shape::new(h, w, c), data)
}

fn dims(t: &ImageTensor) -> Dims {
    let s = t.shape();
    (s.height, s.width, s.channels)
}

pub fn mask_from_flags(flags: Vec<bool>, (h, w, c): Dims) -> pnp_core::Result<PixelMask> {
    PixelMask::new(Shape::new(h, w, c), flags)
}

/// Degrades `truth`; returns the observation and, for sampling tasks, the
/// known-pixel flags.
#[pyfunction]
fn degrade(config: &str, truth: Vec<f64>, shape: Dims) -> PyResult<(Vec<f64>, Option<Vec<bool>>)> {
    let config = parse_config(config).map_err(py_err)?;
    let truth = tensor(truth, shape).map_err(py_err)?;
    let obs = degrade_for_task(&config, &truth).map_err(py_err)?;
    Ok((obs.data.into_data(), obs.mask.map(|m| m.data().to_vec())))
}

pub fn restore_native(
    config: &TaskConfig,
    observation: ImageTensor,
    mask: Option<PixelMask>,
    reference: Option<&ImageTensor>,
) -> pnp_core::Result<TaskResult> {
    run_task(
        config,
        &Observation {
            data: observation,
            mask,
        },
        reference,
    )
}

/// Runs a restoration. The returned dict holds `image`, `init`, `shape`,
/// `trace` (a list of `(k, rho, xy_mse, psnr)`), `psnr` and `init_psnr`.
#[pyfunction]
#[pyo3(signature = (config, observation, shape, mask=None, reference=None))]
fn restore<'py>(
    py: Python<'py>,
    config: &str,
    observation: Vec<f64>,
    shape: Dims,
    mask: Option<Vec<bool>>,
    reference: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = parse_config(config).map_err(py_err)?;
    let observation = tensor(observation, shape).map_err(py_err)?;
    let mask = mask
        .map(|m| mask_from_flags(m, shape))
        .transpose()
        .map_err(py_err)?;
    let reference = reference
        .map(|r| tensor(r, shape))
        .transpose()
        .map_err(py_err)?;
    let result = py
        .detach(|| restore_native(&config, observation, mask, reference.as_ref()))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("shape", dims(&result.image))?;
    out.set_item(
        "trace",
        result
            .trace
            .iter()
            .map(|r| (r.k, r.rho, r.xy_mse, r.psnr))
            .collect::<Vec<_>>(),
    )?;
    out.set_item("psnr", result.psnr)?;
    out.set_item("init_psnr", result.init_psnr)?;
    out.set_item("image", result.image.into_data())?;
    out.set_item("init", result.init.into_data())?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (reference, test, shape, peak=1.0))]
fn psnr(reference: Vec<f64>, test: Vec<f64>, shape: Dims, peak: f64) -> PyResult<f64> {
    let a = tensor(reference, shape).map_err(py_err)?;
    let b = tensor(test, shape).map_err(py_err)?;
    pnp_core::metrics::psnr(&a, &b, peak).map_err(py_err)
}

/// `(rho0, alpha)` for the given denoiser strengths, iteration count and
/// measurement noise level.
#[pyfunction]
fn schedule(
    sigma0_den: f64,
    sigman_den: f64,
    iterations: usize,
    sigma: f64,
) -> PyResult<(f64, f64)> {
    let s = compute_schedule(sigma0_den, sigman_den, iterations, sigma).map_err(py_err)?;
    Ok((s.rho0, s.alpha))
}

#[pyfunction]
fn load_image(path: &str) -> PyResult<(Vec<f64>, Dims)> {
    let t = pnp_core::io::load_image(path).map_err(py_err)?;
    let d = dims(&t);
    Ok((t.into_data(), d))
}

#[pyfunction]
fn store_image(path: &str, data: Vec<f64>, shape: Dims) -> PyResult<()> {
    let t = tensor(data, shape).map_err(py_err)?;
    pnp_core::io::store_image(&t, path).map_err(py_err)
}

#[pymodule]
fn pnp_admm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(restore, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(load_image, m)?)?;
    m.add_function(wrap_pyfunction!(store_image, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
