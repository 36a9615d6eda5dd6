//! Subcommand implementations, kept separate from argument parsing so that
//! tests can drive them directly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pnp_core::apps::{degrade_for_task, run_task, Observation, Task, TaskConfig, TaskResult};
use pnp_core::io::{load_image, store_image, ImageFormat};
use pnp_core::metrics::{format_psnr, mse_between, psnr_from_mse};
use pnp_core::rng::derive_seed;
use pnp_core::solver::TraceRow;
use pnp_core::{ImageTensor, PixelMask};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{resolve_adapter, ExperimentConfig};

pub const RESTORED_PNG: &str = "restored.png";
pub const RESTORED_RAW: &str = "restored.pnpf";
pub const TRACE_CSV: &str = "trace.csv";

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .with_context(|| format!("io.{key} must be set for this command"))
}

fn is_poisson(task: &TaskConfig) -> bool {
    matches!(task.problem, Task::Poisson { .. })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradeSummary {
    pub seed: u64,
    pub known: Option<usize>,
    pub entries: usize,
}

/// Writes the observation (and the mask for sampling tasks) of `io.truth`.
pub fn degrade(config: &ExperimentConfig) -> Result<DegradeSummary> {
    let io = &config.io;
    let truth = load_image(required(&io.truth, "truth")?)?;
    let obs = degrade_for_task(&config.task, &truth)?;
    let obs_path = required(&io.observation, "observation")?;
    if is_poisson(&config.task) && ImageFormat::from_path(obs_path)? != ImageFormat::RawFloat {
        bail!("Poisson counts exceed the 8-bit range; store the observation as .pnpf");
    }
    store_image(&obs.data, obs_path)?;
    if let Some(mask) = &obs.mask {
        store_image(&mask.to_tensor(), required(&io.mask, "mask")?)?;
    }
    Ok(DegradeSummary {
        seed: config.task.seed,
        known: obs.mask.as_ref().map(PixelMask::count),
        entries: truth.data().len(),
    })
}

/// Loads the observation files named in the config.
pub fn load_observation(config: &ExperimentConfig) -> Result<Observation> {
    let io = &config.io;
    let data = load_image(required(&io.observation, "observation")?)?;
    let mask = if is_poisson(&config.task) {
        None
    } else {
        let m = load_image(required(&io.mask, "mask")?)?;
        Some(PixelMask::from_tensor(&m).context("reading the mask")?)
    };
    Ok(Observation { data, mask })
}

/// Restores the observation and writes the image (PNG and PNPF) and the
/// per-iteration trace into `io.output_dir`.
pub fn restore(
    config: &ExperimentConfig,
    adapter_flag: Option<&str>,
    adapter_env: Option<&str>,
) -> Result<TaskResult> {
    let io = &config.io;
    let out_dir = required(&io.output_dir, "output_dir")?;
    let mut task = config.task.clone();
    task.denoiser = resolve_adapter(&task.denoiser, adapter_flag, adapter_env)?;
    let obs = load_observation(config)?;
    let reference = match io.reference.as_ref().or(io.truth.as_ref()) {
        Some(p) => Some(load_image(p)?),
        None => None,
    };
    let result = run_task(&task, &obs, reference.as_ref())?;
    write_outputs(out_dir, &result)?;
    Ok(result)
}

pub fn write_outputs(out_dir: &Path, result: &TaskResult) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    store_image(&result.image, out_dir.join(RESTORED_PNG))?;
    store_image(&result.image, out_dir.join(RESTORED_RAW))?;
    let file = fs::File::create(out_dir.join(TRACE_CSV))?;
    write_trace(file, &result.trace)?;
    Ok(())
}

/// One trace CSV line; `psnr` is empty without a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub rho: f64,
    pub xy_mse: f64,
    pub psnr: Option<f64>,
}

impl From<&TraceRow> for TraceRecord {
    fn from(r: &TraceRow) -> Self {
        TraceRecord {
            k: r.k,
            rho: r.rho,
            xy_mse: r.xy_mse,
            psnr: r.psnr,
        }
    }
}

pub fn write_trace(out: impl Write, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(TraceRecord::from(row))?;
    }
    // An empty trace still gets its header.
    if trace.is_empty() {
        w.write_record(["k", "rho", "xy_mse", "psnr"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Turns a trace CSV into a gnuplot data file: `#` comments, comma separated,
/// `NaN` where no PSNR was recorded.
pub fn trace_plot(trace: &[TraceRecord], mut out: impl Write) -> Result<()> {
    writeln!(out, "# set datafile separator ','")?;
    writeln!(
        out,
        "# plot 'FILE' using 1:3 with lines  (xy_mse per iteration)"
    )?;
    writeln!(out, "# k,rho,xy_mse,psnr")?;
    for r in trace {
        let psnr = r.psnr.map_or_else(|| "NaN".to_owned(), |v| v.to_string());
        writeln!(out, "{},{},{},{}", r.k, r.rho, r.xy_mse, psnr)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub psnr_db: f64,
    pub mse: f64,
}

impl Evaluation {
    pub fn csv(&self) -> String {
        format!("psnr_db,mse\n{},{}\n", format_psnr(self.psnr_db), self.mse)
    }
}

pub fn eval_images(reference: &ImageTensor, test: &ImageTensor) -> Result<Evaluation> {
    let mse = mse_between(reference, test)?;
    Ok(Evaluation {
        psnr_db: psnr_from_mse(mse, 1.0),
        mse,
    })
}

pub fn eval(reference: &Path, test: &Path) -> Result<Evaluation> {
    eval_images(&load_image(reference)?, &load_image(test)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRecord {
    pub index: usize,
    pub input: String,
    pub seed: u64,
    pub init_psnr: f64,
    pub psnr: f64,
}

/// Degrades and restores every input in parallel. Image `i` uses the seed
/// `derive_seed(task.seed, i)`; results go to `out_dir/<index>_<stem>/` and
/// a `summary.csv` lists one row per image in input order.
pub fn batch(
    config: &ExperimentConfig,
    inputs: &[PathBuf],
    out_dir: &Path,
    adapter_flag: Option<&str>,
    adapter_env: Option<&str>,
) -> Result<Vec<BatchRecord>> {
    let denoiser = resolve_adapter(&config.task.denoiser, adapter_flag, adapter_env)?;
    fs::create_dir_all(out_dir)?;
    let records = inputs
        .par_iter()
        .enumerate()
        .map(|(index, input)| -> Result<BatchRecord> {
            let mut task = config.task.clone();
            task.denoiser = denoiser.clone();
            task.seed = derive_seed(config.task.seed, index as u64);
            let truth = load_image(input)?;
            let obs = degrade_for_task(&task, &truth)?;
            let result = run_task(&task, &obs, Some(&truth))
                .with_context(|| format!("restoring {}", input.display()))?;
            let stem = input
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image");
            write_outputs(&out_dir.join(format!("{index:04}_{stem}")), &result)?;
            Ok(BatchRecord {
                index,
                input: input.display().to_string(),
                seed: task.seed,
                init_psnr: result.init_psnr.expect("reference given"),
                psnr: result.psnr.expect("reference given"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(out_dir.join("summary.csv"))?;
    for r in &records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(records)
}
