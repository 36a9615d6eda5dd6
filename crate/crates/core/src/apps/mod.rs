//! Restoration pipelines: completion, interpolation, demosaicing and Poisson
//! denoising, each wiring an initialization, a preconditioner, a schedule and
//! the solver.

mod anscombe;
mod bicubic;
mod malvar;

use serde::{Deserialize, Serialize};

use crate::degrade::{
    add_gaussian_noise, add_poisson_noise, apply_sampling, cfa_masks, make_random_pattern,
    make_regular_grid_pattern, BayerCfa, SamplingOperator,
};
use crate::denoise::{Denoiser, DenoiserChoice};
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::precond::MaskPrecondConfig;
use crate::solver::{
    compute_schedule, run_admm, PrecondStrategy, Problem, ProblemSpec, RunOptions, Schedule,
    TraceRow,
};
use crate::tensor::{ImageTensor, PixelMask};

pub use anscombe::{anscombe_estimate, anscombe_forward, anscombe_inverse};
pub use bicubic::{bicubic_init, keys_kernel};
pub use malvar::malvar_init;

/// Restoration problem and its degradation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Task {
    /// Random pixel subset with the given sampling rate.
    Completion { rate: f64 },
    /// Regular grid keeping one pixel in `factor x factor`.
    Interpolation { factor: usize },
    Demosaic {
        #[serde(default)]
        cfa: BayerCfa,
        #[serde(default)]
        sigma_noise: f64,
    },
    Poisson {
        peak: f64,
        /// Initialize from an Anscombe-domain estimate and keep `P` fixed.
        /// Defaults to on for `peak <= 1`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anscombe_init: Option<bool>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Zeros,
    Bicubic,
    Malvar,
    /// The observation itself (counts for Poisson data).
    Observation,
    Anscombe,
}

fn yes() -> bool {
    true
}

/// Full description of one restoration run. Unset optional fields take the
/// standard per-task defaults (see [`TaskConfig::resolve`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub problem: Task,
    #[serde(default = "yes")]
    pub precondition: bool,
    #[serde(default)]
    pub denoiser: DenoiserChoice,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0_den: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigman_den: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_f_last: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passthrough: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitKind>,
}

impl TaskConfig {
    pub fn new(problem: Task) -> Self {
        TaskConfig {
            problem,
            precondition: true,
            denoiser: DenoiserChoice::default(),
            seed: 0,
            iterations: None,
            sigma0_den: None,
            sigman_den: None,
            sigma_f_last: None,
            p_max: None,
            passthrough: None,
            init: None,
        }
    }
}

/// Concrete parameters of a run after applying defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedTask {
    pub schedule: Schedule,
    pub precond: PrecondStrategy,
    pub passthrough: bool,
    pub init: InitKind,
}

pub const DEFAULT_P_MAX: f64 = 10.0;

impl TaskConfig {
    pub fn anscombe_init(&self) -> bool {
        match self.problem {
            Task::Poisson {
                peak,
                anscombe_init,
            } => anscombe_init.unwrap_or(peak <= 1.0),
            _ => false,
        }
    }

    /// Default iteration counts for each setting.
    pub fn default_iterations(&self) -> usize {
        let p = self.precondition;
        match self.problem {
            Task::Completion { rate } if rate < 0.15 => {
                if p {
                    20
                } else {
                    200
                }
            }
            Task::Completion { .. } => {
                if p {
                    18
                } else {
                    118
                }
            }
            Task::Interpolation { factor } if factor <= 2 => {
                if p {
                    6
                } else {
                    30
                }
            }
            Task::Interpolation { .. } => {
                if p {
                    10
                } else {
                    100
                }
            }
            Task::Demosaic { .. } if p => 10,
            Task::Demosaic { sigma_noise, .. } => {
                if sigma_noise > 0.0 {
                    16
                } else {
                    40
                }
            }
            Task::Poisson { .. } if self.anscombe_init() => 100,
            Task::Poisson { .. } => {
                if p {
                    20
                } else {
                    6
                }
            }
        }
    }

    fn validate_problem(&self) -> Result<()> {
        match self.problem {
            Task::Completion { rate } if !(rate > 0.0 && rate <= 1.0) => {
                Err(Error::param("rate", format!("{rate} is outside (0, 1]")))
            }
            Task::Interpolation { factor } if factor < 2 => {
                Err(Error::param("factor", format!("{factor} must be >= 2")))
            }
            Task::Demosaic { sigma_noise, .. }
                if !(sigma_noise >= 0.0 && sigma_noise.is_finite()) =>
            {
                Err(Error::param(
                    "sigma_noise",
                    format!("{sigma_noise} must be >= 0"),
                ))
            }
            Task::Poisson { peak, .. } if !(peak > 0.0 && peak.is_finite()) => Err(Error::param(
                "peak",
                format!("{peak} must be finite and > 0"),
            )),
            _ => Ok(()),
        }
    }

    pub fn resolve(&self) -> Result<ResolvedTask> {
        self.validate_problem()?;
        let n = self.iterations.unwrap_or_else(|| self.default_iterations());
        if n == 0 {
            return Err(Error::param("iterations", "must be >= 1"));
        }
        let p_max = self.p_max.unwrap_or(DEFAULT_P_MAX);
        if !(p_max > 1.0 && p_max.is_finite()) {
            return Err(Error::param(
                "p_max",
                format!("{p_max} must be finite and > 1"),
            ));
        }
        let eps = MaskPrecondConfig::eps_for_p_max(p_max);

        if let Task::Poisson { peak, .. } = self.problem {
            for (name, v) in [
                ("sigma0_den", self.sigma0_den),
                ("sigman_den", self.sigman_den),
                ("sigma_f_last", self.sigma_f_last),
            ] {
                if v.is_some() {
                    return Err(Error::Config(format!(
                        "{name} does not apply to Poisson denoising"
                    )));
                }
            }
            if self.passthrough == Some(true) {
                return Err(Error::Config(
                    "passthrough does not apply to Poisson denoising".into(),
                ));
            }
            let anscombe = self.anscombe_init();
            let (schedule, precond) = if self.precondition {
                (
                    Schedule::fixed(1.0, 1.0, n)?,
                    PrecondStrategy::Poisson {
                        floor: peak / 255.0,
                        update: !anscombe,
                    },
                )
            } else {
                (
                    Schedule::fixed(1.0 / peak, 4f64.powf(1.0 / n as f64), n)?,
                    PrecondStrategy::Identity,
                )
            };
            let default_init = if anscombe {
                InitKind::Anscombe
            } else {
                InitKind::Observation
            };
            let init = self.init.unwrap_or(default_init);
            if !matches!(
                init,
                InitKind::Anscombe | InitKind::Observation | InitKind::Zeros
            ) {
                return Err(Error::Config(format!(
                    "{init:?} initialization does not apply to Poisson data"
                )));
            }
            return Ok(ResolvedTask {
                schedule,
                precond,
                passthrough: false,
                init,
            });
        }

        let noise = match self.problem {
            Task::Demosaic { sigma_noise, .. } => sigma_noise,
            _ => 0.0,
        };
        let (sigma0, sigman, sigma_f_last, default_init) = match self.problem {
            Task::Completion { .. } => (1.0, 1.0 / 255.0, 0.0, InitKind::Zeros),
            Task::Interpolation { .. } => (50.0 / 255.0, 1.0 / 255.0, 0.4, InitKind::Bicubic),
            Task::Demosaic { .. } => {
                let last = if noise > 0.0 { noise } else { 1.0 / 255.0 };
                (50.0 / 255.0, last, 0.3, InitKind::Malvar)
            }
            Task::Poisson { .. } => unreachable!(),
        };
        let sigma0 = self.sigma0_den.unwrap_or(sigma0);
        let sigman = self.sigman_den.unwrap_or(sigman);
        // Noise-free sampling problems treat the final denoiser strength as
        // the data noise level.
        let sigma = if noise > 0.0 { noise } else { sigman };
        let schedule = compute_schedule(sigma0, sigman, n, sigma)?;
        let precond = if self.precondition {
            PrecondStrategy::Mask(MaskPrecondConfig::new(
                eps,
                self.sigma_f_last.unwrap_or(sigma_f_last),
                n,
            )?)
        } else {
            PrecondStrategy::Identity
        };
        let init = self.init.unwrap_or(default_init);
        match (init, self.problem) {
            (InitKind::Anscombe, _) => {
                return Err(Error::Config(
                    "Anscombe initialization needs Poisson data".into(),
                ))
            }
            (InitKind::Bicubic, Task::Interpolation { .. })
            | (InitKind::Malvar, Task::Demosaic { .. }) => {}
            (InitKind::Bicubic | InitKind::Malvar, _) => {
                return Err(Error::Config(format!(
                    "{init:?} initialization does not apply to this task"
                )))
            }
            _ => {}
        }
        Ok(ResolvedTask {
            schedule,
            precond,
            passthrough: self.passthrough.unwrap_or(noise == 0.0),
            init,
        })
    }
}

/// Degraded data: full-size samples plus the known-pixel mask (absent for
/// Poisson counts).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub data: ImageTensor,
    pub mask: Option<PixelMask>,
}

/// Synthesizes the observation of `truth` (values in `[0, 1]`) for a task.
pub fn degrade_for_task(config: &TaskConfig, truth: &ImageTensor) -> Result<Observation> {
    config.validate_problem()?;
    let s = truth.shape();
    let seed = config.seed;
    Ok(match config.problem {
        Task::Completion { rate } => {
            let mask = make_random_pattern(s.height, s.width, s.channels, rate, seed)?;
            let op = SamplingOperator::new(mask.clone())?;
            Observation {
                data: apply_sampling(truth, &op)?,
                mask: Some(mask),
            }
        }
        Task::Interpolation { factor } => {
            let mask = make_regular_grid_pattern(s.height, s.width, s.channels, factor)?;
            let op = SamplingOperator::new(mask.clone())?;
            Observation {
                data: apply_sampling(truth, &op)?,
                mask: Some(mask),
            }
        }
        Task::Demosaic { cfa, sigma_noise } => {
            if s.channels != 3 {
                return Err(Error::UnsupportedChannels(s.channels));
            }
            let mask = cfa_masks(cfa, s.height, s.width)?;
            let op = SamplingOperator::new(mask.clone())?;
            let noisy = add_gaussian_noise(truth, sigma_noise, seed)?;
            Observation {
                data: apply_sampling(&noisy, &op)?,
                mask: Some(mask),
            }
        }
        Task::Poisson { peak, .. } => Observation {
            data: add_poisson_noise(truth, peak, seed)?,
            mask: None,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskResult {
    /// Restored image in `[0, 1]`.
    pub image: ImageTensor,
    /// Initialization in `[0, 1]` units (before clipping).
    pub init: ImageTensor,
    pub trace: Vec<TraceRow>,
    pub resolved: ResolvedTask,
    pub psnr: Option<f64>,
    /// PSNR of the clipped initialization; for Poisson data with the default
    /// initialization this is the PSNR of the noisy input.
    pub init_psnr: Option<f64>,
}

/// Runs a task with the denoiser named in the configuration.
pub fn run_task(
    config: &TaskConfig,
    observation: &Observation,
    reference: Option<&ImageTensor>,
) -> Result<TaskResult> {
    let mut denoiser = config.denoiser.build()?;
    run_task_with(config, observation, reference, denoiser.as_mut())
}

/// Runs a task with a caller-provided denoiser.
pub fn run_task_with(
    config: &TaskConfig,
    observation: &Observation,
    reference: Option<&ImageTensor>,
    denoiser: &mut dyn Denoiser,
) -> Result<TaskResult> {
    let resolved = config.resolve()?;
    let data = &observation.data;
    let s = data.shape();
    if let Some(r) = reference {
        s.ensure_same(&r.shape())?;
    }

    let (problem, scale) = match config.problem {
        Task::Poisson { peak, .. } => (
            Problem::Poisson {
                counts: data.clone(),
                peak,
            },
            peak,
        ),
        task => {
            let mask = observation
                .mask
                .clone()
                .ok_or_else(|| Error::Config("sampling tasks need a known-pixel mask".into()))?;
            s.ensure_same(&mask.shape())?;
            if let Task::Demosaic { cfa, .. } = task {
                if s.channels != 3 || mask != cfa_masks(cfa, s.height, s.width)? {
                    return Err(Error::Config(format!("mask is not a {cfa} mosaic")));
                }
            }
            (
                Problem::LinearDiagonal {
                    observation: data.clone(),
                    operator: SamplingOperator::new(mask)?,
                },
                1.0,
            )
        }
    };

    let init = match (resolved.init, &config.problem) {
        (InitKind::Zeros, _) => ImageTensor::zeros(s),
        (InitKind::Observation, _) => data.clone(),
        (InitKind::Bicubic, Task::Interpolation { factor }) => bicubic_init(
            data,
            observation.mask.as_ref().expect("checked above"),
            *factor,
        )?,
        (InitKind::Malvar, Task::Demosaic { cfa, .. }) => malvar_init(data, *cfa)?,
        (InitKind::Anscombe, Task::Poisson { peak, .. }) => {
            anscombe_estimate(data, *peak, denoiser)?
        }
        _ => unreachable!("rejected by TaskConfig::resolve"),
    };

    let spec = ProblemSpec {
        problem,
        precond: resolved.precond,
        passthrough: resolved.passthrough,
    };
    let options = RunOptions {
        reference,
        stop_below: None,
    };
    let result = run_admm(&spec, &resolved.schedule, &init, denoiser, &options)?;
    let init = if scale == 1.0 {
        init
    } else {
        init.scale(1.0 / scale)
    };
    let (psnr_out, init_psnr) = match reference {
        Some(r) => (
            Some(psnr(r, &result.image, 1.0)?),
            Some(psnr(r, &init.clamp(0.0, 1.0), 1.0)?),
        ),
        None => (None, None),
    };
    Ok(TaskResult {
        image: result.image,
        init,
        trace: result.trace,
        resolved,
        psnr: psnr_out,
        init_psnr,
    })
}
