//! Preconditioned plug-and-play ADMM.
//!
//! The solver works on the reparameterized variable `x` with the natural
//! image given by `P x`. Every iteration runs
//!
//! ```text
//! x <- argmin_x  f(P x) + rho/2 ||x - y + l/rho||^2          (data step)
//! y <- P^-1 G(P (x + l/rho), sigma P / sqrt(rho))            (denoiser step)
//! l <- l + rho (x - y)                                        (dual step)
//! rho <- rho * alpha
//! ```
//!
//! where `f` is either a masked least-squares term or the Poisson
//! negative log-likelihood.

use serde::{Deserialize, Serialize};

use crate::degrade::SamplingOperator;
use crate::denoise::{denoise_rescaled, Denoiser};
use crate::error::{Error, Result};
use crate::metrics::{mse_between, psnr};
use crate::precond::{
    mask_preconditioner, poisson_precond_update, MaskPrecondConfig, Preconditioner,
};
use crate::tensor::{ImageTensor, NoiseLevelMap, PixelMask};

/// Penalty schedule `rho^k = rho0 * alpha^k` plus the measurement noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub sigma: f64,
    pub sigma0_den: f64,
    pub sigman_den: f64,
    pub iterations: usize,
    pub rho0: f64,
    pub alpha: f64,
}

/// Derives `rho0 = (sigmaN / sigma0)^2` and `alpha = (1 / rho0)^(1/N)` so that
/// the denoiser strength `sigma / sqrt(rho^k)` goes from `sigma0_den` down to
/// `sigmaN_den` when `sigma == sigmaN_den`.
pub fn compute_schedule(
    sigma0_den: f64,
    sigman_den: f64,
    iterations: usize,
    sigma: f64,
) -> Result<Schedule> {
    if !(sigman_den > 0.0 && sigman_den.is_finite()) {
        return Err(Error::param(
            "sigmaN_den",
            format!("{sigman_den} must be finite and > 0"),
        ));
    }
    if !(sigma0_den >= sigman_den && sigma0_den.is_finite()) {
        return Err(Error::param(
            "sigma0_den",
            format!("{sigma0_den} must be finite and >= sigmaN_den = {sigman_den}"),
        ));
    }
    if iterations == 0 {
        return Err(Error::param("iterations", "must be >= 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(
            "sigma",
            format!("{sigma} must be finite and >= 0"),
        ));
    }
    let ratio = sigman_den / sigma0_den;
    let rho0 = ratio * ratio;
    let alpha = (1.0 / rho0).powf(1.0 / iterations as f64);
    Ok(Schedule {
        sigma,
        sigma0_den,
        sigman_den,
        iterations,
        rho0,
        alpha,
    })
}

impl Schedule {
    /// Explicit `(rho0, alpha)` with unit noise level, as used for Poisson data.
    pub fn fixed(rho0: f64, alpha: f64, iterations: usize) -> Result<Self> {
        if !(rho0 > 0.0 && rho0.is_finite()) {
            return Err(Error::param(
                "rho0",
                format!("{rho0} must be finite and > 0"),
            ));
        }
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::param(
                "alpha",
                format!("{alpha} must be finite and >= 1"),
            ));
        }
        let final_rho = rho0 * alpha.powi(iterations as i32);
        Ok(Schedule {
            sigma: 1.0,
            sigma0_den: 1.0 / rho0.sqrt(),
            sigman_den: 1.0 / final_rho.sqrt(),
            iterations,
            rho0,
            alpha,
        })
    }

    pub fn rho(&self, k: usize) -> f64 {
        self.rho0 * self.alpha.powi(k as i32)
    }

    /// Weight of the regularizer relative to the penalty, `sigma^2 / rho^k`.
    pub fn gamma(&self, k: usize) -> f64 {
        self.sigma * self.sigma / self.rho(k)
    }

    /// Denoiser strength `sigma / sqrt(rho^k)` before preconditioning.
    pub fn strength(&self, k: usize) -> f64 {
        self.sigma / self.rho(k).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    /// `b = A x + n` with a pixel sampling `A`; `observation` is stored at full
    /// size and its unsampled entries are ignored.
    LinearDiagonal {
        observation: ImageTensor,
        operator: SamplingOperator,
    },
    /// Poisson counts for an image scaled to `[0, peak]`.
    Poisson { counts: ImageTensor, peak: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PrecondStrategy {
    Identity,
    Mask(MaskPrecondConfig),
    /// `P = sqrt(max(estimate, floor))`, refreshed from the denoiser output
    /// after each iteration when `update` is set.
    Poisson {
        floor: f64,
        update: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub problem: Problem,
    pub precond: PrecondStrategy,
    /// Keep the denoiser output equal to its input at sampled pixels.
    pub passthrough: bool,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.problem {
            Problem::LinearDiagonal {
                observation,
                operator,
            } => {
                operator.shape().ensure_same(&observation.shape())?;
                if matches!(self.precond, PrecondStrategy::Poisson { .. }) {
                    return Err(Error::Config(
                        "Poisson preconditioner needs a Poisson problem".into(),
                    ));
                }
            }
            Problem::Poisson { counts, peak } => {
                if !(*peak > 0.0 && peak.is_finite()) {
                    return Err(Error::param(
                        "peak",
                        format!("{peak} must be finite and > 0"),
                    ));
                }
                if let Some((index, &value)) = counts
                    .data()
                    .iter()
                    .enumerate()
                    .find(|(_, &v)| v < 0.0 || v.fract() != 0.0)
                {
                    return Err(Error::NegativeEntry {
                        what: "Poisson counts (must be non-negative integers)",
                        index,
                        value,
                    });
                }
                if matches!(self.precond, PrecondStrategy::Mask(_)) {
                    return Err(Error::Config(
                        "mask preconditioner needs a sampling problem".into(),
                    ));
                }
                if self.passthrough {
                    return Err(Error::Config("passthrough needs a sampling problem".into()));
                }
            }
        }
        if let PrecondStrategy::Mask(cfg) = &self.precond {
            cfg.validate()?;
        }
        if let PrecondStrategy::Poisson { floor, .. } = self.precond {
            if !(floor > 0.0 && floor.is_finite()) {
                return Err(Error::param(
                    "floor",
                    format!("{floor} must be finite and > 0"),
                ));
            }
        }
        Ok(())
    }

    fn shape(&self) -> crate::tensor::Shape {
        match &self.problem {
            Problem::LinearDiagonal { observation, .. } => observation.shape(),
            Problem::Poisson { counts, .. } => counts.shape(),
        }
    }

    fn known(&self) -> Option<&PixelMask> {
        match &self.problem {
            Problem::LinearDiagonal { operator, .. } => Some(operator.mask()),
            Problem::Poisson { .. } => None,
        }
    }

    /// Data range handed to the denoiser.
    fn range(&self) -> f64 {
        match &self.problem {
            Problem::LinearDiagonal { .. } => 1.0,
            Problem::Poisson { peak, .. } => *peak,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: ImageTensor,
    pub y: ImageTensor,
    pub l: ImageTensor,
    pub k: usize,
    pub rho: f64,
    pub precond: Preconditioner,
}

/// `x0 = P^-1 x_hat`, `y0 = x0`, `l0 = 0`.
pub fn init_state(x_hat: &ImageTensor, precond: &Preconditioner, rho: f64) -> Result<SolverState> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", format!("{rho} must be finite and > 0")));
    }
    let x = precond.apply_inverse(x_hat)?;
    Ok(SolverState {
        y: x.clone(),
        l: ImageTensor::zeros(x.shape()),
        x,
        k: 0,
        rho,
        precond: precond.clone(),
    })
}

/// Closed-form data step for a sampling operator and diagonal `P`:
/// `x_i = (P_i [A^T b]_i + rho y_i - l_i) / (P_i^2 mask_i + rho)`.
pub fn x_update_linear_diagonal(
    state: &SolverState,
    observation: &ImageTensor,
    operator: &SamplingOperator,
) -> Result<ImageTensor> {
    let shape = state.x.shape();
    shape.ensure_same(&observation.shape())?;
    shape.ensure_same(&operator.shape())?;
    let rho = state.rho;
    let data = observation
        .data()
        .iter()
        .zip(operator.mask().data())
        .zip(state.precond.data())
        .zip(state.y.data().iter().zip(state.l.data()))
        .map(|(((&b, &known), &p), (&y, &l))| {
            if known {
                (p * b + rho * y - l) / (p * p + rho)
            } else {
                (rho * y - l) / rho
            }
        })
        .collect();
    Ok(ImageTensor::from_raw(shape, data))
}

/// Positive root of `rho x^2 + (p - rho u) x - b = 0`, the minimizer of
/// `p x - b log(x) + rho/2 (x - u)^2` over `x >= 0`.
#[inline]
pub fn poisson_prox(u: f64, b: f64, p: f64, rho: f64) -> f64 {
    let t = rho * u - p;
    let disc = (t * t + 4.0 * rho * b).sqrt();
    // Avoid cancellation when t > 0 by using the conjugate form.
    let x = if t <= 0.0 {
        2.0 * b / (disc - t)
    } else {
        (t + disc) / (2.0 * rho)
    };
    if x.is_nan() {
        // b = 0 and t <= 0 gives 0 / 0: the constrained minimizer is 0.
        0.0
    } else {
        x
    }
}

/// Element-wise Poisson data step; `u = y - l / rho`.
pub fn x_update_poisson(
    u: &ImageTensor,
    b: &ImageTensor,
    precond: &Preconditioner,
    rho: f64,
) -> Result<ImageTensor> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", format!("{rho} must be finite and > 0")));
    }
    u.shape().ensure_same(&b.shape())?;
    u.shape().ensure_same(&precond.shape())?;
    if let Some((index, &value)) = b.data().iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeEntry {
            what: "Poisson counts",
            index,
            value,
        });
    }
    let data = u
        .data()
        .iter()
        .zip(b.data())
        .zip(precond.data())
        .map(|((&u, &b), &p)| poisson_prox(u, b, p, rho))
        .collect();
    Ok(ImageTensor::from_raw(u.shape(), data))
}

/// Result of a denoiser step: `y` in preconditioned units and the raw
/// denoiser output `P y` in image units.
#[derive(Debug, Clone, PartialEq)]
pub struct YUpdate {
    pub y: ImageTensor,
    pub denoised: ImageTensor,
}

/// Denoiser step `y = P^-1 G^range(P (x + l/rho), sigma_eff P / sqrt(rho))`.
///
/// For sampling problems `sigma_eff` is the schedule's noise level; for
/// Poisson data it is one, since the noise level is carried by `P`.
pub fn y_update(
    state: &SolverState,
    spec: &ProblemSpec,
    schedule: &Schedule,
    denoiser: &mut dyn Denoiser,
) -> Result<YUpdate> {
    let rho = state.rho;
    let inv_rho = 1.0 / rho;
    let shape = state.x.shape();
    let p = state.precond.data();
    let input: Vec<f64> = state
        .x
        .data()
        .iter()
        .zip(state.l.data())
        .zip(p)
        .map(|((&x, &l), &p)| p * (x + l * inv_rho))
        .collect();
    let input = ImageTensor::new(shape, input)?;
    let sigma_eff = match spec.problem {
        Problem::LinearDiagonal { .. } => schedule.sigma,
        Problem::Poisson { .. } => 1.0,
    };
    let strength = sigma_eff / rho.sqrt();
    let map = NoiseLevelMap::new(state.precond.values().scale(strength))?;
    let mut denoised = denoise_rescaled(denoiser, &input, &map, spec.range())?;
    shape.ensure_same(&denoised.shape())?;
    if spec.passthrough {
        if let Some(known) = spec.known() {
            let data: Vec<f64> = denoised
                .data()
                .iter()
                .zip(input.data())
                .zip(known.data())
                .map(|((&d, &v), &k)| if k { v } else { d })
                .collect();
            denoised = ImageTensor::from_raw(shape, data);
        }
    }
    let y = state.precond.apply_inverse(&denoised)?;
    Ok(YUpdate { y, denoised })
}

/// `l + rho (x - y)`.
pub fn dual_update(state: &SolverState) -> ImageTensor {
    let rho = state.rho;
    let data = state
        .l
        .data()
        .iter()
        .zip(state.x.data().iter().zip(state.y.data()))
        .map(|(&l, (&x, &y))| l + rho * (x - y))
        .collect();
    ImageTensor::from_raw(state.x.shape(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub rho: f64,
    /// `mse(P x, P y)` after the iteration, in image units.
    pub xy_mse: f64,
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    /// Ground truth in `[0, 1]` for per-iteration PSNR.
    pub reference: Option<&'a ImageTensor>,
    /// Stop once the constraint residual falls below this value. Off by default.
    pub stop_below: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationResult {
    /// Final estimate clipped to `[0, 1]`.
    pub image: ImageTensor,
    pub trace: Vec<TraceRow>,
    pub state: SolverState,
}

impl RestorationResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

fn initial_preconditioner(spec: &ProblemSpec, init: &ImageTensor) -> Result<Preconditioner> {
    Ok(match (&spec.precond, &spec.problem) {
        (PrecondStrategy::Identity, _) => Preconditioner::identity(init.shape()),
        (PrecondStrategy::Mask(cfg), Problem::LinearDiagonal { operator, .. }) => {
            mask_preconditioner(operator.mask(), 0, cfg)?
        }
        (PrecondStrategy::Poisson { floor, .. }, Problem::Poisson { .. }) => {
            poisson_precond_update(init, *floor)?
        }
        _ => unreachable!("rejected by ProblemSpec::validate"),
    })
}

/// Runs `schedule.iterations` ADMM iterations from the natural-unit estimate
/// `init` and returns the final denoiser output, divided by the data range and
/// clipped to `[0, 1]`.
///
/// Iteration `k` (producing `x^{k+1}`, `y^{k+1}`) uses `P^{k+1}`: the mask
/// preconditioner at blur level `k + 1`, or for Poisson data the square root
/// of the previous denoiser output. When the mask preconditioner changes,
/// `x`, `y` and `l` are rescaled so that `P x`, `P y` and `P l` carry over;
/// Poisson iterates are kept as they are.
pub fn run_admm(
    spec: &ProblemSpec,
    schedule: &Schedule,
    init: &ImageTensor,
    denoiser: &mut dyn Denoiser,
    options: &RunOptions<'_>,
) -> Result<RestorationResult> {
    spec.validate()?;
    let shape = spec.shape();
    shape.ensure_same(&init.shape())?;
    if let Some(reference) = options.reference {
        shape.ensure_same(&reference.shape())?;
    }
    if let PrecondStrategy::Mask(cfg) = &spec.precond {
        if cfg.iterations != schedule.iterations {
            return Err(Error::Config(format!(
                "mask preconditioner horizon {} differs from the schedule's {} iterations",
                cfg.iterations, schedule.iterations
            )));
        }
    }
    let range = spec.range();
    let precond = initial_preconditioner(spec, init)?;
    let mut state = init_state(init, &precond, schedule.rho(0))?;
    let mut latest = init.clone();
    let mut trace = Vec::with_capacity(schedule.iterations);

    for k in 0..schedule.iterations {
        let mut step = |state: &mut SolverState| -> Result<(ImageTensor, f64)> {
            state.rho = schedule.rho(k);
            match &spec.precond {
                PrecondStrategy::Mask(cfg) => {
                    let Problem::LinearDiagonal { operator, .. } = &spec.problem else {
                        unreachable!()
                    };
                    let next = mask_preconditioner(operator.mask(), k + 1, cfg)?;
                    change_preconditioner(state, next, true)?;
                }
                PrecondStrategy::Poisson {
                    floor,
                    update: true,
                } if k > 0 => {
                    let next = poisson_precond_update(&latest, *floor)?;
                    // Poisson iterates stay as they are when P is refreshed.
                    change_preconditioner(state, next, false)?;
                }
                _ => {}
            }
            state.x = match &spec.problem {
                Problem::LinearDiagonal {
                    observation,
                    operator,
                } => x_update_linear_diagonal(state, observation, operator)?,
                Problem::Poisson { counts, .. } => {
                    let inv = 1.0 / state.rho;
                    let u = state.y.zip_map(&state.l, |y, l| y - l * inv)?;
                    x_update_poisson(&u, counts, &state.precond, state.rho)?
                }
            };
            let YUpdate { y, denoised } = y_update(state, spec, schedule, denoiser)?;
            state.y = y;
            state.l = dual_update(state);
            state.k = k + 1;
            if !(state.x.is_finite() && state.l.is_finite()) {
                return Err(Error::NonFinite("solver iterate"));
            }
            let px = state.precond.apply(&state.x)?;
            let xy_mse = mse_between(&px, &denoised)?;
            Ok((denoised, xy_mse))
        };
        let (denoised, xy_mse) = step(&mut state).map_err(|e| e.at_iteration(k))?;
        latest = denoised;
        let psnr = match options.reference {
            Some(r) => Some(psnr(r, &finalize(&latest, range), 1.0)?),
            None => None,
        };
        trace.push(TraceRow {
            k,
            rho: state.rho,
            xy_mse,
            psnr,
        });
        if options.stop_below.is_some_and(|t| xy_mse < t) {
            break;
        }
    }

    let mut image = finalize(&latest, range);
    // Rounding in P (P^-1 v) can move sampled entries by an ulp; put the
    // observed values back so that noise-free data is reproduced exactly.
    if spec.passthrough {
        if let Problem::LinearDiagonal {
            observation,
            operator,
        } = &spec.problem
        {
            let data = image
                .data()
                .iter()
                .zip(observation.data())
                .zip(operator.mask().data())
                .map(|((&v, &b), &k)| if k { b.clamp(0.0, 1.0) } else { v })
                .collect();
            image = ImageTensor::from_raw(shape, data);
        }
    }
    Ok(RestorationResult {
        image,
        trace,
        state,
    })
}

/// Switches to a new preconditioner. With `rescale`, the iterates are
/// converted so that `P x`, `P y` and `P l` are unchanged.
fn change_preconditioner(
    state: &mut SolverState,
    next: Preconditioner,
    rescale: bool,
) -> Result<()> {
    if rescale && next != state.precond {
        let ratio = state
            .precond
            .values()
            .zip_map(next.values(), |old, new| old / new)?;
        state.x = state.x.zip_map(&ratio, |v, r| v * r)?;
        state.y = state.y.zip_map(&ratio, |v, r| v * r)?;
        state.l = state.l.zip_map(&ratio, |v, r| v * r)?;
    }
    state.precond = next;
    Ok(())
}

fn finalize(estimate: &ImageTensor, range: f64) -> ImageTensor {
    if range == 1.0 {
        estimate.clamp(0.0, 1.0)
    } else {
        estimate.scale(1.0 / range).clamp(0.0, 1.0)
    }
}
