//! Locally adjustable Gaussian denoisers.
//!
//! A denoiser takes an image `u` and a noise level map `s` of the same shape
//! and returns the MAP estimate under independent Gaussian noise with
//! per-entry standard deviation `s_i`. Every implementation must return its
//! input unchanged where `s_i == 0` and must be deterministic.

pub mod external;
pub mod noise_map;
pub mod protocol;
mod quadratic;
mod smoothing;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{ImageTensor, NoiseLevelMap};

pub use external::{ExternalDenoiser, ExternalError};
pub use noise_map::{
    generate_cfa_noise_map, generate_noise_map_constant, generate_noise_map_rgb,
    generate_noise_map_variable, noise_map_from_draws, MapGenParams,
};
pub use quadratic::{quadratic_prior_denoise, PriorMean, QuadraticPrior};
pub use smoothing::{adaptive_smoothing_denoise, AdaptiveSmoothing};

pub trait Denoiser: Send {
    fn denoise(&mut self, u: &ImageTensor, s: &NoiseLevelMap) -> Result<ImageTensor>;

    fn name(&self) -> &str;
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn denoise(&mut self, u: &ImageTensor, s: &NoiseLevelMap) -> Result<ImageTensor> {
        (**self).denoise(u, s)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Returns its input; useful as a no-prior baseline and for bridge tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&mut self, u: &ImageTensor, s: &NoiseLevelMap) -> Result<ImageTensor> {
        u.shape().ensure_same(&s.shape())?;
        Ok(u.clone())
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Applies a unit-range denoiser to data in `[0, scale]`:
/// `scale * G(u / scale, s / scale)`.
pub fn denoise_rescaled(
    denoiser: &mut dyn Denoiser,
    u: &ImageTensor,
    s: &NoiseLevelMap,
    scale: f64,
) -> Result<ImageTensor> {
    if scale == 1.0 {
        return denoiser.denoise(u, s);
    }
    let inv = 1.0 / scale;
    let scaled_map = NoiseLevelMap::from_raw(s.values().scale(inv));
    Ok(denoiser.denoise(&u.scale(inv), &scaled_map)?.scale(scale))
}

/// Serializable choice of built-in or external denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DenoiserChoice {
    Identity,
    Quadratic {
        #[serde(default = "QuadraticPrior::default_kappa")]
        kappa: f64,
        #[serde(default = "QuadraticPrior::default_mean")]
        mean: f64,
    },
    Smoothing {
        #[serde(default = "AdaptiveSmoothing::default_beta")]
        beta: f64,
        #[serde(default = "AdaptiveSmoothing::default_h_max")]
        h_max: f64,
    },
    /// External adapter process; an empty command defers to the caller
    /// (for instance the `PNP_ADAPTER` environment variable).
    External {
        #[serde(default, skip_serializing_if = "String::is_empty")]
        command: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: f64,
    },
}

fn default_timeout_secs() -> f64 {
    60.0
}

impl Default for DenoiserChoice {
    fn default() -> Self {
        DenoiserChoice::Smoothing {
            beta: AdaptiveSmoothing::default_beta(),
            h_max: AdaptiveSmoothing::default_h_max(),
        }
    }
}

impl DenoiserChoice {
    pub fn build(&self) -> Result<Box<dyn Denoiser>> {
        Ok(match self {
            DenoiserChoice::Identity => Box::new(IdentityDenoiser),
            DenoiserChoice::Quadratic { kappa, mean } => {
                Box::new(QuadraticPrior::new(*kappa, PriorMean::Constant(*mean))?)
            }
            DenoiserChoice::Smoothing { beta, h_max } => {
                Box::new(AdaptiveSmoothing::new(*beta, *h_max)?)
            }
            DenoiserChoice::External {
                command,
                timeout_secs,
            } => {
                if command.trim().is_empty() {
                    return Err(crate::Error::Config(
                        "external denoiser selected but no adapter command given".into(),
                    ));
                }
                Box::new(ExternalDenoiser::spawn(
                    command,
                    std::time::Duration::from_secs_f64(*timeout_secs),
                )?)
            }
        })
    }
}
