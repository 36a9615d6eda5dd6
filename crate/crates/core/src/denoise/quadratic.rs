use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, NoiseLevelMap};

use super::Denoiser;

#[derive(Debug, Clone, PartialEq)]
pub enum PriorMean {
    Constant(f64),
    Image(ImageTensor),
}

impl PriorMean {
    #[inline]
    fn at(&self, index: usize) -> f64 {
        match self {
            PriorMean::Constant(c) => *c,
            PriorMean::Image(img) => img.data()[index],
        }
    }
}

/// Exact MAP denoiser for the Gaussian prior `R(x) = kappa/2 * ||x - c||^2`.
///
/// With this prior every sub-problem of the solver has a closed form, which
/// makes it the reference denoiser for end-to-end equivalence checks.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPrior {
    kappa: f64,
    mean: PriorMean,
}

impl QuadraticPrior {
    pub fn new(kappa: f64, mean: PriorMean) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::param(
                "kappa",
                format!("{kappa} must be finite and > 0"),
            ));
        }
        if let PriorMean::Constant(c) = mean {
            if !c.is_finite() {
                return Err(Error::NonFinite("prior mean"));
            }
        }
        Ok(QuadraticPrior { kappa, mean })
    }

    pub fn default_kappa() -> f64 {
        1.0
    }

    pub fn default_mean() -> f64 {
        0.5
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn mean(&self) -> &PriorMean {
        &self.mean
    }
}

impl Default for QuadraticPrior {
    fn default() -> Self {
        QuadraticPrior {
            kappa: Self::default_kappa(),
            mean: PriorMean::Constant(Self::default_mean()),
        }
    }
}

/// `x_i = (u_i + kappa s_i^2 c_i) / (1 + kappa s_i^2)`, and `x_i = u_i` where `s_i = 0`.
pub fn quadratic_prior_denoise(
    u: &ImageTensor,
    s: &NoiseLevelMap,
    params: &QuadraticPrior,
) -> Result<ImageTensor> {
    u.shape().ensure_same(&s.shape())?;
    if let PriorMean::Image(c) = &params.mean {
        u.shape().ensure_same(&c.shape())?;
    }
    let kappa = params.kappa;
    let out = u
        .data()
        .iter()
        .zip(s.data())
        .enumerate()
        .map(|(i, (&ui, &si))| {
            if si == 0.0 {
                ui
            } else {
                let w = kappa * si * si;
                (ui + w * params.mean.at(i)) / (1.0 + w)
            }
        })
        .collect();
    Ok(ImageTensor::from_raw(u.shape(), out))
}

impl Denoiser for QuadraticPrior {
    fn denoise(&mut self, u: &ImageTensor, s: &NoiseLevelMap) -> Result<ImageTensor> {
        quadratic_prior_denoise(u, s, self)
    }

    fn name(&self) -> &str {
        "quadratic"
    }
}
