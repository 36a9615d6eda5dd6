//! Diagonal preconditioners.
//!
//! A preconditioner is stored as an image-shaped tensor holding the diagonal
//! of `P`, one plane per channel. Every entry is strictly positive so `P` is
//! always invertible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::blur_plane;
use crate::tensor::{ImageTensor, PixelMask, Shape};

#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner(ImageTensor);

impl Preconditioner {
    pub fn new(values: ImageTensor) -> Result<Self> {
        if let Some((index, &value)) = values.data().iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(Error::param(
                "preconditioner",
                format!("entry {index} is {value}, entries must be > 0"),
            ));
        }
        Ok(Preconditioner(values))
    }

    pub fn identity(shape: Shape) -> Self {
        Preconditioner(ImageTensor::filled(shape, 1.0))
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }

    pub fn values(&self) -> &ImageTensor {
        &self.0
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    /// `P x`
    pub fn apply(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.0.zip_map(x, |p, v| p * v)
    }

    /// `P^{-1} x`
    pub fn apply_inverse(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.0.zip_map(x, |p, v| v / p)
    }

    pub fn is_identity(&self) -> bool {
        self.0.data().iter().all(|&p| p == 1.0)
    }
}

pub fn identity_preconditioner(shape: Shape) -> Preconditioner {
    Preconditioner::identity(shape)
}

/// Parameters of the known-pixel mask preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskPrecondConfig {
    /// Regularizer of the ratio; the largest entry is `(1 + eps) / eps`.
    pub eps: f64,
    /// Blur applied to the mask at the last iteration.
    pub sigma_f_last: f64,
    pub iterations: usize,
}

impl MaskPrecondConfig {
    pub fn new(eps: f64, sigma_f_last: f64, iterations: usize) -> Result<Self> {
        let cfg = MaskPrecondConfig {
            eps,
            sigma_f_last,
            iterations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `eps` giving the requested maximum value.
    pub fn eps_for_p_max(p_max: f64) -> f64 {
        1.0 / (p_max - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::param("eps", format!("{} must be > 0", self.eps)));
        }
        if !(self.sigma_f_last >= 0.0 && self.sigma_f_last.is_finite()) {
            return Err(Error::param(
                "sigma_f_last",
                format!("{} must be >= 0", self.sigma_f_last),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be >= 1"));
        }
        Ok(())
    }

    pub fn p_max(&self) -> f64 {
        (1.0 + self.eps) / self.eps
    }

    /// Per-iteration blur so that iteration `N` sees exactly `sigma_f_last`.
    pub fn sigma_f(&self) -> f64 {
        self.sigma_f_last / (self.iterations as f64).sqrt()
    }

    /// Blur of the mask at iteration `k`, `sigma_f * sqrt(k)`.
    pub fn blur_at(&self, k: usize) -> f64 {
        self.sigma_f() * (k as f64).sqrt()
    }
}

/// Normalized truncated Gaussian blur of a real-valued map, plane by plane.
pub fn gaussian_blur_mask(m: &ImageTensor, sigma_blur: f64) -> Result<ImageTensor> {
    if !(sigma_blur >= 0.0 && sigma_blur.is_finite()) {
        return Err(Error::param(
            "sigma_blur",
            format!("{sigma_blur} must be >= 0"),
        ));
    }
    if sigma_blur == 0.0 {
        return Ok(m.clone());
    }
    Ok(map_planes(m, |plane, h, w| {
        blur_plane(plane, h, w, sigma_blur)
    }))
}

pub(crate) fn map_planes(
    t: &ImageTensor,
    f: impl Fn(&[f64], usize, usize) -> Vec<f64>,
) -> ImageTensor {
    let s = t.shape();
    let mut out = vec![0.0; s.len()];
    for c in 0..s.channels {
        let plane: Vec<f64> = t
            .data()
            .iter()
            .skip(c)
            .step_by(s.channels)
            .copied()
            .collect();
        let filtered = f(&plane, s.height, s.width);
        for (p, v) in filtered.into_iter().enumerate() {
            out[p * s.channels + c] = v;
        }
    }
    ImageTensor::from_raw(s, out)
}

/// Preconditioner at iteration `k` built from the known-pixel mask:
/// `P_i = (max(m) + eps) / (m_i + eps)` with `m = m0 * g(sigma_f sqrt(k))`.
///
/// The blurred mask is computed directly from `m0` rather than by repeated
/// blurring. The maximum is taken per channel plane, so a CFA mask yields one
/// independent preconditioner plane per color.
pub fn mask_preconditioner(
    m0: &PixelMask,
    k: usize,
    cfg: &MaskPrecondConfig,
) -> Result<Preconditioner> {
    cfg.validate()?;
    let s = m0.shape();
    for c in 0..s.channels {
        if m0.channel(c).count() == 0 {
            return Err(Error::EmptyMask);
        }
    }
    let eps = cfg.eps;
    let blurred = gaussian_blur_mask(&m0.to_tensor(), cfg.blur_at(k))?;
    let values = map_planes(&blurred, |plane, _, _| {
        let max = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        plane.iter().map(|&m| (max + eps) / (m + eps)).collect()
    });
    Preconditioner::new(values)
}

fn sqrt_floored(what: &'static str, t: &ImageTensor, floor: f64) -> Result<Preconditioner> {
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(Error::param(what, format!("floor {floor} must be > 0")));
    }
    Ok(Preconditioner(t.map(|v| v.max(floor).sqrt())))
}

/// Initial Poisson preconditioner `sqrt(max(b, floor))` from the observed counts.
pub fn poisson_precond_init(b: &ImageTensor, floor: f64) -> Result<Preconditioner> {
    if let Some((index, &value)) = b.data().iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeEntry {
            what: "Poisson observation",
            index,
            value,
        });
    }
    sqrt_floored("floor", b, floor)
}

/// Refreshed Poisson preconditioner from the latest denoiser output (count units).
/// Negative outputs are floored.
pub fn poisson_precond_update(denoised: &ImageTensor, floor: f64) -> Result<Preconditioner> {
    sqrt_floored("floor", denoised, floor)
}
