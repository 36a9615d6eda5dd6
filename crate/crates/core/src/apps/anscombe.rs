//! Variance-stabilizing transform for Poisson counts.

use crate::denoise::{denoise_rescaled, Denoiser};
use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, NoiseLevelMap};

/// `2 sqrt(v + 3/8)`; counts then have roughly unit variance.
pub fn anscombe_forward(b: &ImageTensor) -> Result<ImageTensor> {
    if let Some((index, &value)) = b.data().iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeEntry {
            what: "Anscombe input",
            index,
            value,
        });
    }
    Ok(b.map(|v| 2.0 * (v + 0.375).sqrt()))
}

/// Algebraic inverse `(z/2)^2 - 3/8`, floored at zero.
pub fn anscombe_inverse(z: &ImageTensor) -> ImageTensor {
    z.map(|v| (0.25 * v * v - 0.375).max(0.0))
}

/// Intensity estimate from counts: stabilize, denoise with unit noise level,
/// invert. The denoiser sees the transformed data divided by
/// `2 sqrt(peak + 3/8)`, the transform of the peak intensity, so it works on
/// roughly unit-range input.
pub fn anscombe_estimate(
    counts: &ImageTensor,
    peak: f64,
    denoiser: &mut dyn Denoiser,
) -> Result<ImageTensor> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::param(
            "peak",
            format!("{peak} must be finite and > 0"),
        ));
    }
    let z = anscombe_forward(counts)?;
    let scale = 2.0 * (peak + 0.375).sqrt();
    let map = NoiseLevelMap::constant(z.shape(), 1.0)?;
    let denoised = denoise_rescaled(denoiser, &z, &map, scale)?;
    Ok(anscombe_inverse(&denoised))
}
