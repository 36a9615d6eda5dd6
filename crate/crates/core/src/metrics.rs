//! Image quality metrics.

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Mean of squared differences over every entry (all channels jointly).
pub fn mse_between(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.shape().ensure_same(&b.shape())?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in decibels.
///
/// Returns `f64::INFINITY` when the images are identical.
pub fn psnr(reference: &ImageTensor, test: &ImageTensor, peak: f64) -> Result<f64> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::param(
            "peak",
            format!("{peak} must be finite and > 0"),
        ));
    }
    let mse = mse_between(reference, test)?;
    Ok(psnr_from_mse(mse, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Formats a PSNR value with four decimals, or `inf` for identical images.
pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() && db > 0.0 {
        "inf".to_owned()
    } else {
        format!("{db:.4}")
    }
}
