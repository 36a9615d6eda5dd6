use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::reflect;
use crate::tensor::{ImageTensor, NoiseLevelMap};

use super::Denoiser;

/// Classical stand-in for a locally adjustable denoiser: every entry is
/// replaced by a normalized Gaussian-weighted average of its spatial
/// neighbourhood (same channel), with bandwidth `min(beta * s_i, h_max)` pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveSmoothing {
    beta: f64,
    h_max: f64,
}

impl AdaptiveSmoothing {
    pub fn new(beta: f64, h_max: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param(
                "beta",
                format!("{beta} must be finite and > 0"),
            ));
        }
        if !(h_max >= 0.0 && h_max.is_finite()) {
            return Err(Error::param(
                "h_max",
                format!("{h_max} must be finite and >= 0"),
            ));
        }
        Ok(AdaptiveSmoothing { beta, h_max })
    }

    pub fn default_beta() -> f64 {
        4.0
    }

    pub fn default_h_max() -> f64 {
        8.0
    }

    pub fn bandwidth(&self, sigma: f64) -> f64 {
        (self.beta * sigma).min(self.h_max)
    }
}

impl Default for AdaptiveSmoothing {
    fn default() -> Self {
        AdaptiveSmoothing {
            beta: Self::default_beta(),
            h_max: Self::default_h_max(),
        }
    }
}

pub fn adaptive_smoothing_denoise(
    u: &ImageTensor,
    s: &NoiseLevelMap,
    beta: f64,
    h_max: f64,
) -> Result<ImageTensor> {
    AdaptiveSmoothing::new(beta, h_max)?.smooth(u, s)
}

impl AdaptiveSmoothing {
    fn smooth(&self, u: &ImageTensor, s: &NoiseLevelMap) -> Result<ImageTensor> {
        u.shape().ensure_same(&s.shape())?;
        let shape = u.shape();
        let (h, w, ch) = (shape.height, shape.width, shape.channels);
        let src = u.data();
        let sig = s.data();
        let row_len = w * ch;
        let mut out = vec![0.0; shape.len()];
        out.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| {
                for j in 0..w {
                    for c in 0..ch {
                        let idx = shape.index(i, j, c);
                        let bw = self.bandwidth(sig[idx]);
                        row[j * ch + c] = if bw <= 0.0 {
                            src[idx]
                        } else {
                            smooth_at(src, h, w, ch, i, j, c, bw)
                        };
                    }
                }
            });
        Ok(ImageTensor::from_raw(shape, out))
    }
}

#[allow(clippy::too_many_arguments)]
fn smooth_at(
    src: &[f64],
    h: usize,
    w: usize,
    ch: usize,
    i: usize,
    j: usize,
    c: usize,
    bw: f64,
) -> f64 {
    let radius = (3.0 * bw).ceil() as isize;
    let inv = 1.0 / (2.0 * bw * bw);
    // Separable weights: w(dy, dx) = g(dy) g(dx).
    let g: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) * inv).exp())
        .collect();
    let mut acc = 0.0;
    for (ty, gy) in g.iter().enumerate() {
        let y = reflect(i as isize + ty as isize - radius, h);
        let mut row_acc = 0.0;
        for (tx, gx) in g.iter().enumerate() {
            let x = reflect(j as isize + tx as isize - radius, w);
            row_acc += gx * src[(y * w + x) * ch + c];
        }
        acc += gy * row_acc;
    }
    let gsum: f64 = g.iter().sum();
    acc / (gsum * gsum)
}

impl Denoiser for AdaptiveSmoothing {
    fn denoise(&mut self, u: &ImageTensor, s: &NoiseLevelMap) -> Result<ImageTensor> {
        self.smooth(u, s)
    }

    fn name(&self) -> &str {
        "smoothing"
    }
}
