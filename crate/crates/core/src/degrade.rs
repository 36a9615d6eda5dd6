//! Forward degradation operators and noise synthesis.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{self, streams, StreamRng};
use crate::tensor::{ImageTensor, PixelMask, Shape};

/// Random spatial sampling pattern with exactly `round(rate * h * w)` known
/// positions, shared across all channels.
pub fn make_random_pattern(
    height: usize,
    width: usize,
    channels: usize,
    rate: f64,
    seed: u64,
) -> Result<PixelMask> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::param("rate", format!("{rate} is outside (0, 1]")));
    }
    let pixels = height * width;
    let count = (rate * pixels as f64).round() as usize;
    let mut order: Vec<usize> = (0..pixels).collect();
    order.shuffle(&mut rng::stream(seed, streams::PATTERN));
    let mut spatial = vec![false; pixels];
    for &p in &order[..count] {
        spatial[p] = true;
    }
    PixelMask::new(Shape::new(height, width, 1), spatial)?.broadcast(channels)
}

/// Regular grid keeping every `factor`-th row and column, starting at (0, 0).
pub fn make_regular_grid_pattern(
    height: usize,
    width: usize,
    channels: usize,
    factor: usize,
) -> Result<PixelMask> {
    if factor < 2 {
        return Err(Error::param("factor", format!("{factor} must be >= 2")));
    }
    let spatial = (0..height)
        .flat_map(|i| (0..width).map(move |j| i % factor == 0 && j % factor == 0))
        .collect();
    PixelMask::new(Shape::new(height, width, 1), spatial)?.broadcast(channels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BayerCfa {
    #[default]
    Rggb,
    Grbg,
    Gbrg,
    Bggr,
}

impl BayerCfa {
    pub const ALL: [BayerCfa; 4] = [
        BayerCfa::Rggb,
        BayerCfa::Grbg,
        BayerCfa::Gbrg,
        BayerCfa::Bggr,
    ];

    /// Color channel (0 = R, 1 = G, 2 = B) recorded at the given sensor site.
    pub fn color_at(self, row: usize, col: usize) -> usize {
        const R: usize = 0;
        const G: usize = 1;
        const B: usize = 2;
        let block = match self {
            BayerCfa::Rggb => [[R, G], [G, B]],
            BayerCfa::Grbg => [[G, R], [B, G]],
            BayerCfa::Gbrg => [[G, B], [R, G]],
            BayerCfa::Bggr => [[B, G], [G, R]],
        };
        block[row % 2][col % 2]
    }
}

impl fmt::Display for BayerCfa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BayerCfa::Rggb => "RGGB",
            BayerCfa::Grbg => "GRBG",
            BayerCfa::Gbrg => "GBRG",
            BayerCfa::Bggr => "BGGR",
        };
        f.write_str(s)
    }
}

impl FromStr for BayerCfa {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(BayerCfa::Rggb),
            "GRBG" => Ok(BayerCfa::Grbg),
            "GBRG" => Ok(BayerCfa::Gbrg),
            "BGGR" => Ok(BayerCfa::Bggr),
            _ => Err(Error::param("cfa", format!("unknown layout {s:?}"))),
        }
    }
}

/// Three-channel mask with exactly one channel set at every spatial position.
pub fn cfa_masks(cfa: BayerCfa, height: usize, width: usize) -> Result<PixelMask> {
    if height < 2 || width < 2 {
        return Err(Error::param(
            "shape",
            format!("CFA needs at least 2x2 pixels, got {height}x{width}"),
        ));
    }
    let data = (0..height)
        .flat_map(|i| {
            (0..width).flat_map(move |j| {
                let color = cfa.color_at(i, j);
                (0..3).map(move |c| c == color)
            })
        })
        .collect();
    PixelMask::new(Shape::new(height, width, 3), data)
}

/// Diagonal sampling operator `A`: keeps the entries flagged in its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingOperator {
    mask: PixelMask,
}

impl SamplingOperator {
    pub fn new(mask: PixelMask) -> Result<Self> {
        if mask.count() == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(SamplingOperator { mask })
    }

    pub fn mask(&self) -> &PixelMask {
        &self.mask
    }

    pub fn shape(&self) -> Shape {
        self.mask.shape()
    }

    /// `A^T A x`, i.e. `mask ⊙ x` embedded in image shape.
    pub fn apply(&self, x: &ImageTensor) -> Result<ImageTensor> {
        apply_sampling(x, self)
    }
}

pub fn apply_sampling(x: &ImageTensor, op: &SamplingOperator) -> Result<ImageTensor> {
    op.shape().ensure_same(&x.shape())?;
    Ok(ImageTensor::from_raw(
        x.shape(),
        x.data()
            .iter()
            .zip(op.mask.data())
            .map(|(&v, &keep)| if keep { v } else { 0.0 })
            .collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    Poisson { peak: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn apply(&self, x: &ImageTensor) -> Result<ImageTensor> {
        match self.kind {
            NoiseKind::Gaussian { sigma } => add_gaussian_noise(x, sigma, self.seed),
            NoiseKind::Poisson { peak } => add_poisson_noise(x, peak, self.seed),
        }
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise.
pub fn add_gaussian_noise(x: &ImageTensor, sigma: f64, seed: u64) -> Result<ImageTensor> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(
            "sigma",
            format!("{sigma} must be finite and >= 0"),
        ));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = rng::stream(seed, streams::GAUSSIAN_NOISE);
    Ok(ImageTensor::from_raw(
        x.shape(),
        x.data()
            .iter()
            .map(|&v| {
                let n: f64 = StandardNormal.sample(&mut rng);
                v + sigma * n
            })
            .collect(),
    ))
}

/// Replaces every entry `x_i` by a draw of `Poisson(peak * x_i)`; the result
/// is in photon counts.
pub fn add_poisson_noise(x: &ImageTensor, peak: f64, seed: u64) -> Result<ImageTensor> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::param(
            "peak",
            format!("{peak} must be finite and > 0"),
        ));
    }
    if let Some((index, &value)) = x.data().iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeEntry {
            what: "Poisson input",
            index,
            value,
        });
    }
    let mut rng = rng::stream(seed, streams::POISSON_NOISE);
    Ok(ImageTensor::from_raw(
        x.shape(),
        x.data()
            .iter()
            .map(|&v| sample_poisson(peak * v, &mut rng))
            .collect(),
    ))
}

const INVERSION_LIMIT: f64 = 30.0;

/// Draws one Poisson variate.
///
/// Means below 30 use sequential inversion of the CDF; larger means use
/// Hörmann's transformed rejection with squeeze (PTRS), which is exact.
pub fn sample_poisson(mean: f64, rng: &mut StreamRng) -> f64 {
    if mean <= 0.0 {
        0.0
    } else if mean < INVERSION_LIMIT {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

fn poisson_inversion(mean: f64, rng: &mut StreamRng) -> f64 {
    let u: f64 = rng.random();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u32;
    // The tail mass beyond k = 1000 is far below f64 resolution for mean < 30.
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / f64::from(k);
        cdf += p;
    }
    f64::from(k)
}

fn poisson_ptrs(mean: f64, rng: &mut StreamRng) -> f64 {
    let log_mean = mean.ln();
    let smu = mean.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln()
            <= -mean + k * log_mean - ln_gamma(k + 1.0)
        {
            return k;
        }
    }
}
