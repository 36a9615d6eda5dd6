//! Random noise level maps for training-style sampling and CFA-structured maps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::{cfa_masks, BayerCfa};
use crate::error::{Error, Result};
use crate::precond::{mask_preconditioner, MaskPrecondConfig};
use crate::rng::{self, streams};
use crate::tensor::{ImageTensor, NoiseLevelMap, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapGenParams {
    /// Expected noise level; samples lie in `[0, 2 mu]`.
    pub mu: f64,
    pub seed: u64,
}

impl MapGenParams {
    pub fn new(mu: f64, seed: u64) -> Result<Self> {
        let p = MapGenParams { mu, seed };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::param(
                "mu",
                format!("{} must be finite and > 0", self.mu),
            ));
        }
        Ok(())
    }
}

/// Constant map `2 mu X` with a single `X ~ U[0, 1]`.
pub fn generate_noise_map_constant(shape: Shape, params: &MapGenParams) -> Result<NoiseLevelMap> {
    params.validate()?;
    let mut rng = rng::stream(params.seed, streams::NOISE_MAP);
    let x: f64 = rng.random();
    Ok(NoiseLevelMap::from_raw(ImageTensor::filled(
        shape,
        2.0 * params.mu * x,
    )))
}

/// Map `S_i = 2 mu (X_i (1 - W) + O W)` built from explicit draws.
pub fn noise_map_from_draws(
    shape: Shape,
    mu: f64,
    weight: f64,
    offset: f64,
    xs: &[f64],
) -> Result<NoiseLevelMap> {
    if xs.len() != shape.len() {
        return Err(Error::param(
            "xs",
            format!("need {} draws, got {}", shape.len(), xs.len()),
        ));
    }
    let data = xs
        .iter()
        .map(|&x| 2.0 * mu * (x * (1.0 - weight) + offset * weight))
        .collect();
    NoiseLevelMap::new(ImageTensor::new(shape, data)?)
}

fn variable_plane(len: usize, mu: f64, rng: &mut impl Rng) -> Vec<f64> {
    let weight: f64 = rng.random();
    let offset: f64 = rng.random();
    (0..len)
        .map(|_| {
            let x: f64 = rng.random();
            2.0 * mu * (x * (1.0 - weight) + offset * weight)
        })
        .collect()
}

/// Spatially varying map: one `(W, O)` pair per map, i.i.d. `X_i` per entry.
pub fn generate_noise_map_variable(shape: Shape, params: &MapGenParams) -> Result<NoiseLevelMap> {
    params.validate()?;
    let mut rng = rng::stream(params.seed, streams::NOISE_MAP);
    let data = variable_plane(shape.len(), params.mu, &mut rng);
    Ok(NoiseLevelMap::from_raw(ImageTensor::from_raw(shape, data)))
}

/// Independent variable maps per channel, each with its own `(W, O)`.
pub fn generate_noise_map_rgb(shape: Shape, params: &MapGenParams) -> Result<NoiseLevelMap> {
    params.validate()?;
    let mut rng = rng::stream(params.seed, streams::NOISE_MAP);
    let ch = shape.channels;
    let mut data = vec![0.0; shape.len()];
    for c in 0..ch {
        let plane = variable_plane(shape.pixels(), params.mu, &mut rng);
        for (p, v) in plane.into_iter().enumerate() {
            data[p * ch + c] = v;
        }
    }
    Ok(NoiseLevelMap::from_raw(ImageTensor::from_raw(shape, data)))
}

/// `sigma_den` times the per-channel mask preconditioner of a Bayer CFA.
pub fn generate_cfa_noise_map(
    cfa: BayerCfa,
    height: usize,
    width: usize,
    sigma_den: f64,
    cfg: &MaskPrecondConfig,
    k: usize,
) -> Result<NoiseLevelMap> {
    if !(sigma_den >= 0.0 && sigma_den.is_finite()) {
        return Err(Error::param(
            "sigma_den",
            format!("{sigma_den} must be >= 0"),
        ));
    }
    let masks = cfa_masks(cfa, height, width)?;
    let p = mask_preconditioner(&masks, k, cfg)?;
    Ok(NoiseLevelMap::from_raw(p.values().scale(sigma_den)))
}
