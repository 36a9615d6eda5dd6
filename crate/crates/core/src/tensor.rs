//! Image-shaped containers shared by every stage of the pipeline.
//!
//! All three containers store their entries row-major and channel-interleaved:
//! the entry for row `i`, column `j`, channel `c` lives at
//! `(i * width + j) * channels + c`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub const fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    pub(crate) fn ensure_same(&self, other: &Shape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: *self,
                actual: *other,
            })
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Dense image of 64-bit intensities.
///
/// Nominal range is `[0, 1]`, or `[0, peak]` inside Poisson pipelines, but the
/// range is not enforced: intermediate solver variables legitimately leave it.
/// Every constructor rejects NaN and infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::param("shape", format!("empty shape {shape}")));
        }
        if data.len() != shape.len() {
            return Err(Error::param(
                "data",
                format!("length {} does not match shape {shape}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        Ok(ImageTensor { shape, data })
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        ImageTensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    /// Builds a tensor from values computed by the crate's own arithmetic.
    ///
    /// Finiteness is checked in debug builds only; the solver re-checks its
    /// iterates once per iteration.
    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        ImageTensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.shape.index(row, col, channel)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Element-wise combination of two same-shaped tensors.
    pub fn zip_map(&self, other: &ImageTensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.shape.ensure_same(&other.shape)?;
        Ok(Self::from_raw(
            self.shape,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Binary indicator of known (sampled) entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    shape: Shape,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn new(shape: Shape, data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::param(
                "mask",
                format!("length {} does not match shape {shape}", data.len()),
            ));
        }
        Ok(PixelMask { shape, data })
    }

    pub fn full(shape: Shape) -> Self {
        PixelMask {
            shape,
            data: vec![true; shape.len()],
        }
    }

    pub fn empty(shape: Shape) -> Self {
        PixelMask {
            shape,
            data: vec![false; shape.len()],
        }
    }

    /// Interprets a real-valued tensor as a mask; every entry must be exactly 0 or 1.
    pub fn from_tensor(t: &ImageTensor) -> Result<Self> {
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                v => Err(Error::param(
                    "mask",
                    format!("entry {i} is {v}, expected 0 or 1"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PixelMask {
            shape: t.shape(),
            data,
        })
    }

    pub fn to_tensor(&self) -> ImageTensor {
        ImageTensor::from_raw(
            self.shape,
            self.data
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> bool {
        self.data[self.shape.index(row, col, channel)]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Extracts one channel as a single-channel mask.
    pub fn channel(&self, channel: usize) -> PixelMask {
        let c = self.shape.channels;
        PixelMask {
            shape: Shape::new(self.shape.height, self.shape.width, 1),
            data: self.data.iter().skip(channel).step_by(c).copied().collect(),
        }
    }

    /// Replicates a single-channel mask across `channels` channels.
    pub fn broadcast(&self, channels: usize) -> Result<PixelMask> {
        if self.shape.channels != 1 {
            return Err(Error::param(
                "mask",
                "only single-channel masks can be broadcast",
            ));
        }
        Ok(PixelMask {
            shape: Shape::new(self.shape.height, self.shape.width, channels),
            data: self
                .data
                .iter()
                .flat_map(|&b| std::iter::repeat_n(b, channels))
                .collect(),
        })
    }
}

/// Per-entry noise standard deviation, the diagonal of the square-root
/// covariance handed to a locally adjustable denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLevelMap(ImageTensor);

impl NoiseLevelMap {
    pub fn new(values: ImageTensor) -> Result<Self> {
        if let Some((index, &value)) = values.data().iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(Error::NegativeEntry {
                what: "noise level map",
                index,
                value,
            });
        }
        Ok(NoiseLevelMap(values))
    }

    pub fn constant(shape: Shape, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::param(
                "sigma",
                format!("{sigma} is not a finite value >= 0"),
            ));
        }
        Ok(NoiseLevelMap(ImageTensor::filled(shape, sigma)))
    }

    pub(crate) fn from_raw(values: ImageTensor) -> Self {
        debug_assert!(values.data().iter().all(|&v| v >= 0.0));
        NoiseLevelMap(values)
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

    pub fn into_inner(self) -> ImageTensor {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.data().iter().all(|&v| v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_bad_lengths() {
        let s = Shape::new(1, 2, 1);
        assert!(ImageTensor::new(s, vec![0.0, f64::NAN]).is_err());
        assert!(ImageTensor::new(s, vec![0.0]).is_err());
        assert!(ImageTensor::new(Shape::new(0, 2, 1), vec![]).is_err());
        assert!(ImageTensor::new(s, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn interleaved_indexing() {
        let s = Shape::new(2, 3, 3);
        let t = ImageTensor::new(s, (0..18).map(f64::from).collect()).unwrap();
        assert_eq!(t.get(1, 2, 1), 16.0);
        assert_eq!(s.index(0, 1, 2), 5);
    }

    #[test]
    fn mask_tensor_round_trip_and_channels() {
        let m = PixelMask::new(Shape::new(1, 2, 1), vec![true, false]).unwrap();
        let m3 = m.broadcast(3).unwrap();
        assert_eq!(m3.count(), 3);
        assert_eq!(m3.channel(2), m);
        assert_eq!(PixelMask::from_tensor(&m3.to_tensor()).unwrap(), m3);
        let bad = ImageTensor::new(Shape::new(1, 1, 1), vec![0.5]).unwrap();
        assert!(PixelMask::from_tensor(&bad).is_err());
    }

    #[test]
    fn noise_map_rejects_negative() {
        let t = ImageTensor::new(Shape::new(1, 2, 1), vec![0.1, -0.1]).unwrap();
        assert!(matches!(
            NoiseLevelMap::new(t),
            Err(Error::NegativeEntry { index: 1, .. })
        ));
    }
}
