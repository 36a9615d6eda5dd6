use crate::degrade::make_regular_grid_pattern;
use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, PixelMask};

const A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_kernel(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Weights and (clamped) grid indices for the sample at `pos` on a grid of
/// `n` nodes spaced `factor` apart.
fn taps(pos: usize, factor: usize, n: usize) -> [(usize, f64); 4] {
    let base = pos / factor;
    let frac = (pos % factor) as f64 / factor as f64;
    let mut out = [(0, 0.0); 4];
    for (t, slot) in out.iter_mut().enumerate() {
        let offset = t as isize - 1;
        let idx = (base as isize + offset).clamp(0, n as isize - 1) as usize;
        *slot = (idx, keys_kernel(frac - offset as f64));
    }
    out
}

/// Separable bicubic upsampling of the samples on a regular grid, with
/// edge-clamped borders. Sampled positions are reproduced exactly.
pub fn bicubic_init(b: &ImageTensor, mask: &PixelMask, factor: usize) -> Result<ImageTensor> {
    let s = b.shape();
    s.ensure_same(&mask.shape())?;
    let expected = make_regular_grid_pattern(s.height, s.width, s.channels, factor)?;
    if &expected != mask {
        return Err(Error::param(
            "pattern",
            format!("bicubic initialization needs a regular x{factor} grid"),
        ));
    }
    let (gh, gw) = (s.height.div_ceil(factor), s.width.div_ceil(factor));
    let ch = s.channels;
    let grid = |gi: usize, gj: usize, c: usize| b.get(gi * factor, gj * factor, c);

    // Rows first: interpolate along columns on the sampled rows only.
    let mut rows = vec![0.0; gh * s.width * ch];
    for gi in 0..gh {
        for j in 0..s.width {
            let tj = taps(j, factor, gw);
            for c in 0..ch {
                rows[(gi * s.width + j) * ch + c] =
                    tj.iter().map(|&(g, w)| w * grid(gi, g, c)).sum();
            }
        }
    }
    let mut out = vec![0.0; s.len()];
    for i in 0..s.height {
        let ti = taps(i, factor, gh);
        for j in 0..s.width {
            for c in 0..ch {
                out[s.index(i, j, c)] = ti
                    .iter()
                    .map(|&(g, w)| w * rows[(g * s.width + j) * ch + c])
                    .sum();
            }
        }
    }
    // The kernel is exactly 1 and 0 at integer offsets, but keep the copy
    // explicit so that sampled values survive bit for bit.
    for (i, &known) in mask.data().iter().enumerate() {
        if known {
            out[i] = b.data()[i];
        }
    }
    ImageTensor::new(s, out)
}
