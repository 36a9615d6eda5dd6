//! Small spatial filtering helpers shared by the preconditioner, the
//! smoothing denoiser and the demosaicing initializer.

/// Mirror index with reflection about the edge samples (`-1 -> 1`, `n -> n - 2`).
///
/// This reflection keeps the parity of the index, so 2x2 mosaics stay aligned.
#[inline]
pub fn reflect(index: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = index.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Sampled Gaussian truncated at `ceil(3 sigma)` and normalized to unit sum.
/// Returns `[1.0]` for `sigma == 0`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

/// Separable Gaussian blur of one `height x width` plane with mirror borders.
pub fn blur_plane(plane: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; plane.len()];
    for i in 0..height {
        for j in 0..width {
            tmp[i * width + j] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * plane[i * width + reflect(j as isize + t as isize - r, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for i in 0..height {
        for j in 0..width {
            out[i * width + j] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * tmp[reflect(i as isize + t as isize - r, height) * width + j])
                .sum();
        }
    }
    out
}
