#![allow(dead_code)]

use pnp_core::{ImageTensor, Shape};

/// Synthetic test card: smooth shading, a bright disc with a sharp edge and
/// a vertical bar, with per-channel phase shifts. Values stay inside [0.05, 0.95].
pub fn test_card(height: usize, width: usize, channels: usize) -> ImageTensor {
    let s = Shape::new(height, width, channels);
    let mut data = Vec::with_capacity(s.len());
    for i in 0..height {
        for j in 0..width {
            let y = i as f64 / height as f64;
            let x = j as f64 / width as f64;
            for c in 0..channels {
                let phase = c as f64 * 0.7;
                let mut v = 0.45
                    + 0.2
                        * (2.0 * std::f64::consts::PI * (1.5 * x + phase)).sin()
                        * (2.0 * std::f64::consts::PI * y).cos();
                let (dy, dx) = (y - 0.55, x - 0.4);
                if dy * dy + dx * dx < 0.06 {
                    v += 0.25;
                }
                if (0.75..0.82).contains(&x) {
                    v -= 0.2;
                }
                data.push(v.clamp(0.05, 0.95));
            }
        }
    }
    ImageTensor::new(s, data).unwrap()
}

pub fn random_image(shape: Shape, seed: u64) -> ImageTensor {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    ImageTensor::new(shape, (0..shape.len()).map(|_| rng.random()).collect()).unwrap()
}
