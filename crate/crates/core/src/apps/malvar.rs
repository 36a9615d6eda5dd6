//! Gradient-corrected linear demosaicing with the 5x5 Malvar filters.

use crate::degrade::BayerCfa;
use crate::error::{Error, Result};
use crate::filter::reflect;
use crate::tensor::{ImageTensor, Shape};

/// 5x5 taps as `(dy, dx, weight)`, weights in units of 1/8.
type Taps = &'static [(isize, isize, f64)];

const GREEN_AT_RB: Taps = &[
    (0, 0, 4.0),
    (-1, 0, 2.0),
    (1, 0, 2.0),
    (0, -1, 2.0),
    (0, 1, 2.0),
    (-2, 0, -1.0),
    (2, 0, -1.0),
    (0, -2, -1.0),
    (0, 2, -1.0),
];

/// Red or blue at a green pixel whose horizontal neighbours carry the target color.
const ALONG_ROW: Taps = &[
    (0, 0, 5.0),
    (0, -1, 4.0),
    (0, 1, 4.0),
    (0, -2, -1.0),
    (0, 2, -1.0),
    (-1, -1, -1.0),
    (-1, 1, -1.0),
    (1, -1, -1.0),
    (1, 1, -1.0),
    (-2, 0, 0.5),
    (2, 0, 0.5),
];

/// Red or blue at a green pixel whose vertical neighbours carry the target color.
const ALONG_COLUMN: Taps = &[
    (0, 0, 5.0),
    (-1, 0, 4.0),
    (1, 0, 4.0),
    (-2, 0, -1.0),
    (2, 0, -1.0),
    (-1, -1, -1.0),
    (-1, 1, -1.0),
    (1, -1, -1.0),
    (1, 1, -1.0),
    (0, -2, 0.5),
    (0, 2, 0.5),
];

/// Red at blue, or blue at red.
const DIAGONAL: Taps = &[
    (0, 0, 6.0),
    (-1, -1, 2.0),
    (-1, 1, 2.0),
    (1, -1, 2.0),
    (1, 1, 2.0),
    (-2, 0, -1.5),
    (2, 0, -1.5),
    (0, -2, -1.5),
    (0, 2, -1.5),
];

/// Demosaics a CFA observation stored as a 3-channel image (only the channel
/// selected by the CFA is read at each pixel). Borders are mirrored without
/// repeating the edge sample, which keeps the mosaic phase.
pub fn malvar_init(observation: &ImageTensor, cfa: BayerCfa) -> Result<ImageTensor> {
    let s = observation.shape();
    if s.channels != 3 {
        return Err(Error::UnsupportedChannels(s.channels));
    }
    if s.height < 2 || s.width < 2 {
        return Err(Error::param(
            "shape",
            format!("{s} is too small for a Bayer mosaic"),
        ));
    }
    let (h, w) = (s.height, s.width);
    let mosaic: Vec<f64> = (0..h)
        .flat_map(|i| (0..w).map(move |j| (i, j)))
        .map(|(i, j)| observation.get(i, j, cfa.color_at(i, j)))
        .collect();
    let at = |i: isize, j: isize| mosaic[reflect(i, h) * w + reflect(j, w)];

    let mut out = vec![0.0; s.len()];
    for i in 0..h {
        for j in 0..w {
            let own = cfa.color_at(i, j);
            for c in 0..3 {
                let idx = s.index(i, j, c);
                if c == own {
                    out[idx] = mosaic[i * w + j];
                    continue;
                }
                let taps = if c == 1 {
                    GREEN_AT_RB
                } else if own == 1 {
                    if cfa.color_at(i, j ^ 1) == c {
                        ALONG_ROW
                    } else {
                        ALONG_COLUMN
                    }
                } else {
                    DIAGONAL
                };
                let acc: f64 = taps
                    .iter()
                    .map(|&(dy, dx, wt)| wt * at(i as isize + dy, j as isize + dx))
                    .sum();
                out[idx] = acc / 8.0;
            }
        }
    }
    ImageTensor::new(Shape::new(h, w, 3), out)
}
