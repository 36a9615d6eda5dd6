//! Preconditioned plug-and-play ADMM for image restoration.
//!
//! The crate bundles the building blocks (images, degradations, denoisers,
//! preconditioners), the solver loop, and ready-made restoration tasks.

pub mod apps;
pub mod degrade;
pub mod denoise;
mod error;
pub mod filter;
pub mod io;
pub mod metrics;
pub mod precond;
pub mod rng;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ImageTensor, NoiseLevelMap, PixelMask, Shape};
