//! Distorted Fourier analysis for H = −Δ + V on ℝ³ with radial V, and a
//! quadratic NLS laboratory built on top of it.

pub mod error;
pub mod grids;
pub mod nls;
pub mod pseudoproduct;
pub mod scattering;
pub mod special;
pub mod transform;
pub mod waveop;

pub use error::{Error, Result};
