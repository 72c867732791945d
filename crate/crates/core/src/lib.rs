//! Tight framelet systems and fast framelet filter bank transforms on the
//! 2-sphere: quadrature rules, spherical harmonic transforms, band-limited
//! filter banks, multi-level decomposition/reconstruction, and a
//! thresholding denoiser built on top of them.

pub mod error;
pub mod filterbank;
pub mod fmt;
pub mod kernels;
pub mod legendre;
pub mod quadrature;
pub mod sht;
pub mod signals;

pub use error::{Error, Result};
