//! Multiscale spatial phase estimation with the structure multivector.
//!
//! The crate is organized bottom-up:
//!
//! - [`spectral`]: FFTs, frequency grids and transfer functions.
//! - [`clifford`]: the Cl(3) blade table and the `I2` complex plane.
//! - [`monogenic`]: Riesz transform and monogenic features.
//! - [`steerable`]: isotropic tight wavelet frames.
//! - [`smv`]: structure multivector, orientation, angular filters, IAP features.
//! - [`multiscale`]: quality maps and per-pixel scale selection.
//! - [`synthlab`]: synthetic signals with ground truth, SSIM and correlation.
//! - [`demod`]: 2D phase demodulation.
//! - [`register`]: fine-scale registration from phase differences.
//! - [`experiments`]: benchmark harnesses producing CSV tables.
//! - [`io`]: PGM images and raw float32 planes.

pub mod clifford;
pub mod demod;
pub mod error;
pub mod experiments;
pub mod io;
pub mod monogenic;
pub mod multiscale;
pub mod register;
pub mod smv;
pub mod spectral;
pub mod steerable;
pub mod synthlab;
pub mod util;

pub use error::{Error, Result};
pub use spectral::RealImage;
