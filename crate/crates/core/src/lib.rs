//! Reconstruction toolkit for 3D magnetic particle imaging benchmarks.
//!
//! The crate covers the whole chain from synthetic data to quality scores:
//!
//! - [`simdata`]: phantoms, synthetic system matrices, measurements and the
//!   on-disk dataset container.
//! - [`preprocess`]: frequency selection, whitening and low-rank projection
//!   producing the processed system `A c = y`.
//! - [`solvers`]: regularized Kaczmarz sweeps and AMSGrad-minimized
//!   Tikhonov-type functionals.
//! - [`dip`]: a 3D convolutional autoencoder used as a deep image prior.
//! - [`metrics`]: PSNR, 3D SSIM and their shift-maximized variants.

pub mod container;
pub mod dip;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod preprocess;
pub mod simdata;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::{Matrix, SvdFactors, Volume};
