//! Dense matrix and volume arithmetic, SVDs and proximal primitives.

mod matrix;
mod prox;
mod svd;
mod volume;

pub use matrix::{axpy, dot, norm2, sub, Matrix};
pub use prox::{project_nonneg, project_nonneg_in_place, soft_shrink, soft_shrink_in_place};
pub(crate) use svd::orthonormalize;
pub use svd::{exact_svd, rsvd, SvdFactors, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS, JACOBI_MAX_SWEEPS, JACOBI_TOL};
pub use volume::Volume;

/// `A · x`.
pub fn matvec(a: &Matrix, x: &[f64]) -> crate::Result<Vec<f64>> {
    a.matvec(x)
}
