//! Dense and banded numerical kernels used by the spectral, certification
//! and simulation stages.

pub mod expint;
pub mod jacobi;
pub mod lyapunov;
pub mod quadrature;
pub mod tridiag;
