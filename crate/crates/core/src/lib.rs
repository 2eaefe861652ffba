//! Design, certification and simulation of predictor-observer boundary
//! controllers for 1-D reaction-diffusion equations whose boundary
//! measurement (Dirichlet or Neumann trace) arrives with a delay.
//!
//! The pipeline is:
//!
//! 1. [`spectral`]: Sturm-Liouville eigenpairs of the shifted diffusion
//!    operator and every projection the design consumes.
//! 2. [`synthesis`]: modal split, gain placement, reduced closed-loop
//!    matrices.
//! 3. [`certification`]: Lyapunov solve plus the matrix-inequality
//!    conditions certifying exponential decay; SDPA export.
//! 4. [`controller`]: the observer + Artstein predictor run in time.
//! 5. [`simulation`]: modal and finite-difference plants in closed loop,
//!    norms, decay fits and the Lyapunov functional.
//! 6. [`config`] / [`cli`]: configuration files and the `delay-stab` binary.

pub mod certification;
pub mod cli;
pub mod config;
pub mod controller;
pub mod error;
pub mod expr;
pub mod func;
pub mod numerics;
pub mod sdpa;
pub mod simulation;
pub mod spectral;
pub mod synthesis;

pub use error::{Error, Result};
