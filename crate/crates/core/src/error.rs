//! Error type shared by every stage of the toolkit.
//!
//! Each message starts with the `module::operation` it originates from so
//! that CLI users can tell which stage failed.

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("plant_spectral::{op}: invalid plant: {reason}")]
    InvalidPlant { op: &'static str, reason: String },

    #[error("plant_spectral::solve_eigen: eigenvalues not strictly increasing at mode {mode} ({prev} >= {next}); refine the grid")]
    NonIncreasingSpectrum { mode: usize, prev: f64, next: f64 },

    #[error("{op}: grid mismatch (expected {expected} samples, got {got})")]
    GridMismatch { op: &'static str, expected: usize, got: usize },

    #[error("plant_spectral::boundary_input_coefficients: dual beta formulas disagree at mode {mode} (relative discrepancy {rel:.3e} > {tol:.1e})")]
    DualFormulaMismatch { mode: usize, rel: f64, tol: f64 },

    #[error("{op}: insufficient modes: {reason}")]
    InsufficientModes { op: &'static str, reason: String },

    #[error("synthesis::place_gains: mode {mode} is uncontrollable (beta = {value:.3e})")]
    UncontrollableMode { mode: usize, value: f64 },

    #[error("synthesis::place_gains: mode {mode} is unobservable (trace = {value:.3e})")]
    UnobservableMode { mode: usize, value: f64 },

    #[error("synthesis::{op}: {reason}")]
    PoleSpec { op: &'static str, reason: String },

    #[error("{op}: dimension mismatch: {reason}")]
    DimensionMismatch { op: &'static str, reason: String },

    #[error("{op}: feedback gain K is zero")]
    ZeroGain { op: &'static str },

    #[error("certification::solve_lyapunov: F + delta*I is not Hurwitz (spectral abscissa {abscissa:.6e})")]
    NotHurwitz { abscissa: f64 },

    #[error("certification::solve_lyapunov: Lyapunov equation ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("certification::certify: no certificate found up to N_max = {n_max}")]
    BudgetExceeded { n_max: usize },

    #[error("controller_runtime::{op}: history buffer cannot serve t = {t} (retained [{oldest}, {newest}])")]
    BufferUnderrun {
        op: &'static str,
        t: f64,
        oldest: f64,
        newest: f64,
    },

    #[error("simulation::step_fd: tridiagonal solve failed (zero pivot at row {row})")]
    LinearSolveFailure { row: usize },

    #[error("simulation::run_closed_loop: incompatible initial data: {}", .0.join("; "))]
    IncompatibleInitialData(Vec<String>),

    #[error("simulation::lyapunov_trace: no certificate attached to the run")]
    MissingCertificate,

    #[error("simulation::lyapunov_trace: {0}")]
    MissingModalData(String),

    #[error("simulation::fit_decay_rate: {0}")]
    NonPositiveSamples(String),

    #[error("{op}: unsupported: {reason}")]
    Unsupported { op: &'static str, reason: String },

    #[error("io_cli::parse_config: {0}")]
    Parse(String),

    #[error("io_cli::parse_config: validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("{op}: I/O error on {path}: {source}")]
    Io {
        op: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(op: &'static str, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            op,
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(op: &'static str, reason: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            reason: reason.into(),
        }
    }
}
