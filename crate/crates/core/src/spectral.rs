//! Sturm-Liouville spectral data of the shifted operator
//! `𝒜f = -(p f')' + q f` with the Robin conditions
//! `cos θ₁ f(0) - sin θ₁ f'(0) = 0`, `cos θ₂ f(1) + sin θ₂ f'(1) = 0`.
//!
//! Eigenpairs come from a symmetric second-order finite-volume
//! discretization (half cells at Robin ends, eliminated nodes at Dirichlet
//! ends), solved on three nested grids and Romberg-extrapolated.
//! Eigenfunctions are normalized in `L²(0,1)` and signed so that
//! `sin θ₁ φ(0) + cos θ₁ φ'(0) > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::CoefFunction;
use crate::numerics::quadrature::{inner_simpson, left_derivative, right_derivative, simpson};
use crate::numerics::tridiag::SymTridiagonal;

/// Reaction-diffusion plant `z_t = (p z_x)_x - q̃ z` with boundary angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub p: CoefFunction,
    pub q_tilde: CoefFunction,
    pub theta1: f64,
    pub theta2: f64,
}

/// Which boundary trace is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Dirichlet,
    Neumann,
}

impl PlantSpec {
    pub fn c1(&self) -> f64 {
        self.theta1.cos()
    }
    pub fn s1(&self) -> f64 {
        self.theta1.sin()
    }
    pub fn c2(&self) -> f64 {
        self.theta2.cos()
    }
    pub fn s2(&self) -> f64 {
        self.theta2.sin()
    }

    /// `c_{θ₂} + 2 s_{θ₂}`, the denominator of the lifting `x²/(c+2s)`.
    pub fn lift_denominator(&self) -> f64 {
        self.c2() + 2.0 * self.s2()
    }

    /// Range and positivity checks; returns every violation found.
    pub fn violations(&self, grid: &Grid) -> Vec<String> {
        let mut out = Vec::new();
        let half_pi = std::f64::consts::FRAC_PI_2;
        for (name, th) in [("theta1", self.theta1), ("theta2", self.theta2)] {
            if !(0.0..=half_pi + 1e-15).contains(&th) {
                out.push(format!("{name} = {th} outside [0, pi/2]"));
            }
        }
        if let Err(e) = self.p.validate() {
            out.push(format!("p: {e}"));
        }
        if let Err(e) = self.q_tilde.validate() {
            out.push(format!("q_tilde: {e}"));
        }
        if out.is_empty() {
            if let Some(x) = grid.x.iter().find(|&&x| self.p.eval(x) <= 0.0) {
                out.push(format!("p({x}) = {} is not positive", self.p.eval(*x)));
            }
        }
        out
    }

    /// Whether this plant admits a measurement of the given kind
    /// (Dirichlet needs θ₁ ∈ (0, π/2], Neumann needs θ₁ ∈ [0, π/2)).
    pub fn admits(&self, kind: TraceKind) -> std::result::Result<(), String> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        match kind {
            TraceKind::Dirichlet if self.theta1 <= 0.0 => Err(format!(
                "Dirichlet measurement requires theta1 in (0, pi/2], got {}",
                self.theta1
            )),
            TraceKind::Neumann if self.theta1 >= half_pi - 1e-15 => Err(format!(
                "Neumann measurement requires theta1 in [0, pi/2), got {}",
                self.theta1
            )),
            _ => Ok(()),
        }
    }
}

/// Uniform grid on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x: Vec<f64>,
    pub dx: f64,
}

impl Grid {
    pub fn uniform(points: usize) -> Self {
        assert!(points >= 3, "grid needs at least 3 points");
        let dx = 1.0 / (points - 1) as f64;
        let x = (0..points).map(|i| i as f64 * dx).collect();
        Grid { x, dx }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// `q̃ = q - q_c` with `q > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSplit {
    pub q: Vec<f64>,
    pub q_c: f64,
}

/// `q_c = max(0, -min q̃) + margin`, `q = q̃ + q_c`.
pub fn split_reaction(q_tilde: &CoefFunction, grid: &Grid, margin: f64) -> ShiftSplit {
    let samples = q_tilde.sample(&grid.x);
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let q_c = (-min).max(0.0) + margin;
    ShiftSplit {
        q: samples.iter().map(|v| v + q_c).collect(),
        q_c,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenMode {
    pub n: usize,
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub phi0: f64,
    pub dphi0: f64,
    pub phi1: f64,
    pub dphi1: f64,
}

impl EigenMode {
    pub fn trace(&self, kind: TraceKind) -> f64 {
        match kind {
            TraceKind::Dirichlet => self.phi0,
            TraceKind::Neumann => self.dphi0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub grid: Grid,
    pub modes: Vec<EigenMode>,
    /// `min p`, `max p`, `max q` over the grid (eigenvalue bounds).
    pub p_min: f64,
    pub p_max: f64,
    pub q_max: f64,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// λₙ for 1-based `n`.
    pub fn lambda(&self, n: usize) -> f64 {
        self.modes[n - 1].lambda
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    /// Modes violating `π²(n-1)²p_* ≤ λₙ ≤ π²n²p* + q*`.
    pub fn bound_violations(&self) -> Vec<usize> {
        let pi2 = std::f64::consts::PI.powi(2);
        self.modes
            .iter()
            .filter(|m| {
                let n = m.n as f64;
                let lo = pi2 * (n - 1.0).powi(2) * self.p_min;
                let hi = pi2 * n * n * self.p_max + self.q_max;
                m.lambda < lo || m.lambda > hi
            })
            .map(|m| m.n)
            .collect()
    }

    /// Evaluates `Σ cₙ φₙ` on the grid.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (c, m) in coeffs.iter().zip(&self.modes) {
            if *c != 0.0 {
                out.iter_mut().zip(&m.phi).for_each(|(o, p)| *o += c * p);
            }
        }
        out
    }

    /// `<f, φₙ>` for the first `count` modes (Simpson).
    pub fn project(&self, f: &[f64], count: usize) -> Vec<f64> {
        self.modes
            .iter()
            .take(count)
            .map(|m| inner_simpson(f, &m.phi, self.grid.dx))
            .collect()
    }
}

struct GridModes {
    lambda: Vec<f64>,
    phi: Vec<Vec<f64>>,
    traces: Vec<[f64; 4]>,
}

/// Finite-volume eigen solve on `points` nodes; returns the `m` lowest modes
/// with trapezoid-normalized eigenvectors on the full grid.
fn fd_modes(plant: &PlantSpec, q_c: f64, points: usize, m: usize, hints: Option<&[f64]>) -> GridModes {
    let dx = 1.0 / (points - 1) as f64;
    let x = |i: usize| i as f64 * dx;
    let (c1, s1, c2, s2) = (plant.c1(), plant.s1(), plant.c2(), plant.s2());
    let robin0 = s1 > 1e-14;
    let robin1 = s2 > 1e-14;
    let first = if robin0 { 0 } else { 1 };
    let last = if robin1 { points - 1 } else { points - 2 };
    let q = |xv: f64| plant.q_tilde.eval(xv) + q_c;
    let pm = |i: usize| plant.p.eval(x(i) + 0.5 * dx); // p_{i+1/2}
    let h2 = dx * dx;

    let size = last - first + 1;
    let mut diag = vec![0.0; size];
    let mut off = vec![0.0; size - 1];
    let mut mass = vec![1.0f64; size];
    for (k, i) in (first..=last).enumerate() {
        if i == 0 {
            diag[k] = pm(0) / h2 + plant.p.eval(0.0) * c1 / (s1 * dx) + 0.5 * q(0.0);
            mass[k] = 0.5;
        } else if i == points - 1 {
            diag[k] = pm(i - 1) / h2 + plant.p.eval(1.0) * c2 / (s2 * dx) + 0.5 * q(1.0);
            mass[k] = 0.5;
        } else {
            diag[k] = (pm(i - 1) + pm(i)) / h2 + q(x(i));
        }
        if k + 1 < size {
            off[k] = -pm(i) / h2;
        }
    }
    // symmetrize with M^{-1/2} K M^{-1/2}
    let rs: Vec<f64> = mass.iter().map(|v| 1.0 / v.sqrt()).collect();
    for k in 0..size {
        diag[k] *= rs[k] * rs[k];
        if k + 1 < size {
            off[k] *= rs[k] * rs[k + 1];
        }
    }
    let t = SymTridiagonal::new(diag, off);
    let rough = match hints {
        Some(h) => t.eigenvalues_near(h, 1e-9),
        None => t.smallest_eigenvalues(m),
    };
    let edge_p: Vec<f64> = (0..points - 1).map(pm).collect();
    let weight = |i: usize| if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
    let q_nodes: Vec<f64> = (0..points).map(|i| q(x(i))).collect();
    let mut lambda = Vec::with_capacity(m);
    let mut phi = Vec::with_capacity(m);
    let mut traces = Vec::with_capacity(m);
    for &lam in &rough {
        let g = t.eigenvector(lam);
        let mut f = vec![0.0; points];
        for (k, i) in (first..=last).enumerate() {
            f[i] = g[k] * rs[k];
        }
        // Rayleigh quotient in difference form (no cancellation)
        let mut num: f64 = edge_p
            .iter()
            .enumerate()
            .map(|(i, pe)| pe * (f[i + 1] - f[i]).powi(2))
            .sum::<f64>()
            / h2;
        if robin0 {
            num += plant.p.eval(0.0) * c1 / (s1 * dx) * f[0] * f[0];
        }
        if robin1 {
            num += plant.p.eval(1.0) * c2 / (s2 * dx) * f[points - 1] * f[points - 1];
        }
        num += (0..points).map(|i| weight(i) * q_nodes[i] * f[i] * f[i]).sum::<f64>();
        let den: f64 = (0..points).map(|i| weight(i) * f[i] * f[i]).sum();
        lambda.push(num / den);
        // trapezoid norm, consistent with the mass matrix
        let nrm2: f64 = f
            .iter()
            .enumerate()
            .map(|(i, v)| if i == 0 || i == points - 1 { 0.5 * v * v } else { v * v })
            .sum::<f64>()
            * dx;
        let nrm = nrm2.sqrt();
        f.iter_mut().for_each(|v| *v /= nrm);
        let phi0 = f[0];
        let dphi0 = if robin0 { c1 / s1 * f[0] } else { left_derivative(&f, dx) };
        let sign = if s1 * phi0 + c1 * dphi0 < 0.0 { -1.0 } else { 1.0 };
        if sign < 0.0 {
            f.iter_mut().for_each(|v| *v = -*v);
        }
        let phi0 = f[0];
        let dphi0 = if robin0 { c1 / s1 * f[0] } else { left_derivative(&f, dx) };
        let phi1 = f[points - 1];
        let dphi1 = if robin1 { -c2 / s2 * f[points - 1] } else { right_derivative(&f, dx) };
        traces.push([phi0, dphi0, phi1, dphi1]);
        phi.push(f);
    }
    GridModes { lambda, phi, traces }
}

/// First `m_modes` eigenpairs of `𝒜`, refined by Romberg extrapolation over
/// `grid_size`, `2·grid_size - 1` and `4·grid_size - 3` nodes.
pub fn solve_eigen(
    plant: &PlantSpec,
    split: &ShiftSplit,
    m_modes: usize,
    grid_size: usize,
) -> Result<SpectralBasis> {
    let grid = Grid::uniform(grid_size);
    let bad = plant.violations(&grid);
    if !bad.is_empty() {
        return Err(Error::InvalidPlant {
            op: "solve_eigen",
            reason: bad.join("; "),
        });
    }
    if grid_size % 2 == 0 {
        return Err(Error::InvalidPlant {
            op: "solve_eigen",
            reason: format!("grid_size must be odd (Simpson quadrature), got {grid_size}"),
        });
    }
    if m_modes == 0 || 4 * m_modes >= grid_size {
        return Err(Error::InsufficientModes {
            op: "plant_spectral::solve_eigen",
            reason: format!("m_modes = {m_modes} must satisfy 0 < m_modes < grid_size/4 = {}", grid_size / 4),
        });
    }
    // nested grids h, h/2, h/4 and Romberg weights (64, -20, 1)/45
    let mid_size = 2 * grid_size - 1;
    let fine_size = 2 * mid_size - 1;
    let coarse = fd_modes(plant, split.q_c, grid_size, m_modes, None);
    let mid = fd_modes(plant, split.q_c, mid_size, m_modes, Some(&coarse.lambda));
    let fine = fd_modes(plant, split.q_c, fine_size, m_modes, Some(&mid.lambda));
    let romberg = |c: f64, m: f64, f: f64| (64.0 * f - 20.0 * m + c) / 45.0;

    let mut modes = Vec::with_capacity(m_modes);
    for k in 0..m_modes {
        let lambda = romberg(coarse.lambda[k], mid.lambda[k], fine.lambda[k]);
        let mut phi: Vec<f64> = (0..grid_size)
            .map(|i| romberg(coarse.phi[k][i], mid.phi[k][2 * i], fine.phi[k][4 * i]))
            .collect();
        let mut tr = [0.0; 4];
        for j in 0..4 {
            tr[j] = romberg(coarse.traces[k][j], mid.traces[k][j], fine.traces[k][j]);
        }
        let sq: Vec<f64> = phi.iter().map(|v| v * v).collect();
        let nrm = simpson(&sq, grid.dx).sqrt();
        phi.iter_mut().for_each(|v| *v /= nrm);
        tr.iter_mut().for_each(|v| *v /= nrm);
        modes.push(EigenMode {
            n: k + 1,
            lambda,
            phi,
            phi0: tr[0],
            dphi0: tr[1],
            phi1: tr[2],
            dphi1: tr[3],
        });
    }
    for w in modes.windows(2) {
        if !(w[1].lambda > w[0].lambda) {
            return Err(Error::NonIncreasingSpectrum {
                mode: w[1].n,
                prev: w[0].lambda,
                next: w[1].lambda,
            });
        }
    }
    let p_samples = plant.p.sample(&grid.x);
    let p_min = p_samples.iter().copied().fold(f64::INFINITY, f64::min);
    let p_max = p_samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let q_max = split.q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SpectralBasis {
        grid,
        modes,
        p_min,
        p_max,
        q_max,
    })
}

/// Lifting profiles `a(x) = (2p + 2x p' - x² q̃)/(c₂ + 2s₂)` and
/// `b(x) = -x²/(c₂ + 2s₂)` on the grid.
pub fn shape_functions(plant: &PlantSpec, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let den = plant.lift_denominator();
    let a = grid
        .x
        .iter()
        .map(|&x| (2.0 * plant.p.eval(x) + 2.0 * x * plant.p.derivative(x) - x * x * plant.q_tilde.eval(x)) / den)
        .collect();
    let b = grid.x.iter().map(|&x| -x * x / den).collect();
    (a, b)
}

/// `aₙ = <a, φₙ>`, `bₙ = <b, φₙ>` for every mode of the basis.
pub fn project_coefficients(basis: &SpectralBasis, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    for f in [a, b] {
        if f.len() != basis.grid.len() {
            return Err(Error::GridMismatch {
                op: "plant_spectral::project_coefficients",
                expected: basis.grid.len(),
                got: f.len(),
            });
        }
    }
    Ok((basis.project(a, basis.len()), basis.project(b, basis.len())))
}

/// Input coefficients βₙ from both routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputCoefficients {
    /// `p(1){-c₂ φₙ'(1) + s₂ φₙ(1)}` (the value used downstream).
    pub beta: Vec<f64>,
    /// `aₙ + (-λₙ + q_c) bₙ`.
    pub beta_proj: Vec<f64>,
    /// `|β_proj - β_trace| / (1 + |β_trace|)` per mode.
    pub discrepancy: Vec<f64>,
}

/// βₙ by the trace formula and by projection; the first `check_modes`
/// discrepancies must stay below `tol`.
pub fn boundary_input_coefficients(
    basis: &SpectralBasis,
    split: &ShiftSplit,
    a_n: &[f64],
    b_n: &[f64],
    plant: &PlantSpec,
    tol: f64,
    check_modes: usize,
) -> Result<InputCoefficients> {
    let (c2, s2) = (plant.c2(), plant.s2());
    let p1 = plant.p.eval(1.0);
    let mut beta = Vec::with_capacity(basis.len());
    let mut beta_proj = Vec::with_capacity(basis.len());
    let mut discrepancy = Vec::with_capacity(basis.len());
    for (k, m) in basis.modes.iter().enumerate() {
        let trace = p1 * (-c2 * m.dphi1 + s2 * m.phi1);
        let proj = a_n[k] + (-m.lambda + split.q_c) * b_n[k];
        let rel = (proj - trace).abs() / (1.0 + trace.abs());
        if k < check_modes && rel > tol {
            return Err(Error::DualFormulaMismatch { mode: m.n, rel, tol });
        }
        beta.push(trace);
        beta_proj.push(proj);
        discrepancy.push(rel);
    }
    Ok(InputCoefficients {
        beta,
        beta_proj,
        discrepancy,
    })
}

/// Everything downstream stages need from the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub a_norm2: f64,
    pub b_norm2: f64,
    pub a_n: Vec<f64>,
    pub b_n: Vec<f64>,
    pub input: InputCoefficients,
}

impl SpectralCoefficients {
    pub fn beta(&self) -> &[f64] {
        &self.input.beta
    }

    /// `‖𝓡_N a‖²` and `‖𝓡_N b‖²` by the Parseval difference, clamped at 0.
    pub fn tail_norms(&self, n: usize) -> (f64, f64) {
        let head_a: f64 = self.a_n.iter().take(n).map(|v| v * v).sum();
        let head_b: f64 = self.b_n.iter().take(n).map(|v| v * v).sum();
        ((self.a_norm2 - head_a).max(0.0), (self.b_norm2 - head_b).max(0.0))
    }
}

/// Tail sums over the unmodeled modes `n ≥ N+1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSum {
    /// Truncated sum plus the analytic remainder bound.
    pub value: f64,
    pub truncated: f64,
    pub remainder: f64,
}

fn remainder_window(m: usize) -> std::ops::Range<usize> {
    let w = (m / 10).max(10).min(m);
    (m - w)..m
}

/// `Σ_{m ≥ M} m^{-2s}` bounded by `M^{-2s} + M^{1-2s}/(2s-1)`, `s > 1/2`.
fn power_tail(mstart: f64, s: f64) -> f64 {
    mstart.powf(-2.0 * s) + mstart.powf(1.0 - 2.0 * s) / (2.0 * s - 1.0)
}

fn check_remainder(op: &'static str, what: &str, sum: &TailSum) -> Result<()> {
    if sum.remainder > 1e-14 && sum.remainder > 0.1 * sum.truncated {
        return Err(Error::InsufficientModes {
            op,
            reason: format!(
                "{what}: remainder bound {:.3e} exceeds 10% of the truncated sum {:.3e}",
                sum.remainder, sum.truncated
            ),
        });
    }
    Ok(())
}

/// `M_φ = Σ_{n≥N+1} φₙ(0)²/λₙ`.
pub fn m_phi(basis: &SpectralBasis, n: usize) -> Result<TailSum> {
    let m = basis.len();
    if n >= m {
        return Err(Error::InsufficientModes {
            op: "plant_spectral::tail_quantities",
            reason: format!("N = {n} must be below the number of modes {m}"),
        });
    }
    let truncated: f64 = basis.modes[n..].iter().map(|md| md.phi0 * md.phi0 / md.lambda).sum();
    let sup = basis.modes[remainder_window(m)]
        .iter()
        .map(|md| md.phi0 * md.phi0)
        .fold(0.0, f64::max);
    let pi2 = std::f64::consts::PI.powi(2);
    // n > M  =>  λₙ ≥ π²(n-1)² p_*, with n - 1 ≥ M
    let remainder = sup / (pi2 * basis.p_min) * power_tail(m as f64, 1.0);
    let sum = TailSum {
        value: truncated + remainder,
        truncated,
        remainder,
    };
    check_remainder("plant_spectral::tail_quantities", "M_phi", &sum)?;
    Ok(sum)
}

/// `M_φ(ε) = Σ_{n≥N+1} φₙ'(0)²/λₙ^{3/2+ε}`.
pub fn m_phi_eps(basis: &SpectralBasis, n: usize, eps: f64) -> Result<TailSum> {
    let m = basis.len();
    if n >= m {
        return Err(Error::InsufficientModes {
            op: "plant_spectral::tail_quantities",
            reason: format!("N = {n} must be below the number of modes {m}"),
        });
    }
    let expo = 1.5 + eps;
    let truncated: f64 = basis.modes[n..]
        .iter()
        .map(|md| md.dphi0 * md.dphi0 / md.lambda.powf(expo))
        .sum();
    // φₙ'(0)² = O(λₙ): bound the ratio on the last window, then sum λ^{-(1/2+ε)}
    let sup = basis.modes[remainder_window(m)]
        .iter()
        .map(|md| md.dphi0 * md.dphi0 / md.lambda)
        .fold(0.0, f64::max);
    let s = 0.5 + eps;
    let pi2 = std::f64::consts::PI.powi(2);
    let remainder = sup * (pi2 * basis.p_min).powf(-s) * power_tail(m as f64, s);
    let sum = TailSum {
        value: truncated + remainder,
        truncated,
        remainder,
    };
    check_remainder("plant_spectral::tail_quantities", "M_phi(eps)", &sum)?;
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailQuantities {
    pub tail_a: f64,
    pub tail_b: f64,
    pub m_phi: TailSum,
    pub m_phi_eps: TailSum,
    pub eps: f64,
}

pub fn tail_quantities(
    basis: &SpectralBasis,
    coeffs: &SpectralCoefficients,
    n: usize,
    eps: f64,
) -> Result<TailQuantities> {
    let (tail_a, tail_b) = coeffs.tail_norms(n);
    Ok(TailQuantities {
        tail_a,
        tail_b,
        m_phi: m_phi(basis, n)?,
        m_phi_eps: m_phi_eps(basis, n, eps)?,
        eps,
    })
}

/// Spectral discretization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub grid_size: usize,
    pub m_modes: usize,
    pub margin: f64,
    pub beta_tol: f64,
    pub beta_check_modes: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            grid_size: 2001,
            m_modes: 400,
            margin: 1.0,
            beta_tol: 1e-6,
            beta_check_modes: 20,
        }
    }
}

/// Plant plus all derived spectral data, computed once and shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantArtifacts {
    pub plant: PlantSpec,
    pub split: ShiftSplit,
    pub basis: SpectralBasis,
    pub coeffs: SpectralCoefficients,
}

impl PlantArtifacts {
    pub fn build(plant: PlantSpec, cfg: &SpectralConfig) -> Result<Self> {
        let grid = Grid::uniform(cfg.grid_size);
        let split = split_reaction(&plant.q_tilde, &grid, cfg.margin);
        let basis = solve_eigen(&plant, &split, cfg.m_modes, cfg.grid_size)?;
        let (a, b) = shape_functions(&plant, &basis.grid);
        let (a_n, b_n) = project_coefficients(&basis, &a, &b)?;
        let input = boundary_input_coefficients(&basis, &split, &a_n, &b_n, &plant, cfg.beta_tol, cfg.beta_check_modes)?;
        let dx = basis.grid.dx;
        let a_norm2 = inner_simpson(&a, &a, dx);
        let b_norm2 = inner_simpson(&b, &b, dx);
        Ok(PlantArtifacts {
            plant,
            split,
            basis,
            coeffs: SpectralCoefficients {
                a,
                b,
                a_norm2,
                b_norm2,
                a_n,
                b_n,
                input,
            },
        })
    }

    pub fn q_c(&self) -> f64 {
        self.split.q_c
    }
}

/// `<𝒜f, f>` by quadrature: `∫ p f'² + q f²` plus the Robin boundary terms
/// `p(0)(c₁/s₁) f(0)² + p(1)(c₂/s₂) f(1)²`.
pub fn energy_form(plant: &PlantSpec, split: &ShiftSplit, grid: &Grid, f: &[f64]) -> f64 {
    let df = crate::numerics::quadrature::gradient(f, grid.dx);
    let integrand: Vec<f64> = grid
        .x
        .iter()
        .enumerate()
        .map(|(i, &x)| plant.p.eval(x) * df[i] * df[i] + split.q[i] * f[i] * f[i])
        .collect();
    let mut e = simpson(&integrand, grid.dx);
    let n = f.len();
    if plant.s1() > 1e-14 {
        e += plant.p.eval(0.0) * plant.c1() / plant.s1() * f[0] * f[0];
    }
    if plant.s2() > 1e-14 {
        e += plant.p.eval(1.0) * plant.c2() / plant.s2() * f[n - 1] * f[n - 1];
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn constant_plant(theta1: f64, theta2: f64) -> PlantSpec {
        PlantSpec {
            p: CoefFunction::constant(1.0),
            q_tilde: CoefFunction::constant(1.0),
            theta1,
            theta2,
        }
    }

    fn unshifted(grid: &Grid) -> ShiftSplit {
        // q = 1 exactly (q_c = 0) so the closed forms apply
        ShiftSplit {
            q: vec![1.0; grid.len()],
            q_c: 0.0,
        }
    }

    #[test]
    fn split_examples() {
        let g = Grid::uniform(101);
        let s = split_reaction(&CoefFunction::constant(-5.0), &g, 1.0);
        assert_eq!(s.q_c, 6.0);
        assert!(s.q.iter().all(|&v| v == 1.0));
        let s = split_reaction(&CoefFunction::constant(3.0), &g, 1.0);
        assert_eq!(s.q_c, 1.0);
        assert!(s.q.iter().all(|&v| v == 4.0));
        let s = split_reaction(&CoefFunction::Poly(vec![0.0, -1.0]), &g, 0.5);
        assert!((s.q_c - 1.5).abs() < 1e-15);
        assert!(s.q.iter().all(|&v| v > 0.0));
        assert!((s.q[100] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn neumann_dirichlet_closed_form() {
        let plant = constant_plant(FRAC_PI_2, 0.0);
        let g = Grid::uniform(801);
        let basis = solve_eigen(&plant, &unshifted(&g), 5, 801).unwrap();
        for m in &basis.modes {
            let k = (m.n as f64 - 0.5) * PI;
            assert!((m.lambda - (1.0 + k * k)).abs() < 1e-6 * (1.0 + k * k), "n={} {}", m.n, m.lambda);
            assert!((m.phi0 - 2f64.sqrt()).abs() < 1e-6);
            assert!(m.dphi0.abs() < 1e-12);
        }
        assert!((basis.modes[0].lambda - 3.4674).abs() < 1e-4);
    }

    #[test]
    fn dirichlet_dirichlet_closed_form() {
        let plant = constant_plant(0.0, 0.0);
        let g = Grid::uniform(801);
        let basis = solve_eigen(&plant, &unshifted(&g), 5, 801).unwrap();
        for m in &basis.modes {
            let k = m.n as f64 * PI;
            assert!((m.lambda - (1.0 + k * k)).abs() < 1e-6 * (1.0 + k * k));
            assert!(m.phi0.abs() < 1e-12);
            assert!((m.dphi0 - 2f64.sqrt() * k).abs() < 1e-5 * k, "n={} {}", m.n, m.dphi0);
        }
    }

    #[test]
    fn neumann_neumann_constant_mode() {
        let plant = constant_plant(FRAC_PI_2, FRAC_PI_2);
        let g = Grid::uniform(401);
        let basis = solve_eigen(&plant, &unshifted(&g), 3, 401).unwrap();
        let m = &basis.modes[0];
        assert!((m.lambda - 1.0).abs() < 1e-8, "{}", m.lambda);
        assert!(m.phi.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut plant = constant_plant(0.3, 0.0);
        plant.p = CoefFunction::Poly(vec![1.0, -2.0]);
        let g = Grid::uniform(101);
        assert!(matches!(solve_eigen(&plant, &unshifted(&g), 5, 101), Err(Error::InvalidPlant { .. })));
        let plant = constant_plant(0.3, 0.0);
        assert!(matches!(solve_eigen(&plant, &unshifted(&g), 30, 101), Err(Error::InsufficientModes { .. })));
    }

    #[test]
    fn shape_function_examples() {
        let plant = PlantSpec {
            p: CoefFunction::constant(1.0),
            q_tilde: CoefFunction::constant(-5.0),
            theta1: PI / 5.0,
            theta2: 0.0,
        };
        let g = Grid::uniform(11);
        let (a, b) = shape_functions(&plant, &g);
        for (i, &x) in g.x.iter().enumerate() {
            assert!((a[i] - (2.0 + 5.0 * x * x)).abs() < 1e-14);
            assert!((b[i] + x * x).abs() < 1e-14);
        }
        let plant = PlantSpec {
            q_tilde: CoefFunction::constant(0.0),
            theta2: FRAC_PI_2,
            ..plant
        };
        let (a, b) = shape_functions(&plant, &g);
        for (i, &x) in g.x.iter().enumerate() {
            assert!((a[i] - 1.0).abs() < 1e-14);
            assert!((b[i] + x * x / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_examples() {
        let plant = constant_plant(0.0, 0.0);
        let g = Grid::uniform(801);
        let basis = solve_eigen(&plant, &unshifted(&g), 4, 801).unwrap();
        let b: Vec<f64> = g.x.iter().map(|x| -x * x).collect();
        let zero = vec![0.0; g.len()];
        let (b_n, z_n) = project_coefficients(&basis, &b, &zero).unwrap();
        let exact = -(2f64.sqrt()) * (1.0 / PI - 4.0 / PI.powi(3));
        assert!((b_n[0] - exact).abs() < 1e-8, "{} vs {exact}", b_n[0]);
        assert!((b_n[0] + 0.26771).abs() < 1e-5);
        assert!(z_n.iter().all(|&v| v == 0.0));
        let phi1 = basis.modes[0].phi.clone();
        let (a_n, _) = project_coefficients(&basis, &phi1, &zero).unwrap();
        assert!((a_n[0] - 1.0).abs() < 1e-10);
        assert!(a_n[1..].iter().all(|v| v.abs() < 1e-8));
        assert!(matches!(
            project_coefficients(&basis, &b[..10], &zero),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn trace_beta_dirichlet_dirichlet() {
        let plant = constant_plant(0.0, 0.0);
        let g = Grid::uniform(801);
        let split = unshifted(&g);
        let basis = solve_eigen(&plant, &split, 4, 801).unwrap();
        let (a, b) = shape_functions(&plant, &g);
        let (a_n, b_n) = project_coefficients(&basis, &a, &b).unwrap();
        let inp = boundary_input_coefficients(&basis, &split, &a_n, &b_n, &plant, 1e-5, 4).unwrap();
        for (k, beta) in inp.beta.iter().enumerate() {
            let n = (k + 1) as f64;
            let exact = 2f64.sqrt() * n * PI * if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((beta - exact).abs() < 1e-5 * exact.abs(), "n={n}: {beta} vs {exact}");
        }
        assert!((inp.beta[0] - 4.4429).abs() < 1e-4);
    }

    #[test]
    fn trace_beta_neumann_neumann() {
        let plant = constant_plant(FRAC_PI_2, FRAC_PI_2);
        let g = Grid::uniform(401);
        let split = unshifted(&g);
        let basis = solve_eigen(&plant, &split, 3, 401).unwrap();
        let (a, b) = shape_functions(&plant, &g);
        let (a_n, b_n) = project_coefficients(&basis, &a, &b).unwrap();
        let inp = boundary_input_coefficients(&basis, &split, &a_n, &b_n, &plant, 1e-5, 3).unwrap();
        assert!((inp.beta[0] - 1.0).abs() < 1e-10);
        for (k, m) in basis.modes.iter().enumerate() {
            assert!((inp.beta[k] - m.phi1).abs() < 1e-14);
        }
    }

    #[test]
    fn tails() {
        let plant = constant_plant(0.0, 0.0);
        let g = Grid::uniform(401);
        let basis = solve_eigen(&plant, &unshifted(&g), 40, 401).unwrap();
        let s = m_phi(&basis, 3).unwrap();
        assert!(s.value.abs() < 1e-20);

        let plant = constant_plant(FRAC_PI_2, 0.0);
        let g = Grid::uniform(2001);
        let basis = solve_eigen(&plant, &unshifted(&g), 400, 2001).unwrap();
        let s = m_phi(&basis, 3).unwrap();
        let exact: f64 = (4..200_000)
            .map(|n| 2.0 / (1.0 + PI * PI * (n as f64 - 0.5).powi(2)))
            .sum();
        assert!((s.truncated - exact).abs() <= s.remainder + 1e-6, "{} vs {exact}", s.truncated);
        assert!(s.value >= exact - 1e-6);
        assert!(s.remainder < 0.1 * s.truncated);
    }
}
