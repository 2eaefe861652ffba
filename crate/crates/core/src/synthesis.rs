//! Modal split, gain placement and the finite-dimensional closed-loop model
//! `Ẋ = F X + 𝓛 ζ(t-h)` used by certification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::expint::phi1;
use crate::numerics::lyapunov::eigenvalues;
use crate::spectral::{SpectralBasis, SpectralCoefficients, TraceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    DirichletOut,
    NeumannOut,
    /// Input delay `h_i` plus Dirichlet output delay `h_o`.
    JointDelay,
}

impl Variant {
    pub fn trace_kind(self) -> TraceKind {
        match self {
            Variant::NeumannOut => TraceKind::Neumann,
            _ => TraceKind::Dirichlet,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::DirichletOut => "DirichletOut",
            Variant::NeumannOut => "NeumannOut",
            Variant::JointDelay => "JointDelay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParameters {
    pub delta: f64,
    pub n0: usize,
    pub n: usize,
    pub variant: Variant,
    pub h_o: f64,
    pub h_i: f64,
}

impl DesignParameters {
    /// Prediction horizon: `h_o`, or `h_io = h_i + h_o` with an input delay.
    pub fn horizon(&self) -> f64 {
        match self.variant {
            Variant::JointDelay => self.h_i + self.h_o,
            _ => self.h_o,
        }
    }

    pub fn input_delay(&self) -> f64 {
        match self.variant {
            Variant::JointDelay => self.h_i,
            _ => 0.0,
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        DesignParameters { n, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub k: Vec<f64>,
    pub l: Vec<f64>,
}

/// Smallest `N₀ ≥ 1` with `λ_{N₀+1} > q_c + δ`.
pub fn select_n0(lambdas: &[f64], q_c: f64, delta: f64) -> Result<usize> {
    (1..lambdas.len())
        .find(|&n0| lambdas[n0] > q_c + delta)
        .ok_or_else(|| Error::InsufficientModes {
            op: "synthesis::select_n0",
            reason: format!(
                "no computed eigenvalue exceeds q_c + delta = {} (largest is {})",
                q_c + delta,
                lambdas.last().copied().unwrap_or(f64::NAN)
            ),
        })
}

/// Controller poles `-δ-1-j`, observer poles `-δ-2-j`, `j < N₀`.
pub fn default_poles(delta: f64, n0: usize) -> (Vec<f64>, Vec<f64>) {
    let ctrl = (0..n0).map(|j| -delta - 1.0 - j as f64).collect();
    let obs = (0..n0).map(|j| -delta - 2.0 - j as f64).collect();
    (ctrl, obs)
}

fn char_poly_of(a: &DMatrix<f64>, poles: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::identity(n, n);
    for &p in poles {
        m = &m * (a - DMatrix::identity(n, n) * p);
    }
    m
}

fn check_poles(op: &'static str, poles: &[f64], n0: usize, delta: f64) -> Result<()> {
    if poles.len() != n0 {
        return Err(Error::PoleSpec {
            op,
            reason: format!("expected {n0} poles, got {}", poles.len()),
        });
    }
    if let Some(p) = poles.iter().find(|p| !(**p < -delta)) {
        return Err(Error::PoleSpec {
            op,
            reason: format!("pole {p} does not have real part below -delta = {}", -delta),
        });
    }
    Ok(())
}

fn sorted_real_parts(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut ev = eigenvalues(m);
    ev.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    ev
}

fn closed_loops(a0: &[f64], b0: &[f64], c0: &[f64], g: &GainSet) -> (DMatrix<f64>, DMatrix<f64>) {
    let n0 = a0.len();
    let a = DMatrix::from_diagonal(&DVector::from_column_slice(a0));
    let b = DVector::from_column_slice(b0);
    let c = DVector::from_column_slice(c0);
    let k = DVector::from_column_slice(&g.k);
    let l = DVector::from_column_slice(&g.l);
    debug_assert_eq!(n0, g.k.len());
    (&a + &b * k.transpose(), &a - &l * c.transpose())
}

/// Ackermann placement of `eig(A₀+𝔅₀K)` and `eig(A₀-LC₀)`, `A₀` diagonal.
pub fn place_gains(
    a0: &[f64],
    b0: &[f64],
    c0: &[f64],
    ctrl_poles: &[f64],
    obs_poles: &[f64],
    delta: f64,
) -> Result<GainSet> {
    const OP: &str = "synthesis::place_gains";
    let n0 = a0.len();
    if b0.len() != n0 || c0.len() != n0 {
        return Err(Error::dims(OP, format!("A0 has {n0} modes, B0 {} and C0 {}", b0.len(), c0.len())));
    }
    check_poles(OP, ctrl_poles, n0, delta)?;
    check_poles(OP, obs_poles, n0, delta)?;
    let scale_b = b0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if let Some(i) = b0.iter().position(|v| v.abs() <= 1e-10 * scale_b) {
        return Err(Error::UncontrollableMode { mode: i + 1, value: b0[i] });
    }
    let scale_c = c0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if let Some(i) = c0.iter().position(|v| v.abs() <= 1e-10 * scale_c) {
        return Err(Error::UnobservableMode { mode: i + 1, value: c0[i] });
    }

    let a = DMatrix::from_diagonal(&DVector::from_column_slice(a0));
    // controllability / observability matrices of a diagonal pair
    let ctrb = DMatrix::from_fn(n0, n0, |i, j| b0[i] * a0[i].powi(j as i32));
    let obsv = DMatrix::from_fn(n0, n0, |i, j| c0[j] * a0[j].powi(i as i32));
    let mut en = DVector::zeros(n0);
    en[n0 - 1] = 1.0;

    let ctrb_inv = ctrb.try_inverse().ok_or(Error::UncontrollableMode { mode: 0, value: 0.0 })?;
    let k_row = -(en.transpose() * ctrb_inv * char_poly_of(&a, ctrl_poles));
    let obsv_inv = obsv.try_inverse().ok_or(Error::UnobservableMode { mode: 0, value: 0.0 })?;
    let l_col = char_poly_of(&a, obs_poles) * obsv_inv * &en;

    let gains = GainSet {
        k: k_row.iter().copied().collect(),
        l: l_col.iter().copied().collect(),
    };
    let (acl, aobs) = closed_loops(a0, b0, c0, &gains);
    for (m, want) in [(acl, ctrl_poles), (aobs, obs_poles)] {
        let got = sorted_real_parts(&m);
        let mut want = want.to_vec();
        want.sort_by(|a, b| a.total_cmp(b));
        for (g, w) in got.iter().zip(&want) {
            let err = ((g.0 - w).powi(2) + g.1 * g.1).sqrt();
            if err > 1e-8 * w.abs().max(1.0) {
                return Err(Error::PoleSpec {
                    op: OP,
                    reason: format!("placement inaccurate: requested {w}, obtained {}{:+}i", g.0, g.1),
                });
            }
        }
    }
    Ok(gains)
}

/// Checks externally supplied gains: sizes, `K ≠ 0`, and both closed loops
/// Hurwitz below `-δ`.
pub fn validate_gains(a0: &[f64], b0: &[f64], c0: &[f64], gains: &GainSet, delta: f64) -> Result<()> {
    const OP: &str = "synthesis::validate_gains";
    let n0 = a0.len();
    if gains.k.len() != n0 || gains.l.len() != n0 {
        return Err(Error::dims(
            OP,
            format!("N0 = {n0} but K has {} and L has {} entries", gains.k.len(), gains.l.len()),
        ));
    }
    if gains.k.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroGain { op: OP });
    }
    let (acl, aobs) = closed_loops(a0, b0, c0, gains);
    for (what, m) in [("A0 + B0 K", acl), ("A0 - L C0", aobs)] {
        let abscissa = sorted_real_parts(&m).last().map(|e| e.0).unwrap_or(f64::NEG_INFINITY);
        if abscissa >= -delta {
            return Err(Error::PoleSpec {
                op: OP,
                reason: format!("{what} has spectral abscissa {abscissa}, not below -delta = {}", -delta),
            });
        }
    }
    Ok(())
}

/// Blocks of the truncated closed-loop model for one `(N₀, N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedMatrices {
    pub variant: Variant,
    pub n0: usize,
    pub n: usize,
    pub q_c: f64,
    /// `λ₁..λ_N`.
    pub lambda: Vec<f64>,
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    pub b0: Vec<f64>,
    pub b1t: Vec<f64>,
    pub c0: Vec<f64>,
    pub c1t: Vec<f64>,
    pub f: DMatrix<f64>,
    pub lcal: DVector<f64>,
    pub ktilde: DVector<f64>,
    pub e: DVector<f64>,
    pub delay_horizon: f64,
}

impl ReducedMatrices {
    pub fn a0_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.a0))
    }

    /// Scale from `eₙ` to `ẽₙ` (`√λₙ` or `λₙ`).
    pub fn error_scale(&self, lambda: f64) -> f64 {
        match self.variant.trace_kind() {
            TraceKind::Dirichlet => lambda.sqrt(),
            TraceKind::Neumann => lambda,
        }
    }
}

/// Assembles `A₀, A₁, 𝔅₀, 𝔅̃₁, C₀, C̃₁, F, 𝓛, K̃, E`.
pub fn assemble_reduced(
    basis: &SpectralBasis,
    coeffs: &SpectralCoefficients,
    q_c: f64,
    gains: &GainSet,
    params: &DesignParameters,
) -> Result<ReducedMatrices> {
    const OP: &str = "synthesis::assemble_reduced";
    let (n0, n) = (params.n0, params.n);
    if n0 == 0 || n <= n0 {
        return Err(Error::dims(OP, format!("need 1 <= N0 < N, got N0 = {n0}, N = {n}")));
    }
    if n > basis.len() || n > coeffs.beta().len() {
        return Err(Error::dims(OP, format!("N = {n} exceeds the {} computed modes", basis.len())));
    }
    if gains.k.len() != n0 || gains.l.len() != n0 {
        return Err(Error::dims(
            OP,
            format!("gains sized {}/{} for N0 = {n0}", gains.k.len(), gains.l.len()),
        ));
    }
    let kind = params.variant.trace_kind();
    let modes = &basis.modes[..n];
    let lambda: Vec<f64> = modes.iter().map(|m| m.lambda).collect();
    let beta = &coeffs.beta()[..n];
    let mu: Vec<f64> = lambda.iter().map(|l| -l + q_c).collect();
    let a0 = mu[..n0].to_vec();
    let a1 = mu[n0..].to_vec();
    let b0 = beta[..n0].to_vec();
    let b1t: Vec<f64> = (n0..n).map(|i| beta[i] / lambda[i]).collect();
    let c0: Vec<f64> = modes[..n0].iter().map(|m| m.trace(kind)).collect();
    let c1t: Vec<f64> = modes[n0..]
        .iter()
        .map(|m| match kind {
            TraceKind::Dirichlet => m.phi0 / m.lambda.sqrt(),
            TraceKind::Neumann => m.dphi0 / m.lambda,
        })
        .collect();

    let h = params.horizon();
    let eh: Vec<f64> = a0.iter().map(|a| (a * h).exp()).collect();
    let k = &gains.k;
    let l = &gains.l;
    let m1 = n - n0;
    let (r1, r2, r3, r4) = (0, n0, 2 * n0, 2 * n0 + m1);
    let dim = 2 * n;
    let mut f = DMatrix::zeros(dim, dim);
    for i in 0..n0 {
        for j in 0..n0 {
            f[(r1 + i, r1 + j)] = b0[i] * k[j];
            f[(r1 + i, r2 + j)] = eh[i] * l[i] * c0[j];
            f[(r2 + i, r2 + j)] = -l[i] * c0[j];
        }
        f[(r1 + i, r1 + i)] += a0[i];
        f[(r2 + i, r2 + i)] += a0[i];
        for j in 0..m1 {
            f[(r1 + i, r4 + j)] = eh[i] * l[i] * c1t[j];
            f[(r2 + i, r4 + j)] = -l[i] * c1t[j];
        }
    }
    for i in 0..m1 {
        for j in 0..n0 {
            f[(r3 + i, r1 + j)] = b1t[i] * k[j];
        }
        f[(r3 + i, r3 + i)] = a1[i];
        f[(r4 + i, r4 + i)] = a1[i];
    }
    let mut lcal = DVector::zeros(dim);
    let mut ktilde = DVector::zeros(dim);
    for i in 0..n0 {
        lcal[r1 + i] = eh[i] * l[i];
        lcal[r2 + i] = -l[i];
        ktilde[r1 + i] = k[i];
    }
    // E = K [first block row of F, e^{A₀h} L]
    let mut e = DVector::zeros(dim + 1);
    for j in 0..dim {
        e[j] = (0..n0).map(|i| k[i] * f[(r1 + i, j)]).sum();
    }
    e[dim] = (0..n0).map(|i| k[i] * lcal[r1 + i]).sum();

    Ok(ReducedMatrices {
        variant: params.variant,
        n0,
        n,
        q_c,
        lambda,
        a0,
        a1,
        b0,
        b1t,
        c0,
        c1t,
        f,
        lcal,
        ktilde,
        e,
        delay_horizon: h,
    })
}

/// `∫_{-h}^0 e^{-A₀s} 𝔅₀ ds` per diagonal entry.
pub fn artstein_offset(a0: &[f64], b0: &[f64], horizon: f64) -> Vec<f64> {
    a0.iter().zip(b0).map(|(a, b)| b * phi1(*a, horizon)).collect()
}

/// Minimal-norm `Ẑ^{N₀}(0)` with `K e^{A₀h} Ẑ = (1 - K∫e^{-A₀s}𝔅₀ds) u₀`.
pub fn initial_observer_state(u0: f64, k: &[f64], a0: &[f64], b0: &[f64], horizon: f64) -> Result<Vec<f64>> {
    if k.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroGain {
            op: "synthesis::initial_observer_state",
        });
    }
    let g = artstein_offset(a0, b0, horizon);
    let r: Vec<f64> = k.iter().zip(a0).map(|(ki, a)| ki * (a * horizon).exp()).collect();
    let c = (1.0 - k.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()) * u0;
    let rr: f64 = r.iter().map(|v| v * v).sum();
    Ok(r.iter().map(|ri| ri * c / rr).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::CoefFunction;
    use crate::spectral::{PlantArtifacts, PlantSpec, SpectralConfig};
    use std::f64::consts::PI;

    fn reference_artifacts() -> PlantArtifacts {
        let plant = PlantSpec {
            p: CoefFunction::constant(1.0),
            q_tilde: CoefFunction::constant(-5.0),
            theta1: PI / 5.0,
            theta2: 0.0,
        };
        let cfg = SpectralConfig {
            grid_size: 801,
            m_modes: 60,
            ..SpectralConfig::default()
        };
        PlantArtifacts::build(plant, &cfg).unwrap()
    }

    #[test]
    fn select_n0_examples() {
        assert_eq!(select_n0(&[1.0, 5.0, 30.0], 6.0, 0.5).unwrap(), 2);
        assert_eq!(select_n0(&[1.0, 5.0, 30.0], -1.0, 0.5).unwrap(), 1);
        assert!(matches!(select_n0(&[1.0, 2.0], 6.0, 0.5), Err(Error::InsufficientModes { .. })));
        let art = reference_artifacts();
        assert_eq!(select_n0(&art.basis.lambdas(), art.q_c(), 0.5).unwrap(), 1);
    }

    #[test]
    fn scalar_ackermann() {
        let g = place_gains(&[2.0], &[1.0], &[1.0], &[-1.0], &[-1.0], 0.5).unwrap();
        assert!((g.k[0] + 3.0).abs() < 1e-14);
        assert!((g.l[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn ackermann_three_modes() {
        let a0 = [3.0, 1.0, -2.0];
        let b0 = [1.0, -0.5, 2.0];
        let c0 = [0.7, 1.2, -0.3];
        let (ctrl, obs) = default_poles(0.5, 3);
        let g = place_gains(&a0, &b0, &c0, &ctrl, &obs, 0.5).unwrap();
        let (acl, aobs) = closed_loops(&a0, &b0, &c0, &g);
        let mut ev: Vec<f64> = eigenvalues(&acl).iter().map(|e| e.0).collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        assert!((ev[0] + 3.5).abs() < 1e-8 && (ev[2] + 1.5).abs() < 1e-8);
        let mut ev: Vec<f64> = eigenvalues(&aobs).iter().map(|e| e.0).collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        assert!((ev[0] + 4.5).abs() < 1e-8 && (ev[2] + 2.5).abs() < 1e-8);
    }

    #[test]
    fn placement_errors() {
        assert!(matches!(
            place_gains(&[2.0], &[0.0], &[1.0], &[-1.0], &[-1.0], 0.5),
            Err(Error::UncontrollableMode { mode: 1, .. })
        ));
        assert!(matches!(
            place_gains(&[2.0], &[1.0], &[0.0], &[-1.0], &[-1.0], 0.5),
            Err(Error::UnobservableMode { mode: 1, .. })
        ));
        assert!(matches!(
            place_gains(&[2.0], &[1.0], &[1.0], &[-0.2], &[-1.0], 0.5),
            Err(Error::PoleSpec { .. })
        ));
    }

    #[test]
    fn reference_gains_are_admissible() {
        let art = reference_artifacts();
        let a0 = [-art.basis.lambda(1) + art.q_c()];
        let b0 = [art.coeffs.beta()[0]];
        let gains = GainSet {
            k: vec![-1.6037],
            l: vec![4.0832],
        };
        validate_gains(&a0, &b0, &[art.basis.modes[0].phi0], &gains, 0.5).unwrap();
        let gains = GainSet {
            k: vec![-1.6037],
            l: vec![2.9666],
        };
        validate_gains(&a0, &b0, &[art.basis.modes[0].dphi0], &gains, 0.5).unwrap();
        let zero = GainSet { k: vec![0.0], l: vec![1.0] };
        assert!(matches!(
            validate_gains(&a0, &b0, &[1.0], &zero, 0.5),
            Err(Error::ZeroGain { .. })
        ));
    }

    fn reference_reduced(n: usize, variant: Variant, h: f64) -> ReducedMatrices {
        let art = reference_artifacts();
        let params = DesignParameters {
            delta: 0.5,
            n0: 1,
            n,
            variant,
            h_o: h,
            h_i: 0.0,
        };
        let gains = GainSet {
            k: vec![-1.6037],
            l: vec![4.0832],
        };
        assemble_reduced(&art.basis, &art.coeffs, art.q_c(), &gains, &params).unwrap()
    }

    #[test]
    fn f_structure_and_spectrum() {
        let r = reference_reduced(2, Variant::DirichletOut, 2.0);
        assert_eq!(r.f.shape(), (4, 4));
        assert_eq!(r.f[(1, 2)], 0.0);
        assert_eq!(r.f[(3, 0)], 0.0);
        assert_eq!(r.f[(3, 1)], 0.0);
        assert_eq!(r.f[(3, 2)], 0.0);
        assert_eq!(r.f[(3, 3)], r.a1[0]);

        let r = reference_reduced(3, Variant::DirichletOut, 2.0);
        let mut got: Vec<f64> = eigenvalues(&r.f).iter().map(|e| e.0).collect();
        got.sort_by(|a, b| a.total_cmp(b));
        let mut want = vec![
            r.a0[0] + r.b0[0] * -1.6037,
            r.a0[0] - 4.0832 * r.c0[0],
            r.a1[0],
            r.a1[0],
            r.a1[1],
            r.a1[1],
        ];
        want.sort_by(|a, b| a.total_cmp(b));
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-6 * w.abs().max(1.0), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn zero_delay_lcal_and_e_row() {
        let r = reference_reduced(3, Variant::DirichletOut, 0.0);
        assert_eq!(r.lcal[0], 4.0832);
        assert_eq!(r.lcal[1], -4.0832);
        assert!(r.lcal.iter().skip(2).all(|&v| v == 0.0));
        let k = -1.6037;
        assert!((r.e[6] - k * 4.0832).abs() < 1e-14);
        assert!((r.e[0] - k * r.f[(0, 0)]).abs() < 1e-14);
        assert_eq!(r.ktilde[0], k);
    }

    #[test]
    fn neumann_scaling_and_joint_equivalence() {
        let r = reference_reduced(5, Variant::NeumannOut, 2.0);
        let art = reference_artifacts();
        for (j, c) in r.c1t.iter().enumerate() {
            let m = &art.basis.modes[1 + j];
            assert!((c * m.lambda - m.dphi0).abs() <= 4.0 * f64::EPSILON * m.dphi0.abs());
        }
        let d = reference_reduced(4, Variant::DirichletOut, 1.5);
        let j = reference_reduced(4, Variant::JointDelay, 1.5);
        assert_eq!(d.f, j.f);
        assert_eq!(d.e, j.e);
        assert_eq!(reference_reduced(4, Variant::DirichletOut, 1.5), d);
    }

    #[test]
    fn initial_state_examples() {
        let z = initial_observer_state(1.0, &[1.0], &[0.0], &[1.0], 2.0).unwrap();
        assert!((z[0] + 1.0).abs() < 1e-15);
        let z = initial_observer_state(0.0, &[1.0, 2.0], &[0.3, -1.0], &[1.0, 1.0], 2.0).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(matches!(
            initial_observer_state(1.0, &[0.0], &[0.0], &[1.0], 2.0),
            Err(Error::ZeroGain { .. })
        ));
        // round trip through the Artstein transformation
        let (k, a0, b0, h) = ([-1.6, 0.4], [0.38, -20.0], [1.2, -3.0], 2.0);
        let u0 = 1.25;
        let z = initial_observer_state(u0, &k, &a0, &b0, h).unwrap();
        let g = artstein_offset(&a0, &b0, h);
        let za: Vec<f64> = (0..2).map(|i| (a0[i] * h).exp() * z[i] + g[i] * u0).collect();
        let u = k[0] * za[0] + k[1] * za[1];
        assert!((u - u0).abs() < 1e-10);
    }
}
