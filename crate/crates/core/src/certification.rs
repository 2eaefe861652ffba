//! Feasibility certificates for the closed-loop matrix inequalities.
//!
//! For each observer order `N` the Lyapunov solution `P` of
//! `FᵀP + PF + 2δP = -I` is fixed (up to a positive scale) and the remaining
//! scalars `(α, β, γ[, ε])` are searched on a log grid. The conditions are
//! homogeneous in `(P, β, γ)` and `Θ₁` is monotone in `γ`, which the search
//! uses to evaluate a single `γ` per `(α, ε, scale, β)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::jacobi;
use crate::numerics::lyapunov::{solve_continuous_lyapunov, spectral_abscissa, LyapunovFailure};
use crate::spectral::{m_phi, m_phi_eps, PlantArtifacts};
use crate::synthesis::{assemble_reduced, DesignParameters, GainSet, ReducedMatrices, Variant};

/// Residue bound entering `Θ₂` (and `Θ₃` for the Neumann trace).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidueBound {
    Dirichlet { m_phi: f64 },
    Neumann { eps: f64, m_phi_eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateProblem {
    pub reduced: ReducedMatrices,
    pub delta: f64,
    pub tail_a: f64,
    pub tail_b: f64,
    pub residue: ResidueBound,
    pub lambda_next: f64,
    pub q_c: f64,
    pub h_o: f64,
    pub h_i: f64,
}

impl CertificateProblem {
    pub fn variant(&self) -> Variant {
        self.reduced.variant
    }

    pub fn eps(&self) -> Option<f64> {
        match self.residue {
            ResidueBound::Neumann { eps, .. } => Some(eps),
            ResidueBound::Dirichlet { .. } => None,
        }
    }

    /// `K̃ᵀK̃` padded to `(2N+1)²`, `EᵀE`.
    fn rank_one_terms(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.reduced.f.nrows();
        let mut kk = DMatrix::zeros(d + 1, d + 1);
        let kt = &self.reduced.ktilde;
        for i in 0..d {
            for j in 0..d {
                kk[(i, j)] = kt[i] * kt[j];
            }
        }
        let e = &self.reduced.e;
        (kk, e * e.transpose())
    }

    /// Default joint-delay multipliers `Q₁ = e^{2δhᵢ}αγ‖𝓡a‖² KᵀK`,
    /// `q₂ = e^{2δhᵢ}αγ‖𝓡b‖²` (so `Q₂ = q₂ KᵀK`).
    pub fn default_q(&self, alpha: f64, gamma: f64) -> (DMatrix<f64>, f64) {
        let w = (2.0 * self.delta * self.h_i).exp() * alpha * gamma;
        let k = &self.reduced.ktilde.rows(0, self.reduced.n0).into_owned();
        (k * k.transpose() * (w * self.tail_a), w * self.tail_b)
    }
}

/// Lyapunov solution with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    pub p: DMatrix<f64>,
    pub residual: f64,
    pub condition: f64,
}

/// `P ≻ 0` with `FᵀP + PF + 2δP = -I`.
pub fn solve_lyapunov(f: &DMatrix<f64>, delta: f64) -> Result<LyapunovResult> {
    let n = f.nrows();
    let a = f + DMatrix::identity(n, n) * delta;
    let c = DMatrix::identity(n, n);
    let sol = solve_continuous_lyapunov(&a, &c).map_err(|e| match e {
        LyapunovFailure::NotHurwitz(abscissa) => Error::NotHurwitz { abscissa },
        LyapunovFailure::SingularBlock => Error::NotHurwitz {
            abscissa: spectral_abscissa(&a),
        },
    })?;
    if sol.condition > 1e12 {
        return Err(Error::IllConditioned { cond: sol.condition });
    }
    let residual = lyapunov_residual(f, &sol.x, delta);
    Ok(LyapunovResult {
        p: sol.x,
        residual,
        condition: sol.condition,
    })
}

/// `‖FᵀP + PF + 2δP + I‖_F`.
pub fn lyapunov_residual(f: &DMatrix<f64>, p: &DMatrix<f64>, delta: f64) -> f64 {
    let n = f.nrows();
    (f.transpose() * p + p * f + p * (2.0 * delta) + DMatrix::identity(n, n)).norm()
}

/// Multipliers of `Θ₁`: single-delay variants use `αγ` times the tails,
/// the joint variant uses `Q₁` and `q₂`.
#[derive(Debug, Clone, PartialEq)]
pub enum Multipliers {
    Single { alpha: f64, gamma: f64 },
    Joint { q1: DMatrix<f64>, q2: f64 },
}

/// `Θ₁` for given `P`, `β` and multipliers.
pub fn theta1_matrix(problem: &CertificateProblem, p: &DMatrix<f64>, beta: f64, mult: &Multipliers) -> Result<DMatrix<f64>> {
    let r = &problem.reduced;
    let d = r.f.nrows();
    if p.shape() != (d, d) {
        return Err(Error::dims(
            "certification::evaluate_theta1",
            format!("P is {:?}, F is {d}x{d}", p.shape()),
        ));
    }
    let mut th = DMatrix::zeros(d + 1, d + 1);
    let top = r.f.transpose() * p + p * &r.f + p * (2.0 * problem.delta);
    th.view_mut((0, 0), (d, d)).copy_from(&top);
    let pl = p * &r.lcal;
    for i in 0..d {
        th[(i, d)] = pl[i];
        th[(d, i)] = pl[i];
    }
    th[(d, d)] = -beta * (-2.0 * problem.delta * problem.h_o).exp();
    let (kk, ee) = problem.rank_one_terms();
    match mult {
        Multipliers::Single { alpha, gamma } => {
            th += kk * (alpha * gamma * problem.tail_a);
            th += ee * (alpha * gamma * problem.tail_b);
        }
        Multipliers::Joint { q1, q2 } => {
            let n0 = r.n0;
            if q1.shape() != (n0, n0) {
                return Err(Error::dims("certification::evaluate_theta1", "Q1 must be N0 x N0"));
            }
            let mut v = th.view_mut((0, 0), (n0, n0));
            v += q1;
            th += ee * *q2;
        }
    }
    Ok(th)
}

fn psd_tol(m: &DMatrix<f64>, tol: f64) -> f64 {
    tol * (1.0 + m.norm())
}

/// `(Θ₁, λ_max(Θ₁))` with the eigenvalue from cyclic Jacobi.
pub fn evaluate_theta1(
    problem: &CertificateProblem,
    p: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let mult = match problem.variant() {
        Variant::JointDelay => {
            let (q1, q2) = problem.default_q(alpha, gamma);
            Multipliers::Joint { q1, q2 }
        }
        _ => Multipliers::Single { alpha, gamma },
    };
    let th = theta1_matrix(problem, p, beta, &mult)?;
    let max = jacobi::max_eigenvalue(&th);
    Ok((th, max))
}

/// `(Θ₂, Θ₃)`; `Θ₃` only for the Neumann residue bound.
pub fn evaluate_theta2_theta3(problem: &CertificateProblem, alpha: f64, beta: f64, gamma: f64) -> (f64, Option<f64>) {
    let lam = problem.lambda_next;
    let bracket = -(1.0 - 1.0 / alpha) * lam + problem.q_c + problem.delta;
    match problem.residue {
        ResidueBound::Dirichlet { m_phi } => (2.0 * gamma * bracket + beta * m_phi, None),
        ResidueBound::Neumann { eps, m_phi_eps } => (
            2.0 * gamma * bracket + beta * m_phi_eps * lam.powf(0.5 + eps),
            Some(2.0 * gamma * (1.0 - 1.0 / alpha) - beta * m_phi_eps / lam.powf(0.5 - eps)),
        ),
    }
}

/// Largest eigenvalues of `R₁ = -e^{-2δhᵢ}Q₁ + αγ‖𝓡a‖²KᵀK` and
/// `R₂ = -e^{-2δhᵢ}q₂KᵀK + αγ‖𝓡b‖²KᵀK`.
pub fn evaluate_r(problem: &CertificateProblem, alpha: f64, gamma: f64, q1: &DMatrix<f64>, q2: f64) -> (f64, f64) {
    let n0 = problem.reduced.n0;
    let k = problem.reduced.ktilde.rows(0, n0).into_owned();
    let kk = &k * k.transpose();
    let w = (-2.0 * problem.delta * problem.h_i).exp();
    let r1 = q1 * (-w) + &kk * (alpha * gamma * problem.tail_a);
    let r2 = &kk * (-w * q2 + alpha * gamma * problem.tail_b);
    (jacobi::max_eigenvalue(&r1), jacobi::max_eigenvalue(&r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Certified,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub status: Status,
    pub variant: Variant,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eps: Option<f64>,
    /// Positive multiplier applied to the Lyapunov solution.
    pub p_scale: f64,
    pub p_matrix: DMatrix<f64>,
    pub q1: Option<DMatrix<f64>>,
    pub q2: Option<f64>,
    pub theta1_max_eig: f64,
    pub theta1_tol: f64,
    pub theta2: f64,
    pub theta3: Option<f64>,
    pub r1_max_eig: Option<f64>,
    pub r2: Option<f64>,
    /// `‖FᵀP + PF + 2δP + I‖_F` for the unscaled Lyapunov solution.
    pub lyap_residual: f64,
    pub lyap_condition: f64,
    pub problem: CertificateProblem,
    pub attempts: Vec<OrderAttempt>,
    pub notes: Vec<String>,
}

/// Best point found at one observer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderAttempt {
    pub n: usize,
    pub certified: bool,
    pub violation: f64,
    pub note: Option<String>,
}

impl CertificateReport {
    pub fn is_certified(&self) -> bool {
        self.status == Status::Certified
    }

    /// `Err(BudgetExceeded)` unless certified.
    pub fn into_result(self, n_max: usize) -> Result<Self> {
        match self.status {
            Status::Certified => Ok(self),
            Status::Infeasible => Err(Error::BudgetExceeded { n_max }),
        }
    }

    /// Recomputes every condition from the stored problem, `P` and scalars.
    pub fn revalidate(&self) -> Result<CertificateReport> {
        let pb = &self.problem;
        let p = &self.p_matrix;
        let mult = match (&self.q1, self.q2) {
            (Some(q1), Some(q2)) => Multipliers::Joint { q1: q1.clone(), q2 },
            _ => Multipliers::Single {
                alpha: self.alpha,
                gamma: self.gamma,
            },
        };
        let th = theta1_matrix(pb, p, self.beta, &mult)?;
        let max = jacobi::max_eigenvalue(&th);
        let tol = psd_tol(&th, 1e-9);
        let (t2, t3) = evaluate_theta2_theta3(pb, self.alpha, self.beta, self.gamma);
        let (r1, r2) = match (&self.q1, self.q2) {
            (Some(q1), Some(q2)) => {
                let (a, b) = evaluate_r(pb, self.alpha, self.gamma, q1, q2);
                (Some(a), Some(b))
            }
            _ => (None, None),
        };
        let p_min = jacobi::min_eigenvalue(p);
        let ok = max <= tol
            && t2 <= 0.0
            && t3.is_none_or(|v| v >= 0.0)
            && r1.is_none_or(|v| v <= tol)
            && r2.is_none_or(|v| v <= tol)
            && p_min > 0.0
            && self.alpha > 1.0
            && self.beta > 0.0
            && self.gamma > 0.0
            && self.eps.is_none_or(|e| e > 0.0 && e <= 0.5);
        Ok(CertificateReport {
            status: if ok { Status::Certified } else { Status::Infeasible },
            theta1_max_eig: max,
            theta1_tol: tol,
            theta2: t2,
            theta3: t3,
            r1_max_eig: r1,
            r2,
            ..self.clone()
        })
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "status          {:?}", self.status);
        let _ = writeln!(s, "variant         {}", self.variant.name());
        let _ = writeln!(s, "N               {}", self.n);
        let _ = writeln!(s, "alpha           {}", self.alpha);
        let _ = writeln!(s, "beta            {:e}", self.beta);
        let _ = writeln!(s, "gamma           {:e}", self.gamma);
        if let Some(e) = self.eps {
            let _ = writeln!(s, "eps             {e}");
        }
        let _ = writeln!(s, "P scale         {:e}", self.p_scale);
        let _ = writeln!(s, "||P||           {:e}", jacobi::spectral_norm_sym(&self.p_matrix));
        if let Some(q2) = self.q2 {
            let _ = writeln!(s, "q2              {q2:e}");
        }
        let _ = writeln!(s, "max eig Theta1  {:e} (tolerance {:e})", self.theta1_max_eig, self.theta1_tol);
        let _ = writeln!(s, "Theta2          {:e}", self.theta2);
        if let Some(t3) = self.theta3 {
            let _ = writeln!(s, "Theta3          {t3:e}");
        }
        if let (Some(r1), Some(r2)) = (self.r1_max_eig, self.r2) {
            let _ = writeln!(s, "max eig R1      {r1:e}");
            let _ = writeln!(s, "max eig R2      {r2:e}");
        }
        let _ = writeln!(s, "Lyapunov resid  {:e}", self.lyap_residual);
        let _ = writeln!(s, "orders tried:");
        for a in &self.attempts {
            let _ = writeln!(
                s,
                "  N = {:>3}  {}  violation {:.3e}{}",
                a.n,
                if a.certified { "certified " } else { "infeasible" },
                a.violation,
                a.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default()
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SeedGrid {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_max: usize,
    pub alphas: Vec<f64>,
    pub eps_values: Vec<f64>,
    pub p_scales: Vec<f64>,
    pub points_per_decade: usize,
    /// Half-width of the `β`, `γ` grids in decades around the recipe values.
    pub decades: usize,
    pub psd_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_max: 40,
            alphas: vec![1.5, 2.0, 4.0, 8.0],
            eps_values: vec![0.125, 0.25, 0.5],
            p_scales: (-3..=3).map(|k| 10f64.powi(k)).collect(),
            points_per_decade: 13,
            decades: 4,
            psd_tol: 1e-9,
        }
    }
}

impl SearchConfig {
    pub fn with_seed_grid(mut self, grid: SeedGrid) -> Self {
        self.points_per_decade = match grid {
            SeedGrid::Coarse => 4,
            SeedGrid::Fine => 13,
        };
        self
    }

    fn log_grid(&self, center: f64) -> Vec<f64> {
        let ppd = self.points_per_decade as i64;
        let half = ppd * self.decades as i64;
        (-half..=half)
            .map(|k| center * 10f64.powf(k as f64 / ppd as f64))
            .collect()
    }
}

/// Recipe values of `(β, γ)` at order `N`.
pub fn recipe(variant: Variant, n: usize) -> (f64, f64) {
    let nf = n as f64;
    match variant {
        Variant::NeumannOut => (nf.powf(0.125), nf.powf(-0.1875)),
        _ => (nf.sqrt(), 1.0 / nf),
    }
}

/// Builds the problem data at order `N` (without `P`).
pub fn build_problem(art: &PlantArtifacts, gains: &GainSet, params: &DesignParameters, eps: Option<f64>) -> Result<CertificateProblem> {
    let n = params.n;
    let reduced = assemble_reduced(&art.basis, &art.coeffs, art.q_c(), gains, params)?;
    let (tail_a, tail_b) = art.coeffs.tail_norms(n);
    let residue = match (params.variant, eps) {
        (Variant::NeumannOut, Some(eps)) => ResidueBound::Neumann {
            eps,
            m_phi_eps: m_phi_eps(&art.basis, n, eps)?.value,
        },
        (Variant::NeumannOut, None) => {
            return Err(Error::dims("certification::build_problem", "Neumann problems need eps"));
        }
        _ => ResidueBound::Dirichlet {
            m_phi: m_phi(&art.basis, n)?.value,
        },
    };
    if n >= art.basis.len() {
        return Err(Error::InsufficientModes {
            op: "certification::build_problem",
            reason: format!("N = {n} needs lambda_(N+1) but only {} modes exist", art.basis.len()),
        });
    }
    Ok(CertificateProblem {
        reduced,
        delta: params.delta,
        tail_a,
        tail_b,
        residue,
        lambda_next: art.basis.lambda(n + 1),
        q_c: art.q_c(),
        h_o: params.h_o,
        h_i: params.input_delay(),
    })
}

#[derive(Debug, Clone)]
struct Candidate {
    alpha: f64,
    beta: f64,
    gamma: f64,
    scale: f64,
    max_eig: f64,
    tol: f64,
    theta2: f64,
    theta3: Option<f64>,
    certified: bool,
    violation: f64,
}

/// Per-order search state shared by all grid points.
struct OrderSearch<'a> {
    problem: &'a CertificateProblem,
    base: DMatrix<f64>,
    kk: DMatrix<f64>,
    ee: DMatrix<f64>,
    joint_weight: f64,
    tol: f64,
}

impl OrderSearch<'_> {
    fn evaluate(&self, alpha: f64, scale: f64, beta: f64, gammas: &[f64]) -> Candidate {
        let pb = self.problem;
        let (t2_unit, _) = evaluate_theta2_theta3(pb, alpha, 0.0, 1.0);
        let (t2_beta, t3_beta) = evaluate_theta2_theta3(pb, alpha, beta, 0.0);
        // Θ₂ = γ·t2_unit + t2_beta ≤ 0 and Θ₃ ≥ 0 are lower bounds on γ
        let mut gmin = if t2_unit < 0.0 { -t2_beta / t2_unit } else { f64::INFINITY };
        if let Some(t3b) = t3_beta {
            let (_, t3_unit) = evaluate_theta2_theta3(pb, alpha, 0.0, 1.0);
            let slope = t3_unit.unwrap_or(0.0);
            gmin = gmin.max(if slope > 0.0 { -t3b / slope } else { f64::INFINITY });
        }
        let idx = gammas.iter().position(|&g| g >= gmin);
        let gamma = idx.map(|i| gammas[i]).unwrap_or(gammas[gammas.len() - 1]);
        let (theta2, theta3) = evaluate_theta2_theta3(pb, alpha, beta, gamma);
        let d = self.base.nrows() - 1;
        let mut th = &self.base * scale;
        th[(d, d)] = -beta * (-2.0 * pb.delta * pb.h_o).exp();
        let w = alpha * gamma * self.joint_weight;
        th += &self.kk * (w * pb.tail_a);
        th += &self.ee * (w * pb.tail_b);
        let max_eig = th.clone().symmetric_eigenvalues().max();
        let tol = psd_tol(&th, self.tol);
        let certified = max_eig <= tol && theta2 <= 0.0 && theta3.is_none_or(|v| v >= 0.0);
        let norm = 1.0 + th.norm();
        let violation = (max_eig / norm).max(0.0)
            + (theta2 / (1.0 + theta2.abs())).max(0.0)
            + theta3.map(|v| (-v / (1.0 + v.abs())).max(0.0)).unwrap_or(0.0);
        Candidate {
            alpha,
            beta,
            gamma,
            scale,
            max_eig,
            tol,
            theta2,
            theta3,
            certified,
            violation,
        }
    }
}

/// Base of `Θ₁` for unit `P` scale with the corner zeroed.
fn theta1_base(problem: &CertificateProblem, p: &DMatrix<f64>) -> DMatrix<f64> {
    let r = &problem.reduced;
    let d = r.f.nrows();
    let mut th = DMatrix::zeros(d + 1, d + 1);
    let top = r.f.transpose() * p + p * &r.f + p * (2.0 * problem.delta);
    th.view_mut((0, 0), (d, d)).copy_from(&top);
    let pl = p * &r.lcal;
    for i in 0..d {
        th[(i, d)] = pl[i];
        th[(d, i)] = pl[i];
    }
    th
}

struct OrderOutcome {
    best: Option<(Candidate, CertificateProblem, LyapunovResult)>,
    attempt: OrderAttempt,
}

fn search_order(
    art: &PlantArtifacts,
    gains: &GainSet,
    params: &DesignParameters,
    cfg: &SearchConfig,
) -> OrderOutcome {
    let n = params.n;
    let eps_list: Vec<Option<f64>> = match params.variant {
        Variant::NeumannOut => cfg.eps_values.iter().map(|&e| Some(e)).collect(),
        _ => vec![None],
    };
    let (beta_c, gamma_c) = recipe(params.variant, n);
    let betas = cfg.log_grid(beta_c);
    let gammas = cfg.log_grid(gamma_c);
    let mut best: Option<(Candidate, CertificateProblem, LyapunovResult)> = None;
    let mut notes = Vec::new();
    let mut lyap: Option<LyapunovResult> = None;
    for eps in eps_list {
        let problem = match build_problem(art, gains, params, eps) {
            Ok(p) => p,
            Err(e) => {
                notes.push(e.to_string());
                continue;
            }
        };
        if lyap.is_none() {
            match solve_lyapunov(&problem.reduced.f, params.delta) {
                Ok(l) => lyap = Some(l),
                Err(e) => {
                    notes.push(e.to_string());
                    break;
                }
            }
        }
        let ly = lyap.as_ref().expect("set above");
        let (kk, ee) = problem.rank_one_terms();
        let search = OrderSearch {
            problem: &problem,
            base: theta1_base(&problem, &ly.p),
            kk,
            ee,
            joint_weight: (2.0 * params.delta * problem.h_i).exp(),
            tol: cfg.psd_tol,
        };
        for &alpha in &cfg.alphas {
            for &scale in &cfg.p_scales {
                let results: Vec<Candidate> = betas
                    .par_iter()
                    .map(|&beta| search.evaluate(alpha, scale, beta, &gammas))
                    .collect();
                if let Some(c) = results.iter().find(|c| c.certified) {
                    let attempt = OrderAttempt {
                        n,
                        certified: true,
                        violation: 0.0,
                        note: None,
                    };
                    return OrderOutcome {
                        best: Some((c.clone(), problem.clone(), ly.clone())),
                        attempt,
                    };
                }
                let local = results
                    .into_iter()
                    .min_by(|a, b| a.violation.total_cmp(&b.violation))
                    .expect("non-empty grid");
                if best.as_ref().is_none_or(|b| local.violation < b.0.violation) {
                    best = Some((local, problem.clone(), ly.clone()));
                }
            }
        }
    }
    let violation = best.as_ref().map(|b| b.0.violation).unwrap_or(f64::INFINITY);
    OrderOutcome {
        best,
        attempt: OrderAttempt {
            n,
            certified: false,
            violation,
            note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
        },
    }
}

fn report_from(cand: Candidate, problem: CertificateProblem, ly: LyapunovResult, attempts: Vec<OrderAttempt>) -> CertificateReport {
    let p = &ly.p * cand.scale;
    let joint = problem.variant() == Variant::JointDelay;
    let (q1, q2) = if joint {
        let (q1, q2) = problem.default_q(cand.alpha, cand.gamma);
        (Some(q1), Some(q2))
    } else {
        (None, None)
    };
    let mut report = CertificateReport {
        status: if cand.certified { Status::Certified } else { Status::Infeasible },
        variant: problem.variant(),
        n: problem.reduced.n,
        alpha: cand.alpha,
        beta: cand.beta,
        gamma: cand.gamma,
        eps: problem.eps(),
        p_scale: cand.scale,
        p_matrix: p,
        q1,
        q2,
        theta1_max_eig: cand.max_eig,
        theta1_tol: cand.tol,
        theta2: cand.theta2,
        theta3: cand.theta3,
        r1_max_eig: None,
        r2: None,
        lyap_residual: ly.residual,
        lyap_condition: ly.condition,
        problem,
        attempts,
        notes: Vec::new(),
    };
    if joint {
        report
            .notes
            .push("Q1, Q2 restricted to the default family that zeroes R1 and R2".to_string());
    }
    report
}

/// Escalates `N` from `N₀+1` to `n_max` and returns the first certificate,
/// or an `Infeasible` report holding the least-violating point.
pub fn certify(art: &PlantArtifacts, gains: &GainSet, params: &DesignParameters, cfg: &SearchConfig) -> Result<CertificateReport> {
    let mut attempts = Vec::new();
    let mut best: Option<(Candidate, CertificateProblem, LyapunovResult)> = None;
    let n_hi = cfg.n_max.min(art.basis.len().saturating_sub(1));
    for n in params.n0 + 1..=n_hi {
        let out = search_order(art, gains, &params.with_n(n), cfg);
        attempts.push(out.attempt.clone());
        if let Some(b) = out.best {
            if b.0.certified {
                let report = report_from(b.0, b.1, b.2, attempts);
                // final numbers from a from-scratch re-evaluation
                return report.revalidate();
            }
            if best.as_ref().is_none_or(|x| b.0.violation < x.0.violation) {
                best = Some(b);
            }
        }
    }
    match best {
        Some((c, pb, ly)) => {
            let mut r = report_from(c, pb, ly, attempts).revalidate()?;
            r.status = Status::Infeasible;
            r.notes.push(format!("no certificate up to N = {n_hi}"));
            if params.variant == Variant::JointDelay {
                r.notes.push("Q1, Q2 searched only along scalar multiples of the zero-residual default".into());
            }
            Ok(r)
        }
        None => {
            let reason = attempts
                .iter()
                .filter_map(|a| a.note.clone())
                .next()
                .unwrap_or_else(|| "no order could be evaluated".into());
            // nothing evaluable at any order (e.g. F + δI never Hurwitz)
            let params_n = params.with_n(params.n0 + 1);
            let problem = build_problem(art, gains, &params_n, params_eps(params))?;
            let d = problem.reduced.f.nrows();
            Ok(CertificateReport {
                status: Status::Infeasible,
                variant: params.variant,
                n: params_n.n,
                alpha: f64::NAN,
                beta: f64::NAN,
                gamma: f64::NAN,
                eps: problem.eps(),
                p_scale: f64::NAN,
                p_matrix: DMatrix::zeros(d, d),
                q1: None,
                q2: None,
                theta1_max_eig: f64::NAN,
                theta1_tol: f64::NAN,
                theta2: f64::NAN,
                theta3: None,
                r1_max_eig: None,
                r2: None,
                lyap_residual: f64::NAN,
                lyap_condition: f64::NAN,
                problem,
                attempts,
                notes: vec![reason],
            })
        }
    }
}

fn params_eps(params: &DesignParameters) -> Option<f64> {
    match params.variant {
        Variant::NeumannOut => Some(0.125),
        _ => None,
    }
}

/// `‖P^N‖` of the normalized Lyapunov solutions over `n_range`.
pub fn p_boundedness_study(
    art: &PlantArtifacts,
    gains: &GainSet,
    params: &DesignParameters,
    n_range: std::ops::RangeInclusive<usize>,
) -> Result<Vec<(usize, f64)>> {
    n_range
        .map(|n| {
            let reduced = assemble_reduced(&art.basis, &art.coeffs, art.q_c(), gains, &params.with_n(n))?;
            let ly = solve_lyapunov(&reduced.f, params.delta)?;
            Ok((n, jacobi::spectral_norm_sym(&ly.p)))
        })
        .collect()
}
