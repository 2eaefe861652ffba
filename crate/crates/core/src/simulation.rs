//! Closed-loop co-simulation of the plant, the delayed measurement and the
//! controller, plus norms, decay fits and the Lyapunov functional.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::certification::CertificateReport;
use crate::controller::{init_controller, ControllerModel, ControllerState, HistoryBuffer};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::numerics::expint::{exp_weighted_integral, phi1, phi2};
use crate::numerics::quadrature::{gradient, left_derivative, trapezoid};
use crate::numerics::tridiag::TridiagLu;
use crate::spectral::{shape_functions, PlantArtifacts, PlantSpec, TraceKind};
use crate::synthesis::{DesignParameters, GainSet, Variant};

/// Modal realization: `żₙ = μₙzₙ + βₙu` for `n ≤ M`.
#[derive(Debug, Clone)]
pub struct ModalPlant {
    pub z: Vec<f64>,
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub b: Vec<f64>,
    pub trace: Vec<f64>,
    pub lambda: Vec<f64>,
    step_cache: Option<(f64, Vec<[f64; 3]>)>,
}

impl ModalPlant {
    pub fn new(art: &PlantArtifacts, modes: usize, kind: TraceKind, z0: &[f64]) -> Result<Self> {
        if modes > art.basis.len() || z0.len() != modes {
            return Err(Error::dims(
                "simulation::ModalPlant::new",
                format!("{modes} modes requested, {} available, {} initial values", art.basis.len(), z0.len()),
            ));
        }
        let m = &art.basis.modes[..modes];
        Ok(ModalPlant {
            z: z0.to_vec(),
            mu: m.iter().map(|e| -e.lambda + art.q_c()).collect(),
            beta: art.coeffs.beta()[..modes].to_vec(),
            b: art.coeffs.b_n[..modes].to_vec(),
            trace: m.iter().map(|e| e.trace(kind)).collect(),
            lambda: m.iter().map(|e| e.lambda).collect(),
            step_cache: None,
        })
    }

    /// Exact step with `u` linear from `u0` to `u1` over the step.
    pub fn step(&mut self, u0: f64, u1: f64, dt: f64) {
        if self.step_cache.as_ref().is_none_or(|c| c.0 != dt) {
            let c = self
                .mu
                .iter()
                .map(|&mu| [(mu * dt).exp(), phi1(mu, dt), phi2(mu, dt)])
                .collect();
            self.step_cache = Some((dt, c));
        }
        let cache = &self.step_cache.as_ref().expect("set above").1;
        let slope = (u1 - u0) / dt;
        for (i, c) in cache.iter().enumerate() {
            self.z[i] = c[0] * self.z[i] + self.beta[i] * (u0 * c[1] + slope * c[2]);
        }
    }

    /// `wₙ = zₙ + bₙu`.
    pub fn w(&self, u: f64) -> Vec<f64> {
        self.z.iter().zip(&self.b).map(|(z, b)| z + b * u).collect()
    }

    /// Truncated measurement series `Σ wₙ·traceₙ`.
    pub fn output(&self, u: f64) -> f64 {
        self.z
            .iter()
            .zip(&self.b)
            .zip(&self.trace)
            .map(|((z, b), tr)| (z + b * u) * tr)
            .sum()
    }

    /// `ζ = Σ_{n>N} wₙ·traceₙ`.
    pub fn residue(&self, n: usize, u: f64) -> f64 {
        (n..self.z.len()).map(|i| (self.z[i] + self.b[i] * u) * self.trace[i]).sum()
    }
}

/// Finite-difference realization with half-cell Robin closures.
#[derive(Debug, Clone)]
pub struct FdPlant {
    pub z: Vec<f64>,
    pub dx: f64,
    a_dl: Vec<f64>,
    a_d: Vec<f64>,
    a_du: Vec<f64>,
    /// Coefficient of `u` in the last row of `A z + g u`.
    g_last: f64,
    dirichlet_left: bool,
    /// `Some(1/c₂)` when `z(1) = u/c₂` is imposed.
    dirichlet_right: Option<f64>,
    c1_over_s1: Option<f64>,
    lu: Option<(f64, TridiagLu)>,
}

impl FdPlant {
    pub fn new(plant: &PlantSpec, x: &[f64], z0: Vec<f64>) -> Result<Self> {
        let g = x.len();
        if g < 3 || z0.len() != g {
            return Err(Error::dims("simulation::FdPlant::new", "need >= 3 points and a matching profile"));
        }
        let dx = x[1] - x[0];
        let mut dl = vec![0.0; g - 1];
        let mut d = vec![0.0; g];
        let mut du = vec![0.0; g - 1];
        let ph: Vec<f64> = (0..g - 1).map(|i| plant.p.eval(0.5 * (x[i] + x[i + 1]))).collect();
        let qt = plant.q_tilde.sample(x);
        for i in 1..g - 1 {
            dl[i - 1] = ph[i - 1] / (dx * dx);
            du[i] = ph[i] / (dx * dx);
            d[i] = -(ph[i - 1] + ph[i]) / (dx * dx) - qt[i];
        }
        let (c1, s1, c2, s2) = (plant.c1(), plant.s1(), plant.c2(), plant.s2());
        let tiny = 1e-14;
        let dirichlet_left = s1.abs() < tiny;
        let mut c1_over_s1 = None;
        if !dirichlet_left {
            // z_x(0) = (c₁/s₁) z(0), half cell at x = 0
            let r = c1 / s1;
            c1_over_s1 = Some(r);
            d[0] = (-ph[0] / dx - plant.p.eval(0.0) * r) / (0.5 * dx) - qt[0];
            du[0] = ph[0] / dx / (0.5 * dx);
        }
        let dirichlet_right = if s2.abs() < tiny { Some(1.0 / c2) } else { None };
        let mut g_last = 0.0;
        if dirichlet_right.is_none() {
            // z_x(1) = (u - c₂ z(1))/s₂
            let p1 = plant.p.eval(1.0);
            d[g - 1] = (-p1 * c2 / s2 - ph[g - 2] / dx) / (0.5 * dx) - qt[g - 1];
            dl[g - 2] = ph[g - 2] / dx / (0.5 * dx);
            g_last = p1 / s2 / (0.5 * dx);
        }
        Ok(FdPlant {
            z: z0,
            dx,
            a_dl: dl,
            a_d: d,
            a_du: du,
            g_last,
            dirichlet_left,
            dirichlet_right,
            c1_over_s1,
            lu: None,
        })
    }

    fn apply_a(&self, z: &[f64], u: f64) -> Vec<f64> {
        let g = z.len();
        let mut out = vec![0.0; g];
        for i in 0..g {
            let mut v = self.a_d[i] * z[i];
            if i > 0 {
                v += self.a_dl[i - 1] * z[i - 1];
            }
            if i + 1 < g {
                v += self.a_du[i] * z[i + 1];
            }
            out[i] = v;
        }
        out[g - 1] += self.g_last * u;
        out
    }

    /// TR-BDF2 step. Both stages share the matrix `I - (γ/2)dt·A`.
    pub fn step(&mut self, u0: f64, u1: f64, dt: f64) -> Result<()> {
        let g = self.z.len();
        let gam = 2.0 - std::f64::consts::SQRT_2;
        let w = 0.5 * gam * dt;
        if self.lu.as_ref().is_none_or(|c| c.0 != dt) {
            let mut dl: Vec<f64> = self.a_dl.iter().map(|v| -w * v).collect();
            let mut d: Vec<f64> = self.a_d.iter().map(|v| 1.0 - w * v).collect();
            let mut du: Vec<f64> = self.a_du.iter().map(|v| -w * v).collect();
            if self.dirichlet_left {
                d[0] = 1.0;
                du[0] = 0.0;
            }
            if self.dirichlet_right.is_some() {
                d[g - 1] = 1.0;
                dl[g - 2] = 0.0;
            }
            self.lu = Some((dt, TridiagLu::factor(&dl, &d, &du)));
        }
        let ug = u0 + gam * (u1 - u0);
        let az = self.apply_a(&self.z, u0);
        let mut rhs: Vec<f64> = self.z.iter().zip(&az).map(|(z, a)| z + w * a).collect();
        rhs[g - 1] += w * self.g_last * ug;
        let zg = self.solve_with_bc(rhs, ug)?;
        let c1 = 1.0 / (gam * (2.0 - gam));
        let c0 = (1.0 - gam).powi(2) * c1;
        let mut rhs: Vec<f64> = zg.iter().zip(&self.z).map(|(a, b)| c1 * a - c0 * b).collect();
        rhs[g - 1] += w * self.g_last * u1;
        self.z = self.solve_with_bc(rhs, u1)?;
        Ok(())
    }

    fn solve_with_bc(&self, mut rhs: Vec<f64>, u: f64) -> Result<Vec<f64>> {
        let g = rhs.len();
        if self.dirichlet_left {
            rhs[0] = 0.0;
        }
        if let Some(inv_c2) = self.dirichlet_right {
            rhs[g - 1] = u * inv_c2;
        }
        let z = self.lu.as_ref().expect("factored in step").1.solve(&rhs);
        if let Some(row) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure { row });
        }
        Ok(z)
    }

    pub fn output(&self, kind: TraceKind) -> f64 {
        match kind {
            TraceKind::Dirichlet => self.z[0],
            TraceKind::Neumann => match self.c1_over_s1 {
                Some(r) => r * self.z[0],
                None => left_derivative(&self.z, self.dx),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    Modal,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Closed,
    /// `u ≡ 0`, no controller.
    Open,
}

#[derive(Debug, Clone)]
pub struct Scenario<'a> {
    pub art: &'a PlantArtifacts,
    pub params: DesignParameters,
    pub gains: GainSet,
    pub certificate: Option<&'a CertificateReport>,
    pub z0: Expr,
    pub y0: Expr,
    pub t_final: f64,
    pub dt: f64,
    pub record_stride: usize,
    pub plant_kind: PlantKind,
    /// Modes of the modal plant (and of the projections recorded for `eₙ`).
    pub sim_modes: usize,
    pub control: ControlMode,
    pub keep_profiles: bool,
    pub lipschitz_max: f64,
}

impl<'a> Scenario<'a> {
    pub fn new(art: &'a PlantArtifacts, params: DesignParameters, gains: GainSet, z0: Expr, y0: Expr) -> Self {
        Scenario {
            art,
            params,
            gains,
            certificate: None,
            z0,
            y0,
            t_final: 15.0,
            dt: 1e-3,
            record_stride: 10,
            plant_kind: PlantKind::Modal,
            sim_modes: 60,
            control: ControlMode::Closed,
            keep_profiles: false,
            lipschitz_max: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub u: f64,
    pub y: f64,
    pub h1_norm: f64,
    pub l2_norm: f64,
    pub zhat: Vec<f64>,
    /// Predictor state `Ẑ_A^{N₀}`.
    pub za: Vec<f64>,
    /// `zₙ(t - h_o) - ẑₙ(t)`; NaN before `h_o`.
    pub e: Vec<f64>,
    /// Predictor integral state against direct quadrature (NaN open loop).
    pub artstein_discrepancy: f64,
}

/// Modal quantities needed by the Lyapunov functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalData {
    pub lambda: Vec<f64>,
    pub b: Vec<f64>,
    pub trace: Vec<f64>,
    /// `zₙ`, `n ≤ M`, per record.
    pub z_records: Vec<Vec<f64>>,
    /// Plant input at each record.
    pub u_plant_records: Vec<f64>,
    /// `ζ` at every step.
    pub zeta_steps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSeries {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub v0: Vec<f64>,
    pub v1: Vec<f64>,
    /// `max (W(t) - min_{s<t} W(s)) / min_{s<t} W(s)` with `W = e^{2δ(t-h)}V`.
    pub max_relative_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub variant: Variant,
    pub plant_kind: PlantKind,
    pub n0: usize,
    pub n: usize,
    pub dt: f64,
    pub record_stride: usize,
    pub h_o: f64,
    pub h_i: f64,
    pub delta: f64,
    pub records: Vec<TraceRecord>,
    pub x: Vec<f64>,
    pub profiles: Option<Vec<Vec<f64>>>,
    /// Controller output at every step, and its value before `t = 0`.
    pub u_steps: Vec<f64>,
    pub u_pre: f64,
    pub model: Option<ControllerModel>,
    pub modal: Option<ModalData>,
    pub lyapunov: Option<LyapunovSeries>,
    pub notes: Vec<String>,
}

/// `(∫ z² + z_x²)^{1/2}` by trapezoid with centered interior differences.
pub fn h1_norm(z: &[f64], dx: f64) -> f64 {
    let g = gradient(z, dx);
    let v: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a * a + b * b).collect();
    trapezoid(&v, dx).sqrt()
}

pub fn l2_norm(z: &[f64], dx: f64) -> f64 {
    let v: Vec<f64> = z.iter().map(|a| a * a).collect();
    trapezoid(&v, dx).sqrt()
}

/// Checks the compatibility conditions of the initial data; all
/// violations are listed.
pub fn check_initial_data(
    plant: &PlantSpec,
    kind: TraceKind,
    z0: &Expr,
    y0: &Expr,
    u0: Option<f64>,
    h_o: f64,
    lipschitz_max: f64,
) -> Result<()> {
    let dz = z0.derivative();
    let mut v = Vec::new();
    let tol = 1e-8;
    let left = plant.c1() * z0.eval(0.0) - plant.s1() * dz.eval(0.0);
    if left.abs() > tol * (1.0 + z0.eval(0.0).abs() + dz.eval(0.0).abs()) {
        v.push(format!("c_theta1 z0(0) - s_theta1 z0'(0) = {left:e}, expected 0"));
    }
    if let Some(u0) = u0 {
        let right = plant.c2() * z0.eval(1.0) + plant.s2() * dz.eval(1.0);
        if (right - u0).abs() > tol * (1.0 + u0.abs()) {
            v.push(format!("c_theta2 z0(1) + s_theta2 z0'(1) = {right:e}, expected u0 = {u0:e}"));
        }
    }
    let trace0 = match kind {
        TraceKind::Dirichlet => z0.eval(0.0),
        TraceKind::Neumann => dz.eval(0.0),
    };
    if (y0.eval(0.0) - trace0).abs() > tol * (1.0 + trace0.abs()) {
        v.push(format!("y0(0) = {:e} differs from the boundary trace {trace0:e}", y0.eval(0.0)));
    }
    let samples = 4000;
    let ds = h_o / samples as f64;
    let mut lip = 0.0f64;
    let mut prev = y0.eval(-h_o);
    for k in 1..=samples {
        let cur = y0.eval(-h_o + k as f64 * ds);
        lip = lip.max((cur - prev).abs() / ds);
        prev = cur;
    }
    if !lip.is_finite() || lip > lipschitz_max {
        v.push(format!("y0 difference quotient {lip:e} exceeds {lipschitz_max:e}"));
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::IncompatibleInitialData(v))
    }
}

enum PlantSim {
    Modal(ModalPlant),
    Fd(FdPlant),
}

/// Co-simulates plant, measurement delay and controller on the `dt` grid.
pub fn run_closed_loop(sc: &Scenario) -> Result<SimulationTrace> {
    const OP: &str = "simulation::run_closed_loop";
    let art = sc.art;
    let plant = &art.plant;
    let p = &sc.params;
    let kind = p.variant.trace_kind();
    let dt = sc.dt;
    if !(dt > 0.0) || !(sc.t_final > 0.0) || sc.record_stride == 0 {
        return Err(Error::Unsupported {
            op: OP,
            reason: format!("dt = {dt}, T = {}, stride = {}", sc.t_final, sc.record_stride),
        });
    }
    if p.h_o < dt || (p.variant == Variant::JointDelay && p.h_i < dt) {
        return Err(Error::Unsupported {
            op: OP,
            reason: "delays must be at least one step".into(),
        });
    }
    let m = sc.sim_modes;
    if m < p.n || m > art.basis.len() {
        return Err(Error::dims(OP, format!("{m} plant modes for N = {}", p.n)));
    }
    let mut notes = Vec::new();
    if m < 4 * p.n {
        notes.push(format!("plant uses {m} modes, fewer than 4N = {}", 4 * p.n));
    }
    let closed = sc.control == ControlMode::Closed;
    let joint = p.variant == Variant::JointDelay;
    let u0 = if closed && !joint {
        plant.c2() * sc.z0.eval(1.0) + plant.s2() * sc.z0.derivative().eval(1.0)
    } else {
        0.0
    };
    check_initial_data(plant, kind, &sc.z0, &sc.y0, closed.then_some(u0), p.h_o, sc.lipschitz_max)?;

    let grid = &art.basis.grid;
    let x = grid.x.clone();
    let dx = grid.dx;
    let z0_grid: Vec<f64> = x.iter().map(|&xi| sc.z0.eval(xi)).collect();
    let (_, bshape) = shape_functions(plant, grid);
    let mut sim = match sc.plant_kind {
        PlantKind::Modal => {
            let zn = art.basis.project(&z0_grid, m);
            PlantSim::Modal(ModalPlant::new(art, m, kind, &zn)?)
        }
        PlantKind::FiniteDifference => PlantSim::Fd(FdPlant::new(plant, &x, z0_grid)?),
    };
    let mut ctrl: Option<ControllerState> = if closed {
        let model = ControllerModel::new(&art.basis, &art.coeffs, art.q_c(), &sc.gains, p)?;
        Some(init_controller(model, u0, dt)?)
    } else {
        None
    };
    let u_pre = if joint { 0.0 } else { u0 };
    // plant input history for the joint variant (u(t - hᵢ))
    let mut u_plant_hist = HistoryBuffer::new(p.h_i + 4.0 * dt, 0.0, Some(0.0));
    let mut y_hist = HistoryBuffer::new(p.h_o + 4.0 * dt, 0.0, None);

    let steps = (sc.t_final / dt).round() as usize;
    let n = p.n;
    let modal_basis = &art.basis.modes[..m];
    let zn_of = |sim: &PlantSim| -> Vec<f64> {
        match sim {
            PlantSim::Modal(mp) => mp.z[..n].to_vec(),
            PlantSim::Fd(fp) => art.basis.project(&fp.z, n),
        }
    };
    let profile_of = |sim: &PlantSim, up: f64| -> Vec<f64> {
        match sim {
            PlantSim::Modal(mp) => {
                let w = mp.w(up);
                let mut z: Vec<f64> = bshape.iter().map(|b| -b * up).collect();
                for (wi, mode) in w.iter().zip(modal_basis) {
                    z.iter_mut().zip(&mode.phi).for_each(|(o, ph)| *o += wi * ph);
                }
                z
            }
            PlantSim::Fd(fp) => fp.z.clone(),
        }
    };
    let output_of = |sim: &PlantSim, up: f64| -> f64 {
        match sim {
            PlantSim::Modal(mp) => mp.output(up),
            PlantSim::Fd(fp) => fp.output(kind),
        }
    };

    let mut records = Vec::new();
    let mut profiles = sc.keep_profiles.then(Vec::new);
    let mut zn_steps: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut u_steps = Vec::with_capacity(steps + 1);
    let is_modal = matches!(sim, PlantSim::Modal(_));
    let mut modal = is_modal.then(|| ModalData {
        lambda: modal_basis.iter().map(|e| e.lambda).collect(),
        b: art.coeffs.b_n[..m].to_vec(),
        trace: modal_basis.iter().map(|e| e.trace(kind)).collect(),
        z_records: Vec::new(),
        u_plant_records: Vec::new(),
        zeta_steps: Vec::with_capacity(steps + 1),
    });

    let mut u_now = ctrl.as_ref().map(|c| c.u).unwrap_or(0.0);
    let plant_input = |u_plant_hist: &HistoryBuffer, t: f64, u: f64| -> Result<f64> {
        if joint {
            u_plant_hist.value_at(t - p.h_i)
        } else {
            Ok(u)
        }
    };
    u_plant_hist.push(0.0, u_now)?;
    let mut up_now = plant_input(&u_plant_hist, 0.0, u_now)?;
    y_hist.push(0.0, output_of(&sim, up_now))?;
    let measure = |y_hist: &HistoryBuffer, t: f64| -> Result<f64> {
        if t <= p.h_o {
            Ok(sc.y0.eval(t - p.h_o))
        } else {
            y_hist.value_at(t - p.h_o)
        }
    };

    for k in 0..=steps {
        let t = k as f64 * dt;
        zn_steps.push(zn_of(&sim));
        u_steps.push(u_now);
        if let (Some(md), PlantSim::Modal(mp)) = (modal.as_mut(), &sim) {
            md.zeta_steps.push(mp.residue(n, up_now));
        }
        let y_now = measure(&y_hist, t)?;
        if k % sc.record_stride == 0 {
            let prof = profile_of(&sim, up_now);
            let (zhat, za, disc) = match &ctrl {
                Some(c) => (c.zhat.clone(), c.predictor(), c.artstein_quadrature_check()?),
                None => (vec![0.0; n], vec![0.0; p.n0], f64::NAN),
            };
            records.push(TraceRecord {
                t,
                u: u_now,
                y: y_now,
                h1_norm: h1_norm(&prof, dx),
                l2_norm: l2_norm(&prof, dx),
                zhat,
                za,
                e: vec![f64::NAN; n],
                artstein_discrepancy: disc,
            });
            if let (Some(md), PlantSim::Modal(mp)) = (modal.as_mut(), &sim) {
                md.z_records.push(mp.z.clone());
                md.u_plant_records.push(up_now);
            }
            if let Some(pr) = profiles.as_mut() {
                pr.push(prof);
            }
        }
        if k == steps {
            break;
        }
        let t1 = t + dt;
        let y_next = measure(&y_hist, t1)?;
        let u_next = match ctrl.as_mut() {
            Some(c) => c.step(y_now, y_next)?,
            None => 0.0,
        };
        u_plant_hist.push(t1, u_next)?;
        let up_next = plant_input(&u_plant_hist, t1, u_next)?;
        match &mut sim {
            PlantSim::Modal(mp) => mp.step(up_now, up_next, dt),
            PlantSim::Fd(fp) => fp.step(up_now, up_next, dt)?,
        }
        u_now = u_next;
        up_now = up_next;
        y_hist.push(t1, output_of(&sim, up_now))?;
    }

    // observation errors from the per-step modal history
    let lag = p.h_o / dt;
    for (r, rec) in records.iter_mut().enumerate() {
        let k = (r * sc.record_stride) as f64;
        if rec.t + 1e-9 < p.h_o {
            continue;
        }
        let pos = k - lag;
        let i0 = pos.floor().max(0.0) as usize;
        let frac = pos - i0 as f64;
        for i in 0..n {
            let a = zn_steps[i0][i];
            let b = zn_steps.get(i0 + 1).map(|v| v[i]).unwrap_or(a);
            rec.e[i] = a + frac * (b - a) - rec.zhat[i];
        }
    }

    let mut trace = SimulationTrace {
        variant: p.variant,
        plant_kind: sc.plant_kind,
        n0: p.n0,
        n,
        dt,
        record_stride: sc.record_stride,
        h_o: p.h_o,
        h_i: if joint { p.h_i } else { 0.0 },
        delta: p.delta,
        records,
        x,
        profiles,
        u_steps,
        u_pre,
        model: ctrl.map(|c| c.model),
        modal,
        lyapunov: None,
        notes,
    };
    if let Some(cert) = sc.certificate {
        if trace.modal.is_some() && closed {
            trace.lyapunov = Some(lyapunov_trace(&trace, cert)?);
        }
    }
    Ok(trace)
}

fn ramp_moment(a: f64, tau: f64) -> f64 {
    let z = a * tau;
    if z.abs() < 1e-3 {
        tau * tau * (0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0)
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (a * a)
    }
}

fn whole_steps(op: &'static str, span: f64, dt: f64) -> Result<usize> {
    let w = span / dt;
    if (w - w.round()).abs() > 1e-6 {
        return Err(Error::Unsupported {
            op,
            reason: format!("delay {span} is not a whole number of steps of {dt}"),
        });
    }
    Ok(w.round() as usize)
}

/// `V = V₀ + V₁` on the record grid for `t ≥ h_o`.
pub fn lyapunov_trace(trace: &SimulationTrace, cert: &CertificateReport) -> Result<LyapunovSeries> {
    const OP: &str = "simulation::lyapunov_trace";
    let md = trace
        .modal
        .as_ref()
        .ok_or_else(|| Error::MissingModalData("the Lyapunov functional needs a modal plant run".into()))?;
    let model = trace
        .model
        .as_ref()
        .ok_or_else(|| Error::MissingModalData("open-loop trace has no controller state".into()))?;
    if cert.n != trace.n || cert.variant != trace.variant || cert.problem.reduced.n0 != trace.n0 {
        return Err(Error::dims(
            OP,
            format!("certificate N = {} ({}) for a trace with N = {}", cert.n, cert.variant.name(), trace.n),
        ));
    }
    let (n0, n) = (trace.n0, trace.n);
    let dt = trace.dt;
    let horizon = model.horizon;
    let w_h = whole_steps(OP, horizon, dt)?;
    let w_o = whole_steps(OP, trace.h_o, dt)?;
    let scale_e: Vec<f64> = model.lambda[n0..n]
        .iter()
        .map(|l| match trace.variant.trace_kind() {
            TraceKind::Dirichlet => l.sqrt(),
            TraceKind::Neumann => *l,
        })
        .collect();
    let delta = trace.delta;

    // V₁ by the exact sliding-window recursion on piecewise-linear ζ²
    let a = -2.0 * delta;
    let (i0, i1) = (phi1(a, dt), ramp_moment(a, dt));
    let decay = (a * dt).exp();
    let drop = (a * trace.h_o).exp();
    let z2: Vec<f64> = md.zeta_steps.iter().map(|z| z * z).collect();
    let seg: Vec<f64> = z2.windows(2).map(|w| w[1] * i0 + (w[0] - w[1]) * i1 / dt).collect();
    let mut v1_steps = vec![0.0; z2.len()];
    for k in 1..z2.len() {
        let mut v = decay * v1_steps[k - 1] + seg[k - 1];
        if k > w_o {
            v -= drop * seg[k - 1 - w_o];
        }
        v1_steps[k] = v;
    }

    let p_mat = &cert.p_matrix;
    let mut out = LyapunovSeries {
        t: Vec::new(),
        v: Vec::new(),
        v0: Vec::new(),
        v1: Vec::new(),
        max_relative_increase: 0.0,
    };
    let mut running_min = f64::INFINITY;
    for (r, rec) in trace.records.iter().enumerate() {
        if rec.t + 1e-9 < trace.h_o {
            continue;
        }
        let k = r * trace.record_stride;
        // second Artstein transformation of the upper observer modes
        let lo = k as i64 - w_h as i64;
        let u_window: Vec<f64> = (lo..=k as i64)
            .map(|j| if j < 0 { trace.u_pre } else { trace.u_steps[j as usize] })
            .collect();
        let mut x = DVector::zeros(2 * n);
        for i in 0..n0 {
            x[i] = rec.za[i];
            x[n0 + i] = rec.e[i];
        }
        let m1 = n - n0;
        for j in 0..m1 {
            let i = n0 + j;
            let mu = model.mu[i];
            let lam = model.lambda[i];
            let zt = (mu * horizon).exp() * rec.zhat[i] / lam
                + exp_weighted_integral(mu, &u_window, dt) * model.beta[i] / lam;
            x[2 * n0 + j] = zt;
            x[2 * n0 + m1 + j] = scale_e[j] * rec.e[i];
        }
        let zr = &md.z_records[r];
        let up = md.u_plant_records[r];
        let tail: f64 = (n..zr.len())
            .map(|i| {
                let w = zr[i] + md.b[i] * up;
                md.lambda[i] * w * w
            })
            .sum();
        let v0 = (x.transpose() * p_mat * &x)[(0, 0)] + cert.gamma * tail;
        let v1 = cert.beta * v1_steps[k];
        let v = v0 + v1;
        let w = (2.0 * delta * (rec.t - trace.h_o)).exp() * v;
        if running_min.is_finite() && running_min > 0.0 {
            out.max_relative_increase = out.max_relative_increase.max((w - running_min) / running_min);
        }
        running_min = running_min.min(w);
        out.t.push(rec.t);
        out.v.push(v);
        out.v0.push(v0);
        out.v1.push(v1);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares slope of `ln f` against `t` over `t ≥ t_start`, negated.
pub fn fit_decay_rate(t: &[f64], f: &[f64], t_start: f64) -> Result<DecayFit> {
    const OP: &str = "simulation::fit_decay_rate";
    let pts: Vec<(f64, f64)> = t.iter().zip(f).filter(|(ti, _)| **ti >= t_start).map(|(a, b)| (*a, *b)).collect();
    if pts.len() < 20 {
        return Err(Error::Unsupported {
            op: OP,
            reason: format!("{} samples after t = {t_start}, need 20", pts.len()),
        });
    }
    if let Some((ti, fi)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositiveSamples(format!("{OP}: field = {fi} at t = {ti}")));
    }
    let nf = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - ml)).sum();
    let slope = sxy / sxx;
    let intercept = ml - slope * mt;
    let residual = (pts
        .iter()
        .map(|p| (p.1.ln() - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / nf)
        .sqrt();
    Ok(DecayFit {
        rate: -slope,
        intercept,
        residual,
        samples: pts.len(),
    })
}

impl SimulationTrace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn h1(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.h1_norm).collect()
    }

    pub fn l2(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.l2_norm).collect()
    }

    /// `maxₙ |eₙ(t)|` (NaN before `h_o`).
    pub fn max_error(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.e.iter().fold(f64::NAN, |a, b| a.max(b.abs())))
            .collect()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t", "u", "y", "h1_norm", "l2_norm", "V", "V0", "V1"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        cols.extend((1..=self.n).map(|i| format!("zhat_{i}")));
        cols.extend((1..=self.n).map(|i| format!("e_{i}")));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.csv_header();
        s.push('\n');
        let ly = self.lyapunov.as_ref();
        let mut li = 0;
        for r in &self.records {
            let (v, v0, v1) = match ly {
                Some(l) if li < l.t.len() && (l.t[li] - r.t).abs() < 1e-12 => {
                    li += 1;
                    (l.v[li - 1], l.v0[li - 1], l.v1[li - 1])
                }
                _ => (f64::NAN, f64::NAN, f64::NAN),
            };
            let _ = write!(s, "{},{},{},{},{},{},{},{}", r.t, r.u, r.y, r.h1_norm, r.l2_norm, v, v0, v1);
            for z in &r.zhat {
                let _ = write!(s, ",{z}");
            }
            for e in &r.e {
                let _ = write!(s, ",{e}");
            }
            s.push('\n');
        }
        s
    }

    /// Rows are record times, columns the grid; the first row holds `x`.
    pub fn profiles_csv(&self) -> Option<String> {
        let pr = self.profiles.as_ref()?;
        let mut s = String::from("t");
        for x in &self.x {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
        for (r, prof) in self.records.iter().zip(pr) {
            let _ = write!(s, "{}", r.t);
            for v in prof {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        Some(s)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io("simulation::write_csv", path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn h1_norm_examples() {
        let n = 2001;
        let dx = 1.0 / (n - 1) as f64;
        assert!((h1_norm(&vec![1.0; n], dx) - 1.0).abs() < 1e-12);
        assert_eq!(h1_norm(&vec![0.0; n], dx), 0.0);
        let s: Vec<f64> = (0..n).map(|i| (PI * i as f64 * dx).sin()).collect();
        assert!((h1_norm(&s, dx) - (0.5 + PI * PI / 2.0).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn decay_fit_examples() {
        let t: Vec<f64> = (0..300).map(|i| i as f64 * 0.1).collect();
        let f: Vec<f64> = t.iter().map(|t| 3.0 * (-t).exp()).collect();
        assert!((fit_decay_rate(&t, &f, 0.0).unwrap().rate - 1.0).abs() < 1e-6);
        let g: Vec<f64> = t.iter().map(|t| (-0.5 * t).exp() * (2.0 + t.cos())).collect();
        assert!((fit_decay_rate(&t, &g, 0.0).unwrap().rate - 0.5).abs() < 0.05);
        let mut bad = f.clone();
        bad[100] = 0.0;
        assert!(matches!(fit_decay_rate(&t, &bad, 0.0), Err(Error::NonPositiveSamples(_))));
    }
}
