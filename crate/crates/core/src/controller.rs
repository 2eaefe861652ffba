//! Observer plus Artstein predictor run in time.
//!
//! The lower observer block (`ẑₙ`, `n ≤ N₀`) is advanced by classical RK4.
//! The upper observer modes have no output injection and are stepped
//! exactly with the delayed input interpolated linearly between history
//! samples. The predictor integral `φ` is stepped exactly as well.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::expint::{exp_weighted_integral, linear_input_step, phi1};
use crate::spectral::{SpectralBasis, SpectralCoefficients};
use crate::synthesis::{initial_observer_state, DesignParameters, GainSet, Variant};

/// Time-stamped samples with linear interpolation.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    samples: VecDeque<(f64, f64)>,
    span: f64,
    start: f64,
    before_start: Option<f64>,
}

impl HistoryBuffer {
    /// Keeps at least `span` seconds. Queries before `start` return
    /// `before_start` when given.
    pub fn new(span: f64, start: f64, before_start: Option<f64>) -> Self {
        HistoryBuffer {
            samples: VecDeque::new(),
            span,
            start,
            before_start,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn oldest(&self) -> Option<f64> {
        self.samples.front().map(|s| s.0)
    }

    pub fn newest(&self) -> Option<f64> {
        self.samples.back().map(|s| s.0)
    }

    pub fn last_value(&self) -> Option<f64> {
        self.samples.back().map(|s| s.1)
    }

    pub fn push(&mut self, t: f64, v: f64) -> Result<()> {
        if let Some(last) = self.newest() {
            if t <= last {
                return Err(Error::Unsupported {
                    op: "controller::HistoryBuffer::push",
                    reason: format!("timestamp {t} not after {last}"),
                });
            }
        }
        self.samples.push_back((t, v));
        // keep one sample at or before newest - span
        while self.samples.len() > 2 && self.samples[1].0 <= t - self.span {
            self.samples.pop_front();
        }
        Ok(())
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        let underrun = || Error::BufferUnderrun {
            op: "controller::HistoryBuffer::value_at",
            t,
            oldest: self.oldest().unwrap_or(f64::NAN),
            newest: self.newest().unwrap_or(f64::NAN),
        };
        if t < self.start {
            return self.before_start.ok_or_else(underrun);
        }
        let (t0, v0) = *self.samples.front().ok_or_else(underrun)?;
        let (t1, v1) = *self.samples.back().expect("non-empty");
        let slack = 1e-9 * (1.0 + t.abs());
        if t > t1 + slack || t < t0 - slack {
            if t < t0 && (t0 - self.start).abs() <= slack {
                if let Some(b) = self.before_start {
                    return Ok(b);
                }
            }
            return Err(underrun());
        }
        if t >= t1 {
            return Ok(v1);
        }
        if t <= t0 {
            return Ok(v0);
        }
        let idx = self.samples.partition_point(|s| s.0 <= t);
        let (ta, va) = self.samples[idx - 1];
        let (tb, vb) = self.samples[idx];
        Ok(va + (vb - va) * (t - ta) / (tb - ta))
    }

    pub fn samples(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.samples.iter()
    }
}

/// Everything the runtime needs about the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerModel {
    pub variant: Variant,
    pub n0: usize,
    pub n: usize,
    pub lambda: Vec<f64>,
    /// `-λₙ + q_c`, `n = 1..N`.
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub b: Vec<f64>,
    /// `φₙ(0)` or `φₙ'(0)`.
    pub trace: Vec<f64>,
    pub k: Vec<f64>,
    pub l: Vec<f64>,
    /// Delay seen by the observer input (`h` or `hᵢ + h_o`).
    pub horizon: f64,
    /// `u(τ)` for `τ < 0`: `u₀` for single delays, 0 for the joint variant.
    pub pre_history: PreHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreHistory {
    HoldInitial,
    Zero,
}

impl ControllerModel {
    pub fn new(
        basis: &SpectralBasis,
        coeffs: &SpectralCoefficients,
        q_c: f64,
        gains: &GainSet,
        params: &DesignParameters,
    ) -> Result<Self> {
        let (n0, n) = (params.n0, params.n);
        if n > basis.len() || n <= n0 || gains.k.len() != n0 || gains.l.len() != n0 {
            return Err(Error::dims(
                "controller::init_controller",
                format!("N0 = {n0}, N = {n}, {} modes, gains {}/{}", basis.len(), gains.k.len(), gains.l.len()),
            ));
        }
        let kind = params.variant.trace_kind();
        let modes = &basis.modes[..n];
        Ok(ControllerModel {
            variant: params.variant,
            n0,
            n,
            lambda: modes.iter().map(|m| m.lambda).collect(),
            mu: modes.iter().map(|m| -m.lambda + q_c).collect(),
            beta: coeffs.beta()[..n].to_vec(),
            b: coeffs.b_n[..n].to_vec(),
            trace: modes.iter().map(|m| m.trace(kind)).collect(),
            k: gains.k.clone(),
            l: gains.l.clone(),
            horizon: params.horizon(),
            pre_history: match params.variant {
                Variant::JointDelay => PreHistory::Zero,
                _ => PreHistory::HoldInitial,
            },
        })
    }

    fn eh(&self) -> Vec<f64> {
        self.mu[..self.n0].iter().map(|a| (a * self.horizon).exp()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    pub model: ControllerModel,
    pub zhat: Vec<f64>,
    pub phi: Vec<f64>,
    pub u_hist: HistoryBuffer,
    pub t: f64,
    pub dt: f64,
    pub u: f64,
    eh: Vec<f64>,
    since_sync: usize,
}

/// `Ẑ^{N₀}(0)` from the minimal-norm rule, `φ(0)` in closed form,
/// `ẑₙ(0) = 0` above `N₀`. The joint variant forces `u₀ = 0`.
pub fn init_controller(model: ControllerModel, u0: f64, dt: f64) -> Result<ControllerState> {
    if !(dt > 0.0) || !u0.is_finite() {
        return Err(Error::Unsupported {
            op: "controller::init_controller",
            reason: format!("dt = {dt}, u0 = {u0}"),
        });
    }
    let n0 = model.n0;
    let a0 = &model.mu[..n0];
    let b0 = &model.beta[..n0];
    let pre = match model.pre_history {
        PreHistory::HoldInitial => u0,
        PreHistory::Zero => 0.0,
    };
    let mut zhat = vec![0.0; model.n];
    let phi: Vec<f64> = a0.iter().zip(b0).map(|(a, b)| b * phi1(*a, model.horizon) * pre).collect();
    if model.k.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroGain {
            op: "controller::init_controller",
        });
    }
    if pre == u0 {
        let z0 = initial_observer_state(u0, &model.k, a0, b0, model.horizon)?;
        zhat[..n0].copy_from_slice(&z0);
    } else {
        // pre-history differs from u₀: solve K e^{A₀h} Ẑ = u₀ - Kφ(0)
        let eh = model.eh();
        let r: Vec<f64> = model.k.iter().zip(&eh).map(|(k, e)| k * e).collect();
        let c = u0 - model.k.iter().zip(&phi).map(|(k, p)| k * p).sum::<f64>();
        let rr: f64 = r.iter().map(|v| v * v).sum();
        for i in 0..n0 {
            zhat[i] = r[i] * c / rr;
        }
    }
    let span = model.horizon + 4.0 * dt;
    let mut u_hist = HistoryBuffer::new(span, 0.0, Some(pre));
    let eh = model.eh();
    let mut state = ControllerState {
        model,
        zhat,
        phi,
        u_hist: HistoryBuffer::new(0.0, 0.0, None),
        t: 0.0,
        dt,
        u: 0.0,
        eh,
        since_sync: 0,
    };
    state.u = state.feedback(&state.zhat[..n0], &state.phi);
    u_hist.push(0.0, state.u)?;
    state.u_hist = u_hist;
    Ok(state)
}

impl ControllerState {
    fn feedback(&self, zlow: &[f64], phi: &[f64]) -> f64 {
        (0..self.model.n0)
            .map(|i| self.model.k[i] * (self.eh[i] * zlow[i] + phi[i]))
            .sum()
    }

    /// `Ẑ_A^{N₀}(t) = e^{A₀H}Ẑ^{N₀}(t) + φ(t)`.
    pub fn predictor(&self) -> Vec<f64> {
        (0..self.model.n0).map(|i| self.eh[i] * self.zhat[i] + self.phi[i]).collect()
    }

    /// `ŵₙ = ẑₙ + bₙu(t - H)`.
    pub fn what(&self) -> Result<Vec<f64>> {
        let ud = self.u_hist.value_at(self.t - self.model.horizon)?;
        Ok(self.zhat.iter().zip(&self.model.b).map(|(z, b)| z + b * ud).collect())
    }

    /// Advances by `dt` given the measurement at the current time and at
    /// the end of the step (linear in between). Returns the new `u`.
    pub fn step(&mut self, y_now: f64, y_next: f64) -> Result<f64> {
        let m = &self.model;
        let (n0, n) = (m.n0, m.n);
        let dt = self.dt;
        let t = self.t;
        let h = m.horizon;
        let ud0 = self.u_hist.value_at(t - h)?;
        let udh = self.u_hist.value_at(t + 0.5 * dt - h)?;
        let ud1 = self.u_hist.value_at(t + dt - h)?;
        // upper modes at the three RK4 abscissae, exact for linear input
        let slope = (ud1 - ud0) / dt;
        let upper_at = |tau: f64| -> f64 {
            (n0..n)
                .map(|i| {
                    let z = linear_input_step(m.mu[i], self.zhat[i], m.beta[i], ud0, slope, tau);
                    (z + m.b[i] * (ud0 + slope * tau)) * m.trace[i]
                })
                .sum()
        };
        let up = [upper_at(0.0), upper_at(0.5 * dt), upper_at(dt)];
        // the observer does not see the current input, only the delayed one
        let rhs = |zl: &[f64], stage: usize| -> Vec<f64> {
            let (ud, y, upper) = match stage {
                0 => (ud0, y_now, up[0]),
                1 => (udh, 0.5 * (y_now + y_next), up[1]),
                _ => (ud1, y_next, up[2]),
            };
            let innov: f64 = (0..n0).map(|i| (zl[i] + m.b[i] * ud) * m.trace[i]).sum::<f64>() + upper - y;
            (0..n0).map(|i| m.mu[i] * zl[i] + m.beta[i] * ud - m.l[i] * innov).collect()
        };
        let z = &self.zhat[..n0];
        let axpy = |x: &[f64], d: &[f64], s: f64| -> Vec<f64> { x.iter().zip(d).map(|(a, b)| a + s * b).collect() };
        let k1 = rhs(z, 0);
        let k2 = rhs(&axpy(z, &k1, 0.5 * dt), 1);
        let k3 = rhs(&axpy(z, &k2, 0.5 * dt), 1);
        let k4 = rhs(&axpy(z, &k3, dt), 2);
        let mut zn = vec![0.0; n];
        for i in 0..n0 {
            zn[i] = z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for i in n0..n {
            zn[i] = linear_input_step(m.mu[i], self.zhat[i], m.beta[i], ud0, slope, dt);
        }
        // φ is advanced exactly with u linear over the step, so it stays equal
        // to the windowed integral of the stored history. That makes φ affine
        // in u(t+dt), which is then solved for.
        let u0 = self.u;
        let mut a = vec![0.0; n0];
        let mut g = vec![0.0; n0];
        for i in 0..n0 {
            a[i] = linear_input_step(m.mu[i], self.phi[i], m.beta[i], u0, -u0 / dt, dt)
                - self.eh[i] * linear_input_step(m.mu[i], 0.0, m.beta[i], ud0, slope, dt);
            g[i] = linear_input_step(m.mu[i], 0.0, m.beta[i], 0.0, 1.0 / dt, dt);
        }
        let num: f64 = (0..n0).map(|i| m.k[i] * (self.eh[i] * zn[i] + a[i])).sum();
        let den = 1.0 - (0..n0).map(|i| m.k[i] * g[i]).sum::<f64>();
        let u1 = num / den;
        self.phi = (0..n0).map(|i| a[i] + g[i] * u1).collect();
        self.zhat = zn;
        self.t = t + dt;
        self.u = u1;
        self.since_sync += 1;
        let per_horizon = (h / dt).round() as usize;
        if per_horizon > 0 && self.since_sync >= per_horizon {
            self.since_sync = 0;
        }
        self.u_hist.push(self.t, self.u)?;
        if self.since_sync == 0 && h > 0.0 {
            self.resync_phi()?;
        }
        Ok(self.u)
    }

    /// Resets `φ` to the exact integral of the piecewise-linear history.
    /// With `A₀` unstable the φ-ODE amplifies rounding like `e^{A₀t}`, so this
    /// runs once per horizon.
    pub fn resync_phi(&mut self) -> Result<()> {
        let m = &self.model;
        let h = m.horizon;
        let steps = ((h / self.dt).round() as usize).max(1);
        let ds = h / steps as f64;
        let window = (0..=steps)
            .map(|j| self.u_hist.value_at(self.t - h + j as f64 * ds))
            .collect::<Result<Vec<f64>>>()?;
        for i in 0..m.n0 {
            self.phi[i] = m.beta[i] * exp_weighted_integral(m.mu[i], &window, ds);
        }
        Ok(())
    }

    /// `∫_{t-H}^t e^{A₀(t-s)}𝔅₀u(s)ds` by composite trapezoid on the
    /// history, compared with `φ(t)`. Relative to the size of the integral.
    pub fn artstein_quadrature_check(&self) -> Result<f64> {
        let m = &self.model;
        let h = m.horizon;
        let steps = ((h / self.dt).round() as usize).max(1);
        let ds = h / steps as f64;
        let mut quad = vec![0.0; m.n0];
        let mut umax = 0.0f64;
        for j in 0..=steps {
            let s = self.t - h + j as f64 * ds;
            let u = self.u_hist.value_at(s)?;
            umax = umax.max(u.abs());
            let w = if j == 0 || j == steps { 0.5 * ds } else { ds };
            for i in 0..m.n0 {
                quad[i] += w * (m.mu[i] * (self.t - s)).exp() * m.beta[i] * u;
            }
        }
        let diff = quad.iter().zip(&self.phi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = self
            .phi
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(umax * h * m.beta[..m.n0].iter().fold(0.0f64, |a, b| a.max(b.abs())));
        Ok(if scale > 0.0 { diff / scale } else { diff })
    }
}
