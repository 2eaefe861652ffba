//! Exact integrals of scalar linear ODEs over one step with a constant or
//! linearly varying input.

/// `∫_0^τ e^{μ(τ-s)} ds = (e^{μτ} - 1)/μ`, with the limit `τ` at `μ = 0`.
pub fn phi1(mu: f64, tau: f64) -> f64 {
    let z = mu * tau;
    if z.abs() < 1e-8 {
        tau * (1.0 + 0.5 * z)
    } else {
        z.exp_m1() / mu
    }
}

/// `∫_0^τ e^{μ(τ-s)} s ds = (e^{μτ} - 1 - μτ)/μ²`, with the limit `τ²/2`.
pub fn phi2(mu: f64, tau: f64) -> f64 {
    let z = mu * tau;
    if z.abs() < 1e-3 {
        tau * tau * (0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0)
    } else {
        (z.exp_m1() - z) / (mu * mu)
    }
}

/// Value after `tau` of `ẋ = μx + b·v(s)` where `v` moves linearly from `v0`
/// at `s = 0` with slope `dv` (per unit time).
pub fn linear_input_step(mu: f64, x: f64, b: f64, v0: f64, dv: f64, tau: f64) -> f64 {
    (mu * tau).exp() * x + b * (v0 * phi1(mu, tau) + dv * phi2(mu, tau))
}

/// `∫_0^τ e^{a r} r dr = (e^{aτ}(aτ - 1) + 1)/a²`.
fn ramp_moment(a: f64, tau: f64) -> f64 {
    let z = a * tau;
    if z.abs() < 1e-3 {
        tau * tau * (0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0)
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (a * a)
    }
}

/// `∫_{t0}^{t1} e^{a(t1-s)} v(s) ds` for a piecewise-linear `v` sampled on a
/// uniform grid of spacing `dt` ending at `t1` (`samples[k]` at
/// `t1 - (len-1-k)·dt`). Exact for piecewise-linear data.
pub fn exp_weighted_integral(a: f64, samples: &[f64], dt: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    let decay = (a * dt).exp();
    let mut factor = 1.0; // e^{a (t1 - s_{k+1})}
    // On a segment of length dt with local time r ∈ [0, dt] measured from its
    // right end backwards, v = v_right + (v_left - v_right) r/dt and the
    // weight is e^{a r}. ∫_0^dt e^{a r} dr = phi1(a, dt),
    // ∫_0^dt e^{a r} r dr = ramp_moment(a, dt).
    let i0 = phi1(a, dt);
    let i1 = ramp_moment(a, dt);
    for k in (0..n - 1).rev() {
        let vr = samples[k + 1];
        let vl = samples[k];
        acc += factor * (vr * i0 + (vl - vr) * i1 / dt);
        factor *= decay;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits_near_zero_rate() {
        assert!((phi1(0.0, 2.0) - 2.0).abs() < 1e-15);
        assert!((phi2(0.0, 2.0) - 2.0).abs() < 1e-15);
        assert!((phi1(1e-6, 1.0) - (1e-6f64).exp_m1() / 1e-6).abs() < 1e-12);
        let mu = 2e-3;
        assert!((phi2(mu, 1.0) - ((mu as f64).exp() - 1.0 - mu) / (mu * mu)).abs() < 1e-7);
    }

    #[test]
    fn linear_step_matches_closed_form() {
        // ẋ = -x + s, x(0) = 1  =>  x(t) = s - 1 + 2 e^{-t}
        let x = linear_input_step(-1.0, 1.0, 1.0, 0.0, 1.0, 0.7);
        assert!((x - (0.7 - 1.0 + 2.0 * (-0.7f64).exp())).abs() < 1e-14);
        // very stiff decay stays bounded
        let y = linear_input_step(-1e6, 1.0, 1.0, 2.0, 0.0, 1e-3);
        assert!((y - 2e-6).abs() < 1e-12);
    }

    #[test]
    fn weighted_integral_exact_for_linear_data() {
        let a = -3.0;
        let dt = 0.1;
        let n = 21; // s ∈ [0, 2], t1 = 2
        let samples: Vec<f64> = (0..n).map(|k| 1.0 + 0.5 * k as f64 * dt).collect();
        // ∫_0^2 e^{a(2-s)} (1 + s/2) ds, closed form via substitution r = 2 - s
        // = ∫_0^2 e^{a r} (2 - r/2) dr
        let r: f64 = 2.0;
        let e = (a * r).exp();
        let int_e = (e - 1.0) / a;
        let int_re = (e * (a * r - 1.0) + 1.0) / (a * a);
        let exact = 2.0 * int_e - 0.5 * int_re;
        assert!((exp_weighted_integral(a, &samples, dt) - exact).abs() < 1e-13);
        // stiff kernel: integral of a constant is (1 - e^{aT})/(-a)
        let v = vec![1.0; 11];
        assert!((exp_weighted_integral(-1e6, &v, 1e-3) - 1e-6).abs() < 1e-18);
    }
}
