//! End-to-end acceptance checks on the reference plant. Runs without the
//! libtest harness so that every criterion prints one PASS/FAIL line.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use delay_stab::certification::{evaluate_r, CertificateReport, Status};
use delay_stab::controller::{init_controller, ControllerModel, PreHistory};
use delay_stab::expr::Expr;
use delay_stab::func::CoefFunction;
use delay_stab::numerics::expint::linear_input_step;
use delay_stab::sdpa::{build_sdpa, SdpaProblem};
use delay_stab::simulation::*;
use delay_stab::spectral::*;
use delay_stab::synthesis::Variant;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Certification wall time per variant, measured once before the criteria
/// run in parallel.
fn timed_certificate(v: Variant) -> (&'static CertificateReport, Duration) {
    static TIMES: OnceLock<[Duration; 3]> = OnceLock::new();
    let times = TIMES.get_or_init(|| {
        [Variant::DirichletOut, Variant::NeumannOut, Variant::JointDelay].map(|v| {
            let t0 = Instant::now();
            common::certificate(v);
            t0.elapsed()
        })
    });
    let i = match v {
        Variant::DirichletOut => 0,
        Variant::NeumannOut => 1,
        Variant::JointDelay => 2,
    };
    (common::certificate(v), times[i])
}

fn scenario(v: Variant, cert: &'static CertificateReport) -> Scenario<'static> {
    let p = common::params(v).with_n(cert.n);
    let mut sc = Scenario::new(common::art(), p, common::gains(v), common::z0(), common::y0());
    sc.certificate = Some(cert);
    sc
}

/// Certified Dirichlet closed loop over 15 s, shared by several criteria.
fn dirichlet_trace() -> &'static SimulationTrace {
    static T: OnceLock<SimulationTrace> = OnceLock::new();
    T.get_or_init(|| {
        let cert = common::certificate(Variant::DirichletOut);
        let mut sc = scenario(Variant::DirichletOut, cert);
        sc.keep_profiles = true;
        run_closed_loop(&sc).expect("closed-loop run")
    })
}

fn c1_dirichlet_certification() -> Outcome {
    let (r, dt) = timed_certificate(Variant::DirichletOut);
    let n0 = common::params(Variant::DirichletOut).n0;
    check(
        r.status == Status::Certified && r.n > n0 && r.n <= 8 && dt.as_secs_f64() <= 60.0,
        format!("N = {} (N0 = {n0}), alpha = {}, {:.1} s", r.n, r.alpha, dt.as_secs_f64()),
    )
}

fn c2_neumann_certification() -> Outcome {
    let (r, dt) = timed_certificate(Variant::NeumannOut);
    check(
        r.status == Status::Certified && r.n <= 25 && dt.as_secs_f64() <= 300.0,
        format!("N = {}, eps = {:?}, {:.2} s", r.n, r.eps, dt.as_secs_f64()),
    )
}

fn c3_closed_loop_decay() -> Outcome {
    let tr = dirichlet_trace();
    let t = tr.times();
    let h = tr.h_o;
    let h1 = fit_decay_rate(&t, &tr.h1(), h).map_err(|e| e.to_string())?;
    let er = fit_decay_rate(&t, &tr.max_error(), h).map_err(|e| e.to_string())?;
    check(
        h1.rate >= 0.45 && er.rate >= 0.45,
        format!("H1 rate {:.4}, observer error rate {:.4}", h1.rate, er.rate),
    )
}

fn c4_open_loop_instability() -> Outcome {
    let art = common::art();
    let mut sc = Scenario::new(
        art,
        common::params(Variant::DirichletOut),
        common::gains(Variant::DirichletOut),
        common::z0(),
        common::y0(),
    );
    sc.control = ControlMode::Open;
    let tr = run_closed_loop(&sc).map_err(|e| e.to_string())?;
    let t = tr.times();
    let l2 = tr.l2();
    let at = |s: f64| l2[t.iter().position(|&x| (x - s).abs() < 1e-9).unwrap()];
    let growth = at(10.0) / at(0.0);
    let fit = fit_decay_rate(&t, &l2, 2.0).map_err(|e| e.to_string())?;
    let want = art.q_c() - art.basis.lambda(1);
    let rel = (-fit.rate - want).abs() / want;
    check(
        growth >= 5.0 && rel <= 0.05,
        format!("growth x{growth:.2} over 10 s, rate {:.5} vs {want:.5} ({:.2e} rel)", -fit.rate, rel),
    )
}

fn c5_spectral_suite() -> Outcome {
    let mut worst_closed = 0.0f64;
    for (th1, th2, k) in [
        (0.0, 0.0, (|n: f64| n * PI) as fn(f64) -> f64),
        (FRAC_PI_2, 0.0, |n: f64| (n - 0.5) * PI),
        (FRAC_PI_2, FRAC_PI_2, |n: f64| (n - 1.0) * PI),
    ] {
        let plant = PlantSpec {
            p: CoefFunction::constant(1.0),
            q_tilde: CoefFunction::constant(1.0),
            theta1: th1,
            theta2: th2,
        };
        let g = Grid::uniform(801);
        let split = split_reaction(&plant.q_tilde, &g, 0.0);
        let basis = solve_eigen(&plant, &split, 5, 801).map_err(|e| e.to_string())?;
        for m in &basis.modes {
            let want = 1.0 + split.q_c + k(m.n as f64).powi(2);
            worst_closed = worst_closed.max((m.lambda - want).abs() / want);
        }
    }
    let mut worst_dual = 0.0f64;
    let mut tails_ok = true;
    let plants = [
        (CoefFunction::constant(1.0), CoefFunction::constant(1.0), 0.4, 0.3),
        (CoefFunction::Poly(vec![1.0, 0.5, 0.25]), CoefFunction::Poly(vec![-2.0, 3.0]), PI / 3.0, PI / 7.0),
        (CoefFunction::constant(1.0), CoefFunction::constant(-5.0), PI / 5.0, 0.0),
    ];
    for (p, q_tilde, theta1, theta2) in plants {
        let art = PlantArtifacts::build(PlantSpec { p, q_tilde, theta1, theta2 }, &SpectralConfig::default())
            .map_err(|e| e.to_string())?;
        worst_dual = art.coeffs.input.discrepancy[..20].iter().fold(worst_dual, |a, &b| a.max(b));
        for n in 1..art.basis.len() {
            let (ta, tb) = art.coeffs.tail_norms(n);
            tails_ok &= ta >= 0.0 && tb >= 0.0;
        }
    }
    check(
        worst_closed <= 1e-6 && worst_dual <= 1e-6 && tails_ok,
        format!("closed forms {worst_closed:.2e}, dual beta {worst_dual:.2e}, tails nonnegative {tails_ok}"),
    )
}

fn c6_certificate_integrity() -> Outcome {
    let mut worst_res = 0.0f64;
    let mut revalidated = true;
    for v in [Variant::DirichletOut, Variant::NeumannOut, Variant::JointDelay] {
        let r = common::certificate(v);
        worst_res = worst_res.max(r.lyap_residual);
        revalidated &= r.revalidate().map(|x| x.status == Status::Certified).unwrap_or(false);
    }
    let pb = &common::certificate(Variant::JointDelay).problem;
    let mut worst_r = 0.0f64;
    for (alpha, gamma) in [(1.5, 1e-3), (2.0, 0.5), (8.0, 3.0)] {
        let (q1, q2) = pb.default_q(alpha, gamma);
        let (r1, r2) = evaluate_r(pb, alpha, gamma, &q1, q2);
        worst_r = worst_r.max(r1.abs().max(r2.abs()) / (q1.norm() + q2.abs()).max(1.0));
    }
    let cert = common::certificate(Variant::DirichletOut);
    let sd = build_sdpa(&cert.problem, cert.alpha).map_err(|e| e.to_string())?;
    let back = SdpaProblem::parse(&sd.to_text()).map_err(|e| e.to_string())?;
    let exact = back.entries.len() == sd.entries.len()
        && back.entries.iter().zip(&sd.entries).all(|(a, b)| {
            (a.0, a.1, a.2, a.3) == (b.0, b.1, b.2, b.3) && a.4.to_bits() == b.4.to_bits()
        });
    check(
        worst_res <= 1e-8 && revalidated && worst_r <= 1e-12 && exact,
        format!("residual {worst_res:.2e}, revalidated {revalidated}, R {worst_r:.2e}, SDPA bit-exact {exact}"),
    )
}

fn c7_lyapunov_monotone() -> Outcome {
    let tr = dirichlet_trace();
    let ly = tr.lyapunov.as_ref().ok_or("no Lyapunov series")?;
    let (h, delta) = (tr.h_o, tr.delta);
    let w: Vec<(f64, f64)> = ly
        .t
        .iter()
        .zip(&ly.v)
        .filter(|(t, _)| **t >= h - 1e-12)
        .map(|(t, v)| (*t, (2.0 * delta * (t - h)).exp() * v))
        .collect();
    let mut running = f64::INFINITY;
    let mut worst = 0.0f64;
    for (_, x) in &w {
        if running.is_finite() {
            worst = worst.max((x - running) / running);
        }
        running = running.min(*x);
    }
    check(
        worst <= 1e-3 && w.len() > 100,
        format!("max relative increase {worst:.2e} over {} samples", w.len()),
    )
}

fn c8_predictor() -> Outcome {
    let tr = dirichlet_trace();
    let quad = tr.records.iter().map(|r| r.artstein_discrepancy).fold(0.0, f64::max);

    // L = 0 on the N₀-mode reduced plant: Ẑ_A must follow ż = A₀z + B₀u
    let art = common::art();
    let v = Variant::DirichletOut;
    let mut gains = common::gains(v);
    gains.l = vec![0.0];
    let mut model = ControllerModel::new(&art.basis, &art.coeffs, art.q_c(), &gains, &common::params(v).with_n(2))
        .map_err(|e| e.to_string())?;
    model.pre_history = PreHistory::HoldInitial;
    let dt = 1e-3;
    let mut st = init_controller(model, 1.25, dt).map_err(|e| e.to_string())?;
    let (mu, beta) = (st.model.mu[0], st.model.beta[0]);
    let mut za = vec![st.predictor()[0]];
    let mut us = vec![st.u];
    for _ in 0..6000 {
        st.step(0.0, 0.0).map_err(|e| e.to_string())?;
        za.push(st.predictor()[0]);
        us.push(st.u);
    }
    let lag = (1.0 / dt).round() as usize;
    let scale = za.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut worst = 0.0f64;
    for j0 in (0..za.len() - lag).step_by(250) {
        let mut x = za[j0];
        for j in j0..j0 + lag {
            x = linear_input_step(mu, x, beta, us[j], (us[j + 1] - us[j]) / dt, dt);
        }
        worst = worst.max((x - za[j0 + lag]).abs() / scale);
    }
    check(
        quad <= 1e-4 && worst <= 1e-5,
        format!("quadrature discrepancy {quad:.2e}, delay-free drift {worst:.2e} per unit time"),
    )
}

fn c9_modal_vs_fd() -> Outcome {
    let modal = dirichlet_trace();
    let cert = common::certificate(Variant::DirichletOut);
    let mut sc = scenario(Variant::DirichletOut, cert);
    sc.certificate = None;
    sc.plant_kind = PlantKind::FiniteDifference;
    sc.keep_profiles = true;
    let fd = run_closed_loop(&sc).map_err(|e| e.to_string())?;
    let (pm, pf) = (modal.profiles.as_ref().unwrap(), fd.profiles.as_ref().unwrap());
    let dx = common::art().basis.grid.dx;
    let mut worst = 0.0f64;
    let mut at = 0.0;
    for ((a, b), r) in pm.iter().zip(pf).zip(&modal.records) {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let rel = l2_norm(&diff, dx) / l2_norm(a, dx);
        if rel > worst {
            worst = rel;
            at = r.t;
        }
    }
    check(
        worst <= 1e-2 && pm.len() == pf.len(),
        format!("worst relative L2 difference {worst:.2e} at t = {at}"),
    )
}

fn c10_joint_delay() -> Outcome {
    let r = common::certificate(Variant::JointDelay);
    if !r.is_certified() {
        return Err(format!("not certified up to N = 20: {:?}", r.notes));
    }
    let mut sc = scenario(Variant::JointDelay, r);
    sc.z0 = Expr::parse("5*x^2*(1-x)", &["x"]).unwrap();
    sc.y0 = Expr::parse("0", &["t"]).unwrap();
    let tr = run_closed_loop(&sc).map_err(|e| e.to_string())?;
    let p = common::params(Variant::JointDelay);
    let fit = fit_decay_rate(&tr.times(), &tr.h1(), p.h_o + p.h_i).map_err(|e| e.to_string())?;
    check(r.n <= 20 && fit.rate >= 0.45, format!("N = {}, H1 rate {:.4}", r.n, fit.rate))
}

fn c11_p_bounded() -> Outcome {
    let art = common::art();
    let v = Variant::DirichletOut;
    let p = common::params(v);
    let table = delay_stab::certification::p_boundedness_study(art, &common::gains(v), &p, p.n0 + 1..=20)
        .map_err(|e| e.to_string())?;
    let max = table.iter().map(|t| t.1).fold(0.0, f64::max);
    let min = table.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    check(max / min < 10.0, format!("||P|| in [{min:.4}, {max:.4}], ratio {:.3}", max / min))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 Dirichlet certification", c1_dirichlet_certification),
        ("2 Neumann certification", c2_neumann_certification),
        ("3 closed-loop decay", c3_closed_loop_decay),
        ("4 open-loop instability", c4_open_loop_instability),
        ("5 spectral oracles", c5_spectral_suite),
        ("6 certificate integrity", c6_certificate_integrity),
        ("7 Lyapunov monotonicity", c7_lyapunov_monotone),
        ("8 predictor correctness", c8_predictor),
        ("9 modal vs finite differences", c9_modal_vs_fd),
        ("10 joint delay", c10_joint_delay),
        ("11 bounded P", c11_p_bounded),
    ];
    timed_certificate(Variant::DirichletOut);
    let results: Vec<(&str, Outcome)> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|(name, f)| (*name, s.spawn(f)))
            .collect();
        handles
            .into_iter()
            .map(|(name, h)| (name, h.join().unwrap_or_else(|_| Err("panicked".into()))))
            .collect()
    });
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("criterion {name}: PASS ({d})"),
            Err(d) => {
                failed += 1;
                println!("criterion {name}: FAIL ({d})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
