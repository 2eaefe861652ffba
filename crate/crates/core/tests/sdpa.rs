mod common;

use delay_stab::certification::*;
use delay_stab::sdpa::*;
use delay_stab::synthesis::{ReducedMatrices, Variant};
use nalgebra::{DMatrix, DVector};

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

fn toy() -> CertificateProblem {
    CertificateProblem {
        reduced: ReducedMatrices {
            variant: Variant::DirichletOut,
            n0: 1,
            n: 1,
            q_c: 0.0,
            lambda: vec![1.0],
            a0: vec![-2.0],
            a1: vec![],
            b0: vec![1.0],
            b1t: vec![],
            c0: vec![1.0],
            c1t: vec![],
            f: DMatrix::from_element(1, 1, -2.0),
            lcal: DVector::zeros(1),
            ktilde: DVector::zeros(1),
            e: DVector::zeros(2),
            delay_horizon: 1.0,
        },
        delta: 0.5,
        tail_a: 0.0,
        tail_b: 0.0,
        residue: ResidueBound::Dirichlet { m_phi: 0.0 },
        lambda_next: 10.0,
        q_c: 0.0,
        h_o: 1.0,
        h_i: 0.0,
    }
}

#[test]
fn scalar_toy_is_feasible_at_lyapunov_point() {
    let pb = toy();
    let sd = build_sdpa(&pb, 2.0).unwrap();
    assert_eq!(sd.n_blocks(), 2);
    // P = 1/(2(2 - δ)) solves the scalar Lyapunov equation
    let p = DMatrix::from_element(1, 1, 1.0 / 3.0);
    let blocks = sd.assemble(&certificate_vector(&p, 1.0, 1.0, None)).unwrap();
    for b in &blocks {
        assert!(min_eig(b) >= -1e-12, "{b}");
    }
    // negative P violates the P ⪰ μI block
    let blocks = sd.assemble(&certificate_vector(&(-p), 1.0, 1.0, None)).unwrap();
    assert!(min_eig(&blocks[1]) < 0.0);
}

#[test]
fn block_counts_per_variant() {
    let art = common::art();
    for (v, blocks, eps) in [
        (Variant::DirichletOut, 2, None),
        (Variant::NeumannOut, 3, Some(0.125)),
        (Variant::JointDelay, 4, None),
    ] {
        let pb = build_problem(art, &common::gains(v), &common::params(v).with_n(3), eps).unwrap();
        let sd = build_sdpa(&pb, 2.0).unwrap();
        assert_eq!(sd.n_blocks(), blocks, "{v:?}");
        let text = sd.to_text();
        assert!(text.starts_with("* delay-stab export\n"));
        let d = pb.reduced.f.nrows();
        let mut want = d * (d + 1) / 2 + 2;
        if v == Variant::JointDelay {
            want += 2;
        }
        assert_eq!(sd.n_vars, want);
        assert!(sd.objective.iter().all(|&c| c == 0.0));
    }
}

#[test]
fn export_round_trips_bit_exactly() {
    let art = common::art();
    let v = Variant::DirichletOut;
    let pb = build_problem(art, &common::gains(v), &common::params(v).with_n(3), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.dat-s");
    let written = export_sdpa(&pb, 2.0, &path).unwrap();
    let back = SdpaProblem::read(&path).unwrap();
    assert_eq!(back.n_vars, written.n_vars);
    assert_eq!(back.block_sizes, written.block_sizes);
    assert_eq!(back.entries.len(), written.entries.len());
    for (a, b) in back.entries.iter().zip(&written.entries) {
        assert_eq!((a.0, a.1, a.2, a.3), (b.0, b.1, b.2, b.3));
        assert_eq!(a.4.to_bits(), b.4.to_bits());
    }
}

#[test]
fn certificates_are_feasible_points_of_the_export() {
    for v in [Variant::DirichletOut, Variant::NeumannOut, Variant::JointDelay] {
        let r = common::certificate(v);
        assert!(r.is_certified());
        let sd = build_sdpa(&r.problem, r.alpha).unwrap();
        let q = r.q1.as_ref().map(|q1| (q1, r.q2.unwrap()));
        let blocks = sd.assemble(&certificate_vector(&r.p_matrix, r.beta, r.gamma, q)).unwrap();
        // block 1 is -Θ₁
        let (th, _) = theta1_for(r);
        assert!((&blocks[0] + &th).norm() <= 1e-10 * (1.0 + th.norm()), "{v:?}");
        for b in &blocks {
            let tol = 1e-9 * (1.0 + b.norm());
            assert!(min_eig(b) >= -tol, "{v:?}: {}", min_eig(b));
        }
    }
}

fn theta1_for(r: &CertificateReport) -> (DMatrix<f64>, f64) {
    let mult = match (&r.q1, r.q2) {
        (Some(q1), Some(q2)) => Multipliers::Joint { q1: q1.clone(), q2 },
        _ => Multipliers::Single { alpha: r.alpha, gamma: r.gamma },
    };
    let th = theta1_matrix(&r.problem, &r.p_matrix, r.beta, &mult).unwrap();
    let m = th.clone().symmetric_eigen().eigenvalues.max();
    (th, m)
}
