#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use delay_stab::certification::{certify, CertificateReport, SearchConfig};
use delay_stab::expr::Expr;
use delay_stab::func::CoefFunction;
use delay_stab::spectral::{PlantArtifacts, PlantSpec, SpectralConfig};
use delay_stab::synthesis::{DesignParameters, GainSet, Variant};

pub const K: f64 = -1.6037;
pub const L_DIRICHLET: f64 = 4.0832;
pub const L_NEUMANN: f64 = 2.9666;
pub const Z0: &str = "5*x^2*(x-3/4)";
pub const Y0: &str = "3*cos(10*pi*(t+2))*sin(3*pi*t)";

pub fn reference_plant() -> PlantSpec {
    PlantSpec {
        p: CoefFunction::constant(1.0),
        q_tilde: CoefFunction::constant(-5.0),
        theta1: PI / 5.0,
        theta2: 0.0,
    }
}

/// Reference plant artifacts, built once per test binary.
pub fn art() -> &'static PlantArtifacts {
    static ART: OnceLock<PlantArtifacts> = OnceLock::new();
    ART.get_or_init(|| PlantArtifacts::build(reference_plant(), &SpectralConfig::default()).unwrap())
}

pub fn params(variant: Variant) -> DesignParameters {
    let (h_o, h_i) = match variant {
        Variant::JointDelay => (1.0, 1.0),
        _ => (2.0, 0.0),
    };
    DesignParameters { delta: 0.5, n0: 1, n: 2, variant, h_o, h_i }
}

pub fn gains(variant: Variant) -> GainSet {
    match variant {
        Variant::DirichletOut => GainSet { k: vec![K], l: vec![L_DIRICHLET] },
        Variant::NeumannOut => GainSet { k: vec![K], l: vec![L_NEUMANN] },
        Variant::JointDelay => joint_gains().clone(),
    }
}

/// Gains placed at the default poles for the joint-delay design.
pub fn joint_gains() -> &'static GainSet {
    static G: OnceLock<GainSet> = OnceLock::new();
    G.get_or_init(|| {
        use delay_stab::synthesis::{assemble_reduced, default_poles, place_gains};
        let p = params(Variant::JointDelay);
        let zero = GainSet { k: vec![0.0], l: vec![0.0] };
        let r = assemble_reduced(&art().basis, &art().coeffs, art().q_c(), &zero, &p).unwrap();
        let (c, o) = default_poles(p.delta, 1);
        place_gains(&r.a0, &r.b0, &r.c0, &c, &o, p.delta).unwrap()
    })
}

pub fn certificate(variant: Variant) -> &'static CertificateReport {
    static D: OnceLock<CertificateReport> = OnceLock::new();
    static N: OnceLock<CertificateReport> = OnceLock::new();
    static J: OnceLock<CertificateReport> = OnceLock::new();
    let cell = match variant {
        Variant::DirichletOut => &D,
        Variant::NeumannOut => &N,
        Variant::JointDelay => &J,
    };
    cell.get_or_init(|| {
        let mut cfg = SearchConfig::default();
        if variant == Variant::JointDelay {
            cfg.n_max = 20;
        }
        certify(art(), &gains(variant), &params(variant), &cfg).unwrap()
    })
}

pub fn z0() -> Expr {
    Expr::parse(Z0, &["x"]).unwrap()
}

pub fn y0() -> Expr {
    Expr::parse(Y0, &["t"]).unwrap()
}
