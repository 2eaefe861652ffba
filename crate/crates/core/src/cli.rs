//! Command dispatch for the `delay-stab` binary.
//!
//! Every command writes under the output directory with fixed file names:
//! `design.json`, `certificate.txt`/`certificate.json`, `trace.csv`
//! (+ `profiles.csv`), `sweep.csv`, `problem.dat-s`, `reproduce.txt`.
//! Exit status is 0 on success, 2 when certification is infeasible, 1 on
//! any error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::certification::{build_problem, certify, CertificateReport, SearchConfig, SeedGrid, Status};
use crate::config::{parse_config, DesignSettings, RunConfig, SimulationSettings, SweepParameter};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::func::CoefFunction;
use crate::sdpa::export_sdpa;
use crate::simulation::{fit_decay_rate, run_closed_loop, ControlMode, PlantKind, Scenario, SimulationTrace};
use crate::spectral::{PlantArtifacts, PlantSpec, SpectralConfig};
use crate::synthesis::{
    assemble_reduced, default_poles, place_gains, select_n0, validate_gains, DesignParameters, GainSet, ReducedMatrices,
    Variant,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

/// Environment variable bounding the worker threads.
pub const THREADS_ENV: &str = "DELAY_STAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "delay-stab", version, about = "Predictor-observer boundary control with delayed measurement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Configuration file (TOML).
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Density of the beta/gamma search grids.
    #[arg(long, value_parser = parse_seed_grid)]
    pub seed_grid: Option<SeedGrid>,
    /// Largest observer order tried by certification.
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ReproduceArgs {
    /// Optional configuration; only its `[output]` and `[certification]`
    /// blocks are used.
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_seed_grid)]
    pub seed_grid: Option<SeedGrid>,
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Place (or validate) gains and write the reduced model.
    Design(CommonArgs),
    /// Search for a stability certificate.
    Certify(CommonArgs),
    /// Closed-loop (or open-loop) simulation.
    Simulate(CommonArgs),
    /// Smallest certified order against one swept parameter.
    Sweep(CommonArgs),
    /// Write the matrix inequalities in SDPA sparse format.
    ExportLmi(CommonArgs),
    /// Run the reference Dirichlet and Neumann scenarios end to end.
    ReproducePaper(ReproduceArgs),
}

fn parse_seed_grid(s: &str) -> std::result::Result<SeedGrid, String> {
    match s.to_ascii_uppercase().as_str() {
        "COARSE" => Ok(SeedGrid::Coarse),
        "FINE" => Ok(SeedGrid::Fine),
        _ => Err(format!("expected COARSE or FINE, got {s}")),
    }
}

/// Parses `args` and runs the command; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::Infeasible) => EXIT_INFEASIBLE,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Applies `DELAY_STAB_THREADS` to the global pool; ignored if unset or
/// the pool already exists.
pub fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Infeasible,
}

pub fn dispatch(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Design(a) => cmd_design(&load(a)?, &out_dir(a)?),
        Command::Certify(a) => cmd_certify(&load(a)?, &out_dir(a)?),
        Command::Simulate(a) => cmd_simulate(&load(a)?, &out_dir(a)?),
        Command::Sweep(a) => cmd_sweep(&load(a)?, &out_dir(a)?),
        Command::ExportLmi(a) => cmd_export_lmi(&load(a)?, &out_dir(a)?),
        Command::ReproducePaper(a) => {
            let cfg = match &a.config {
                Some(p) => Some(parse_config(p)?),
                None => None,
            };
            let mut search = cfg.as_ref().and_then(|c| c.search.clone()).unwrap_or_default();
            apply_overrides(&mut search, a.seed_grid, a.n_max);
            let dir = a
                .out
                .clone()
                .or_else(|| cfg.as_ref().map(|c| c.output.dir.clone()))
                .unwrap_or_else(|| PathBuf::from("out"));
            cmd_reproduce_paper(&search, &dir)
        }
    }
}

fn apply_overrides(s: &mut SearchConfig, grid: Option<SeedGrid>, n_max: Option<usize>) {
    if let Some(g) = grid {
        *s = s.clone().with_seed_grid(g);
    }
    if let Some(n) = n_max {
        s.n_max = n;
    }
}

fn load(a: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = parse_config(&a.config)?;
    if let Some(s) = cfg.search.as_mut() {
        apply_overrides(s, a.seed_grid, a.n_max);
    } else if a.seed_grid.is_some() || a.n_max.is_some() {
        let mut s = SearchConfig::default();
        apply_overrides(&mut s, a.seed_grid, a.n_max);
        cfg.search = Some(s);
    }
    if let Some(o) = &a.out {
        cfg.output.dir = o.clone();
    }
    Ok(cfg)
}

fn out_dir(a: &CommonArgs) -> Result<PathBuf> {
    Ok(a.out.clone().unwrap_or_else(|| {
        parse_config(&a.config)
            .map(|c| c.output.dir)
            .unwrap_or_else(|_| PathBuf::from("out"))
    }))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io("io_cli::write_outputs", dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io("io_cli::write_outputs", path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

/// Everything that follows from the plant and design blocks.
#[derive(Debug, Clone)]
pub struct Design {
    pub art: PlantArtifacts,
    pub params: DesignParameters,
    pub gains: GainSet,
    /// `Some` when the gains were placed rather than supplied.
    pub poles: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Serialize)]
struct DesignFile<'a> {
    variant: Variant,
    delta: f64,
    h_o: f64,
    h_i: f64,
    n0: usize,
    n: usize,
    q_c: f64,
    lambda: Vec<f64>,
    gains: &'a GainSet,
    placed_poles: &'a Option<(Vec<f64>, Vec<f64>)>,
    reduced: &'a ReducedMatrices,
}

pub fn build_design(plant: &PlantSpec, spectral: &SpectralConfig, d: &DesignSettings) -> Result<Design> {
    let art = PlantArtifacts::build(plant.clone(), spectral)?;
    design_on(art, d)
}

/// Gains for given artifacts: supplied ones are validated, otherwise placed.
pub fn design_on(art: PlantArtifacts, d: &DesignSettings) -> Result<Design> {
    let lambdas = art.basis.lambdas();
    let n0 = match d.n0 {
        Some(n0) => n0,
        None => select_n0(&lambdas, art.q_c(), d.delta)?,
    };
    let n = d.n.unwrap_or(n0 + 1);
    let params = DesignParameters {
        delta: d.delta,
        n0,
        n,
        variant: d.variant,
        h_o: d.h_o,
        h_i: d.h_i,
    };
    let probe = assemble_reduced(
        &art.basis,
        &art.coeffs,
        art.q_c(),
        &GainSet {
            k: vec![0.0; n0],
            l: vec![0.0; n0],
        },
        &params,
    )?;
    let (gains, poles) = match &d.gains {
        Some((k, l)) => {
            let g = GainSet { k: k.clone(), l: l.clone() };
            validate_gains(&probe.a0, &probe.b0, &probe.c0, &g, d.delta)?;
            (g, None)
        }
        None => {
            let (dc, dob) = default_poles(d.delta, n0);
            let ctrl = d.ctrl_poles.clone().unwrap_or(dc);
            let obs = d.obs_poles.clone().unwrap_or(dob);
            let g = place_gains(&probe.a0, &probe.b0, &probe.c0, &ctrl, &obs, d.delta)?;
            (g, Some((ctrl, obs)))
        }
    };
    Ok(Design {
        art,
        params,
        gains,
        poles,
    })
}

pub fn cmd_design(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let d = build_design(&cfg.plant, &cfg.spectral, &cfg.design)?;
    let reduced = assemble_reduced(&d.art.basis, &d.art.coeffs, d.art.q_c(), &d.gains, &d.params)?;
    let file = DesignFile {
        variant: d.params.variant,
        delta: d.params.delta,
        h_o: d.params.h_o,
        h_i: d.params.h_i,
        n0: d.params.n0,
        n: d.params.n,
        q_c: d.art.q_c(),
        lambda: d.art.basis.lambdas()[..d.params.n].to_vec(),
        gains: &d.gains,
        placed_poles: &d.poles,
        reduced: &reduced,
    };
    ensure_dir(dir)?;
    write(&dir.join("design.json"), &to_json(&file))?;
    println!(
        "N0 = {}  K = {:?}  L = {:?}  -> {}",
        d.params.n0,
        d.gains.k,
        d.gains.l,
        dir.join("design.json").display()
    );
    Ok(Outcome::Done)
}

fn write_report(dir: &Path, stem: &str, r: &CertificateReport) -> Result<()> {
    write(&dir.join(format!("{stem}.txt")), &r.to_text())?;
    write(&dir.join(format!("{stem}.json")), &to_json(r))
}

pub fn cmd_certify(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    cfg.require("certify", true, false, false)?;
    let d = build_design(&cfg.plant, &cfg.spectral, &cfg.design)?;
    let search = cfg.search.as_ref().expect("checked by require");
    let r = certify(&d.art, &d.gains, &d.params, search)?;
    ensure_dir(dir)?;
    write_report(dir, "certificate", &r)?;
    print!("{}", r.to_text());
    Ok(if r.is_certified() { Outcome::Done } else { Outcome::Infeasible })
}

/// Builds the scenario from the simulation block and runs it.
pub fn simulate_design(
    d: &Design,
    sim: &SimulationSettings,
    cert: Option<&CertificateReport>,
    record_stride: usize,
    profiles: bool,
) -> Result<SimulationTrace> {
    let params = match cert {
        Some(c) if c.is_certified() => d.params.with_n(c.n),
        _ => d.params,
    };
    let mut sc = Scenario::new(&d.art, params, d.gains.clone(), sim.z0.clone(), sim.y0.clone());
    sc.certificate = cert.filter(|c| c.is_certified());
    sc.t_final = sim.t_final;
    sc.dt = sim.dt;
    sc.record_stride = record_stride;
    sc.plant_kind = sim.plant_kind;
    sc.sim_modes = sim.modes;
    sc.control = sim.control;
    sc.keep_profiles = profiles;
    sc.lipschitz_max = sim.lipschitz_max;
    run_closed_loop(&sc)
}

fn decay_summary(tr: &SimulationTrace, t_start: f64) -> String {
    let t = tr.times();
    let h1 = fit_decay_rate(&t, &tr.h1(), t_start)
        .map(|f| format!("{:.4}", f.rate))
        .unwrap_or_else(|e| format!("n/a ({e})"));
    let e = fit_decay_rate(&t, &tr.max_error(), t_start)
        .map(|f| format!("{:.4}", f.rate))
        .unwrap_or_else(|e| format!("n/a ({e})"));
    format!("H1 decay rate {h1}, observer error decay rate {e} (fitted from t = {t_start})")
}

pub fn cmd_simulate(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    cfg.require("simulate", false, true, false)?;
    let sim = cfg.simulation.as_ref().expect("checked by require");
    let d = build_design(&cfg.plant, &cfg.spectral, &cfg.design)?;
    let cert = match (&cfg.search, sim.control) {
        (Some(s), ControlMode::Closed) => Some(certify(&d.art, &d.gains, &d.params, s)?),
        _ => None,
    };
    let tr = simulate_design(&d, sim, cert.as_ref(), cfg.output.record_stride, cfg.output.profiles)?;
    ensure_dir(dir)?;
    tr.write_csv(&dir.join("trace.csv"))?;
    if let Some(p) = tr.profiles_csv() {
        write(&dir.join("profiles.csv"), &p)?;
    }
    println!("{}", decay_summary(&tr, d.params.h_o.max(d.params.horizon())));
    if let Some(ly) = &tr.lyapunov {
        println!("Lyapunov functional max relative increase {:.3e}", ly.max_relative_increase);
    }
    for n in &tr.notes {
        println!("note: {n}");
    }
    Ok(match cert {
        Some(c) if !c.is_certified() => Outcome::Infeasible,
        _ => Outcome::Done,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub status: String,
    pub n_min: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

pub fn sweep_rows(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.require("sweep", true, false, true)?;
    let sw = cfg.sweep.as_ref().expect("checked by require");
    let search = cfg.search.as_ref().expect("checked by require");
    let art = PlantArtifacts::build(cfg.plant.clone(), &cfg.spectral)?;
    let rows = sw
        .values
        .par_iter()
        .map(|&v| {
            let mut ds = cfg.design.clone();
            match sw.parameter {
                SweepParameter::Delta => ds.delta = v,
                SweepParameter::HO => ds.h_o = v,
                SweepParameter::HI => ds.h_i = v,
            }
            let res = design_on(art.clone(), &ds).and_then(|d| certify(&d.art, &d.gains, &d.params, search));
            match res {
                Ok(r) => SweepRow {
                    value: v,
                    status: if r.is_certified() { "certified".into() } else { "infeasible".into() },
                    n_min: r.is_certified().then_some(r.n),
                    alpha: r.alpha,
                    beta: r.beta,
                    gamma: r.gamma,
                },
                Err(e) => SweepRow {
                    value: v,
                    status: format!("error: {e}").replace(',', ";"),
                    n_min: None,
                    alpha: f64::NAN,
                    beta: f64::NAN,
                    gamma: f64::NAN,
                },
            }
        })
        .collect();
    Ok(rows)
}

pub fn sweep_csv(parameter: SweepParameter, rows: &[SweepRow]) -> String {
    let mut s = format!("{},status,n_min,alpha,beta,gamma\n", parameter.name());
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.value,
            r.status,
            r.n_min.map(|n| n.to_string()).unwrap_or_default(),
            r.alpha,
            r.beta,
            r.gamma
        ));
    }
    s
}

pub fn cmd_sweep(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let rows = sweep_rows(cfg)?;
    let csv = sweep_csv(cfg.sweep.as_ref().expect("checked").parameter, &rows);
    ensure_dir(dir)?;
    write(&dir.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(Outcome::Done)
}

pub fn cmd_export_lmi(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    cfg.require("export-lmi", true, false, false)?;
    let search = cfg.search.as_ref().expect("checked by require");
    let d = build_design(&cfg.plant, &cfg.spectral, &cfg.design)?;
    let eps = match d.params.variant {
        Variant::NeumannOut => search.eps_values.first().copied(),
        _ => None,
    };
    let problem = build_problem(&d.art, &d.gains, &d.params, eps)?;
    ensure_dir(dir)?;
    let path = dir.join("problem.dat-s");
    let sd = export_sdpa(&problem, cfg.export_alpha, &path)?;
    println!(
        "N = {}, alpha = {}: {} variables, {} blocks -> {}",
        d.params.n,
        cfg.export_alpha,
        sd.n_vars,
        sd.n_blocks(),
        path.display()
    );
    Ok(Outcome::Done)
}

/// Reference plant `p = 1`, `q̃ = -5`, `θ₁ = π/5`, `θ₂ = 0`.
pub fn reference_plant() -> PlantSpec {
    PlantSpec {
        p: CoefFunction::constant(1.0),
        q_tilde: CoefFunction::constant(-5.0),
        theta1: std::f64::consts::PI / 5.0,
        theta2: 0.0,
    }
}

pub const REFERENCE_K: f64 = -1.6037;
pub const REFERENCE_L_DIRICHLET: f64 = 4.0832;
pub const REFERENCE_L_NEUMANN: f64 = 2.9666;
pub const REFERENCE_Z0: &str = "5*x^2*(x-3/4)";
pub const REFERENCE_Y0: &str = "3*cos(10*pi*(t+2))*sin(3*pi*t)";

/// Design settings of the reference scenarios (`δ = 0.5`, `h = 2`).
pub fn reference_design(variant: Variant) -> DesignSettings {
    let l = match variant {
        Variant::NeumannOut => REFERENCE_L_NEUMANN,
        _ => REFERENCE_L_DIRICHLET,
    };
    DesignSettings {
        variant,
        delta: 0.5,
        n0: None,
        n: None,
        h_o: 2.0,
        h_i: 0.0,
        ctrl_poles: None,
        obs_poles: None,
        gains: Some((vec![REFERENCE_K], vec![l])),
    }
}

pub fn reference_simulation() -> SimulationSettings {
    SimulationSettings {
        z0: Expr::parse(REFERENCE_Z0, &["x"]).expect("valid expression"),
        y0: Expr::parse(REFERENCE_Y0, &["t"]).expect("valid expression"),
        t_final: 15.0,
        dt: 1e-3,
        plant_kind: PlantKind::Modal,
        modes: 60,
        control: ControlMode::Closed,
        lipschitz_max: 1e4,
    }
}

pub fn cmd_reproduce_paper(search: &SearchConfig, dir: &Path) -> Result<Outcome> {
    let art = PlantArtifacts::build(reference_plant(), &SpectralConfig::default())?;
    let sim = reference_simulation();
    ensure_dir(dir)?;
    let mut summary = String::from("scenario,reference_N,certified_N,status,alpha,beta,gamma,h1_rate,error_rate\n");
    let mut all = true;
    for (variant, stem, reference_n) in [
        (Variant::DirichletOut, "dirichlet", 3usize),
        (Variant::NeumannOut, "neumann", 15usize),
    ] {
        let d = design_on(art.clone(), &reference_design(variant))?;
        let r = certify(&d.art, &d.gains, &d.params, search)?;
        write_report(dir, &format!("certificate_{stem}"), &r)?;
        let tr = simulate_design(&d, &sim, Some(&r), 10, false)?;
        tr.write_csv(&dir.join(format!("trace_{stem}.csv")))?;
        let t = tr.times();
        let h1 = fit_decay_rate(&t, &tr.h1(), d.params.h_o).map(|f| f.rate).unwrap_or(f64::NAN);
        let er = fit_decay_rate(&t, &tr.max_error(), d.params.h_o).map(|f| f.rate).unwrap_or(f64::NAN);
        all &= r.status == Status::Certified;
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{:.4},{:.4}\n",
            variant.name(),
            reference_n,
            if r.is_certified() { r.n.to_string() } else { String::new() },
            if r.is_certified() { "certified" } else { "infeasible" },
            r.alpha,
            r.beta,
            r.gamma,
            h1,
            er
        ));
    }
    write(&dir.join("reproduce.csv"), &summary)?;
    print!("{summary}");
    Ok(if all { Outcome::Done } else { Outcome::Infeasible })
}
