//! Run configuration: a sectioned TOML file with `[plant]`, `[design]`,
//! `[certification]`, `[simulation]`, `[output]` and `[sweep]` blocks.
//!
//! Units are seconds for delays and times, radians for the boundary angles.
//! Scalar values may be numbers or constant expressions such as `"pi/5"`.
//! Unknown keys are rejected and validation reports every violation at once.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::certification::{SearchConfig, SeedGrid};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::func::CoefFunction;
use crate::simulation::{ControlMode, PlantKind};
use crate::spectral::{Grid, PlantSpec, SpectralConfig};
use crate::synthesis::Variant;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    fn resolve(&self, key: &str, errs: &mut Vec<String>) -> f64 {
        match self {
            Scalar::Number(v) => *v,
            Scalar::Text(s) => Expr::parse_const(s).unwrap_or_else(|e| {
                errs.push(format!("{key}: {e}"));
                f64::NAN
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionBlock {
    pub poly: Option<Vec<f64>>,
    pub table: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantBlock {
    pub p: FunctionBlock,
    pub q_tilde: FunctionBlock,
    pub theta1: Scalar,
    pub theta2: Scalar,
    pub grid_size: Option<usize>,
    pub m_modes: Option<usize>,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolesBlock {
    pub ctrl: Option<Vec<f64>>,
    pub obs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsBlock {
    pub k: Vec<f64>,
    pub l: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBlock {
    pub variant: Variant,
    pub delta: f64,
    pub n0: Option<usize>,
    pub n: Option<usize>,
    #[serde(default)]
    pub h_o: f64,
    #[serde(default)]
    pub h_i: f64,
    pub poles: Option<PolesBlock>,
    pub gains: Option<GainsBlock>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificationBlock {
    pub n_max: Option<usize>,
    pub seed_grid: Option<SeedGrid>,
    pub alphas: Option<Vec<f64>>,
    pub eps_values: Option<Vec<f64>>,
    pub p_scales: Option<Vec<f64>>,
    pub decades: Option<usize>,
    pub psd_tol: Option<f64>,
    /// `α` used by `export-lmi`.
    pub export_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub z0: String,
    pub y0: String,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub plant_kind: Option<PlantKind>,
    pub modes: Option<usize>,
    pub control: Option<ControlMode>,
    pub lipschitz_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    pub record_stride: Option<usize>,
    #[serde(default)]
    pub profiles: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Delta,
    HO,
    HI,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Delta => "delta",
            SweepParameter::HO => "h_o",
            SweepParameter::HI => "h_i",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Raw file contents.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub plant: Option<PlantBlock>,
    pub design: Option<DesignBlock>,
    pub certification: Option<CertificationBlock>,
    pub simulation: Option<SimulationBlock>,
    pub output: Option<OutputBlock>,
    pub sweep: Option<SweepBlock>,
}

/// Resolved design settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSettings {
    pub variant: Variant,
    pub delta: f64,
    pub n0: Option<usize>,
    pub n: Option<usize>,
    pub h_o: f64,
    pub h_i: f64,
    pub ctrl_poles: Option<Vec<f64>>,
    pub obs_poles: Option<Vec<f64>>,
    pub gains: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub z0: Expr,
    pub y0: Expr,
    pub t_final: f64,
    pub dt: f64,
    pub plant_kind: PlantKind,
    pub modes: usize,
    pub control: ControlMode,
    pub lipschitz_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub record_stride: usize,
    pub profiles: bool,
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plant: PlantSpec,
    pub spectral: SpectralConfig,
    pub design: DesignSettings,
    pub search: Option<SearchConfig>,
    pub export_alpha: f64,
    pub simulation: Option<SimulationSettings>,
    pub output: OutputSettings,
    pub sweep: Option<SweepBlock>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io("io_cli::parse_config", path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if table.is_empty() {
        return Err(Error::Parse("empty configuration".into()));
    }
    let raw: RawConfig = table.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    validate(raw)
}

fn function(block: &FunctionBlock, key: &str, errs: &mut Vec<String>) -> CoefFunction {
    let f = match (&block.poly, &block.table) {
        (Some(c), None) => CoefFunction::Poly(c.clone()),
        (None, Some(t)) => CoefFunction::Table(t.iter().map(|p| (p[0], p[1])).collect()),
        _ => {
            errs.push(format!("plant.{key}: exactly one of {key}.poly and {key}.table is required"));
            return CoefFunction::constant(f64::NAN);
        }
    };
    if let Err(e) = f.validate() {
        errs.push(format!("plant.{key}: {e}"));
    }
    f
}

fn positive(errs: &mut Vec<String>, key: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(format!("{key}: must be positive and finite, got {v}"));
    }
}

fn validate(raw: RawConfig) -> Result<RunConfig> {
    let mut errs = Vec::new();
    let Some(pb) = raw.plant else {
        errs.push("plant: block missing".into());
        if raw.design.is_none() {
            errs.push("design: block missing".into());
        }
        return Err(Error::Validation(errs));
    };
    let Some(db) = raw.design else {
        return Err(Error::Validation(vec!["design: block missing".into()]));
    };

    let p = function(&pb.p, "p", &mut errs);
    let q_tilde = function(&pb.q_tilde, "q_tilde", &mut errs);
    let theta1 = pb.theta1.resolve("plant.theta1", &mut errs);
    let theta2 = pb.theta2.resolve("plant.theta2", &mut errs);
    let plant = PlantSpec { p, q_tilde, theta1, theta2 };
    let mut spectral = SpectralConfig::default();
    if let Some(g) = pb.grid_size {
        if g < 11 {
            errs.push(format!("plant.grid_size: need at least 11 points, got {g}"));
        }
        spectral.grid_size = g;
    }
    if let Some(m) = pb.m_modes {
        if m < 4 || m >= spectral.grid_size {
            errs.push(format!("plant.m_modes: need 4 <= m_modes < grid_size, got {m}"));
        }
        spectral.m_modes = m;
    }
    if let Some(m) = pb.margin {
        positive(&mut errs, "plant.margin", m);
        spectral.margin = m;
    }
    if errs.is_empty() {
        for v in plant.violations(&Grid::uniform(spectral.grid_size.min(201))) {
            errs.push(format!("plant: {v}"));
        }
    }
    if theta1.is_finite() {
        if let Err(e) = plant.admits(db.variant.trace_kind()) {
            errs.push(format!("plant.theta1: {e} (variant {})", db.variant.name()));
        }
    }

    positive(&mut errs, "design.delta", db.delta);
    if !(db.h_o >= 0.0 && db.h_o.is_finite()) {
        errs.push(format!("design.h_o: must be a nonnegative delay, got {}", db.h_o));
    }
    match db.variant {
        Variant::JointDelay => {
            if !(db.h_i >= 0.0 && db.h_i.is_finite()) {
                errs.push(format!("design.h_i: must be a nonnegative delay, got {}", db.h_i));
            }
        }
        _ if db.h_i != 0.0 => errs.push(format!("design.h_i: only allowed with variant JointDelay, got {}", db.h_i)),
        _ => {}
    }
    if db.n0 == Some(0) {
        errs.push("design.n0: must be at least 1".into());
    }
    if let (Some(n0), Some(n)) = (db.n0, db.n) {
        if n <= n0 {
            errs.push(format!("design.n: must exceed n0 = {n0}, got {n}"));
        }
    }
    let (ctrl_poles, obs_poles) = match &db.poles {
        Some(pb) => (pb.ctrl.clone(), pb.obs.clone()),
        None => (None, None),
    };
    for (key, poles) in [("design.poles.ctrl", &ctrl_poles), ("design.poles.obs", &obs_poles)] {
        if let Some(ps) = poles {
            if let Some(p) = ps.iter().find(|p| !(**p < -db.delta)) {
                errs.push(format!("{key}: pole {p} is not below -delta = {}", -db.delta));
            }
        }
    }
    let gains = db.gains.as_ref().map(|g| (g.k.clone(), g.l.clone()));
    if let Some((k, l)) = &gains {
        if k.is_empty() || k.len() != l.len() {
            errs.push(format!("design.gains: k and l must be nonempty and equally long ({} vs {})", k.len(), l.len()));
        }
        if db.poles.is_some() {
            errs.push("design: gains and poles are mutually exclusive".into());
        }
    }
    let design = DesignSettings {
        variant: db.variant,
        delta: db.delta,
        n0: db.n0,
        n: db.n,
        h_o: db.h_o,
        h_i: db.h_i,
        ctrl_poles,
        obs_poles,
        gains,
    };

    let mut export_alpha = 2.0;
    let search = raw.certification.map(|cb| {
        let mut s = SearchConfig::default();
        if let Some(g) = cb.seed_grid {
            s = s.with_seed_grid(g);
        }
        if let Some(n) = cb.n_max {
            s.n_max = n;
        }
        if let Some(a) = cb.alphas {
            if a.is_empty() || a.iter().any(|v| !(*v > 1.0)) {
                errs.push("certification.alphas: need a nonempty list of values > 1".into());
            }
            s.alphas = a;
        }
        if let Some(e) = cb.eps_values {
            if e.is_empty() || e.iter().any(|v| !(*v > 0.0 && *v <= 0.5)) {
                errs.push("certification.eps_values: need a nonempty list in (0, 1/2]".into());
            }
            s.eps_values = e;
        }
        if let Some(p) = cb.p_scales {
            if p.is_empty() || p.iter().any(|v| !(*v > 0.0)) {
                errs.push("certification.p_scales: need a nonempty list of positive values".into());
            }
            s.p_scales = p;
        }
        if let Some(d) = cb.decades {
            s.decades = d;
        }
        if let Some(t) = cb.psd_tol {
            positive(&mut errs, "certification.psd_tol", t);
            s.psd_tol = t;
        }
        if let Some(a) = cb.export_alpha {
            if !(a > 1.0) {
                errs.push(format!("certification.export_alpha: must exceed 1, got {a}"));
            }
            export_alpha = a;
        }
        s
    });

    let simulation = raw.simulation.map(|sb| {
        let z0 = Expr::parse(&sb.z0, &["x"]).unwrap_or_else(|e| {
            errs.push(format!("simulation.z0: {e}"));
            Expr::Const(0.0)
        });
        let y0 = Expr::parse(&sb.y0, &["t", "tau"]).unwrap_or_else(|e| {
            errs.push(format!("simulation.y0: {e}"));
            Expr::Const(0.0)
        });
        let t_final = sb.t_final.unwrap_or(15.0);
        let dt = sb.dt.unwrap_or(1e-3);
        positive(&mut errs, "simulation.t_final", t_final);
        positive(&mut errs, "simulation.dt", dt);
        if dt > 0.0 && t_final > 0.0 && dt > t_final {
            errs.push(format!("simulation.dt: {dt} exceeds t_final = {t_final}"));
        }
        let modes = sb.modes.unwrap_or(60);
        if modes > spectral.m_modes {
            errs.push(format!("simulation.modes: {modes} exceeds plant.m_modes = {}", spectral.m_modes));
        }
        let lipschitz_max = sb.lipschitz_max.unwrap_or(1e4);
        positive(&mut errs, "simulation.lipschitz_max", lipschitz_max);
        SimulationSettings {
            z0,
            y0,
            t_final,
            dt,
            plant_kind: sb.plant_kind.unwrap_or(PlantKind::Modal),
            modes,
            control: sb.control.unwrap_or(ControlMode::Closed),
            lipschitz_max,
        }
    });

    let output = match raw.output {
        Some(ob) => {
            let stride = ob.record_stride.unwrap_or(10);
            if stride == 0 {
                errs.push("output.record_stride: must be at least 1".into());
            }
            OutputSettings {
                dir: ob.dir.unwrap_or_else(|| PathBuf::from("out")),
                record_stride: stride,
                profiles: ob.profiles,
            }
        }
        None => OutputSettings {
            dir: PathBuf::from("out"),
            record_stride: 10,
            profiles: false,
        },
    };

    if let Some(sw) = &raw.sweep {
        if sw.values.is_empty() {
            errs.push("sweep.values: empty".into());
        }
        if sw.parameter == SweepParameter::HI && design.variant != Variant::JointDelay {
            errs.push("sweep.parameter: h_i can only be swept with variant JointDelay".into());
        }
        for v in &sw.values {
            let ok = match sw.parameter {
                SweepParameter::Delta => *v > 0.0,
                _ => *v >= 0.0,
            };
            if !ok || !v.is_finite() {
                errs.push(format!("sweep.values: {v} is not admissible for {}", sw.parameter.name()));
            }
        }
    }

    if errs.is_empty() {
        Ok(RunConfig {
            plant,
            spectral,
            design,
            search,
            export_alpha,
            simulation,
            output,
            sweep: raw.sweep,
        })
    } else {
        Err(Error::Validation(errs))
    }
}

impl RunConfig {
    /// `Validation` error unless the named blocks were present.
    pub fn require(&self, command: &str, certification: bool, simulation: bool, sweep: bool) -> Result<()> {
        let mut errs = Vec::new();
        if certification && self.search.is_none() {
            errs.push(format!("certification: block required by `{command}`"));
        }
        if simulation && self.simulation.is_none() {
            errs.push(format!("simulation: block required by `{command}`"));
        }
        if sweep && self.sweep.is_none() {
            errs.push(format!("sweep: block required by `{command}`"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}
