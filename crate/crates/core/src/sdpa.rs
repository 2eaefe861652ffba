//! SDPA sparse (`.dat-s`) export of the fixed-`α` feasibility problem.
//!
//! Decision variables, in order: the upper triangle of `P` (row-major),
//! `β`, `γ`, then for the joint variant the upper triangle of `Q₁` and `q₂`
//! (with `Q₂ = q₂ KᵀK`). Constraint form is `Σ xᵢFᵢ − F₀ ⪰ 0`.
//!
//! Blocks:
//! 1. `−Θ₁`
//! 2. `P − μI`, `β − μ`, `γ − μ`, `−Θ₂` (and for the joint variant
//!    `e^{-2δhᵢ}q₂ − αγ‖𝓡b‖²`, `q₂`) as one block-diagonal block
//! 3. `Θ₃` (Neumann, diagonal) or `−R₁` (joint)
//! 4. `Q₁` (joint)

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::certification::{evaluate_theta2_theta3, CertificateProblem};
use crate::error::{Error, Result};
use crate::synthesis::Variant;

pub const MU: f64 = 1e-6;

/// One nonzero `(variable, block, i, j, value)`; variable 0 is `F₀`,
/// indices are 1-based and `i ≤ j`.
pub type Entry = (usize, usize, usize, usize, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct SdpaProblem {
    pub comments: Vec<String>,
    pub n_vars: usize,
    /// Negative sizes are diagonal blocks.
    pub block_sizes: Vec<i64>,
    pub objective: Vec<f64>,
    pub entries: Vec<Entry>,
}

impl SdpaProblem {
    pub fn n_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    /// `Σ xᵢFᵢ − F₀` per block, as dense symmetric matrices.
    pub fn assemble(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        if x.len() != self.n_vars {
            return Err(Error::dims(
                "sdpa::assemble",
                format!("{} values for {} variables", x.len(), self.n_vars),
            ));
        }
        let mut blocks: Vec<DMatrix<f64>> = self
            .block_sizes
            .iter()
            .map(|&s| {
                let n = s.unsigned_abs() as usize;
                DMatrix::zeros(n, n)
            })
            .collect();
        for &(v, b, i, j, val) in &self.entries {
            let w = if v == 0 { -val } else { x[v - 1] * val };
            let m = &mut blocks[b - 1];
            m[(i - 1, j - 1)] += w;
            if i != j {
                m[(j - 1, i - 1)] += w;
            }
        }
        Ok(blocks)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("* delay-stab export\n");
        for c in &self.comments {
            let _ = writeln!(s, "* {c}");
        }
        let _ = writeln!(s, "{}", self.n_vars);
        let _ = writeln!(s, "{}", self.block_sizes.len());
        let sizes: Vec<String> = self.block_sizes.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(s, "{}", sizes.join(" "));
        let obj: Vec<String> = self.objective.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "{}", obj.join(" "));
        for &(v, b, i, j, val) in &self.entries {
            let _ = writeln!(s, "{v} {b} {i} {j} {val:e}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Parse(format!("sdpa::parse: {what}"));
        let mut comments = Vec::new();
        let mut lines = text.lines().filter_map(|l| {
            let t = l.trim();
            if let Some(c) = t.strip_prefix('*').or_else(|| t.strip_prefix('"')) {
                comments.push(c.trim().to_string());
                None
            } else if t.is_empty() {
                None
            } else {
                Some(t)
            }
        });
        let n_vars: usize = lines
            .next()
            .ok_or_else(|| bad("missing variable count"))?
            .split_whitespace()
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("bad variable count"))?;
        let n_blocks: usize = lines
            .next()
            .ok_or_else(|| bad("missing block count"))?
            .split_whitespace()
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("bad block count"))?;
        let clean = |l: &str| l.replace([',', '{', '}', '(', ')'], " ");
        let block_sizes: Vec<i64> = clean(lines.next().ok_or_else(|| bad("missing block sizes"))?)
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad block size")))
            .collect::<Result<_>>()?;
        if block_sizes.len() != n_blocks {
            return Err(bad("block size count differs from block count"));
        }
        let objective: Vec<f64> = clean(lines.next().ok_or_else(|| bad("missing objective"))?)
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad objective value")))
            .collect::<Result<_>>()?;
        if objective.len() != n_vars {
            return Err(bad("objective length differs from variable count"));
        }
        let mut entries = Vec::new();
        for l in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad(&format!("entry line `{l}`")));
            }
            let int = |t: &str| t.parse::<usize>().map_err(|_| bad(&format!("entry line `{l}`")));
            let (v, b, i, j) = (int(f[0])?, int(f[1])?, int(f[2])?, int(f[3])?);
            let val: f64 = f[4].parse().map_err(|_| bad(&format!("entry line `{l}`")))?;
            if v > n_vars || b == 0 || b > n_blocks {
                return Err(bad(&format!("index out of range in `{l}`")));
            }
            let size = block_sizes[b - 1].unsigned_abs() as usize;
            if i == 0 || j == 0 || i > size || j > size || (block_sizes[b - 1] < 0 && i != j) {
                return Err(bad(&format!("index out of range in `{l}`")));
            }
            entries.push((v, b, i.min(j), i.max(j), val));
        }
        // the leading "* delay-stab export" line is re-added by the writer
        if comments.first().map(String::as_str) == Some("delay-stab export") {
            comments.remove(0);
        }
        Ok(SdpaProblem {
            comments,
            n_vars,
            block_sizes,
            objective,
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io("sdpa::read", path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io("sdpa::export_sdpa", path, e))
    }
}

struct Builder {
    entries: Vec<Entry>,
}

impl Builder {
    fn push(&mut self, v: usize, b: usize, i: usize, j: usize, val: f64) {
        if val != 0.0 {
            self.entries.push((v, b, i + 1, j + 1, val));
        }
    }

    fn push_upper(&mut self, v: usize, b: usize, offset: usize, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                self.push(v, b, offset + i, offset + j, m[(i, j)]);
            }
        }
    }
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

fn sym_unit(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, n);
    s[(i, j)] = 1.0;
    s[(j, i)] = 1.0;
    s
}

/// Builds the fixed-`α` problem (Neumann problems carry their own `ε`).
pub fn build_sdpa(problem: &CertificateProblem, alpha: f64) -> Result<SdpaProblem> {
    if alpha <= 1.0 {
        return Err(Error::dims("sdpa::export_sdpa", format!("alpha = {alpha} must exceed 1")));
    }
    let r = &problem.reduced;
    let variant = problem.variant();
    let joint = variant == Variant::JointDelay;
    let d = r.f.nrows();
    let n0 = r.n0;
    let p_pairs = upper_pairs(d);
    let q_pairs = if joint { upper_pairs(n0) } else { Vec::new() };
    let v_beta = p_pairs.len() + 1;
    let v_gamma = v_beta + 1;
    let v_q1 = v_gamma + 1;
    let v_q2 = v_q1 + q_pairs.len();
    let n_vars = if joint { v_q2 } else { v_gamma };

    let mut block_sizes = vec![(d + 1) as i64];
    let b2 = d + 3 + if joint { 2 } else { 0 };
    block_sizes.push(b2 as i64);
    match variant {
        Variant::NeumannOut => block_sizes.push(-1),
        Variant::JointDelay => {
            block_sizes.push(n0 as i64);
            block_sizes.push(n0 as i64);
        }
        Variant::DirichletOut => {}
    }

    let mut bld = Builder { entries: Vec::new() };
    let kk_full = {
        let kt = &r.ktilde;
        kt * kt.transpose()
    };
    let ee = &r.e * r.e.transpose();
    let corner = (-2.0 * problem.delta * problem.h_o).exp();

    // block 1: −Θ₁
    for (k, &(i, j)) in p_pairs.iter().enumerate() {
        let s = sym_unit(d, i, j);
        let top = r.f.transpose() * &s + &s * &r.f + &s * (2.0 * problem.delta);
        let col = &s * &r.lcal;
        let mut m = DMatrix::zeros(d + 1, d + 1);
        m.view_mut((0, 0), (d, d)).copy_from(&top);
        for a in 0..d {
            m[(a, d)] = col[a];
            m[(d, a)] = col[a];
        }
        bld.push_upper(k + 1, 1, 0, &(-m));
    }
    bld.push(v_beta, 1, d, d, corner);
    if joint {
        for (k, &(i, j)) in q_pairs.iter().enumerate() {
            let s = sym_unit(n0, i, j);
            bld.push_upper(v_q1 + k, 1, 0, &(-s));
        }
        bld.push_upper(v_q2, 1, 0, &(-&ee));
    } else {
        let mut g = DMatrix::zeros(d + 1, d + 1);
        g.view_mut((0, 0), (d, d)).copy_from(&(&kk_full * (alpha * problem.tail_a)));
        g += &ee * (alpha * problem.tail_b);
        bld.push_upper(v_gamma, 1, 0, &(-g));
    }

    // block 2: P − μI, β − μ, γ − μ, −Θ₂ [, joint scalars]
    for (k, &(i, j)) in p_pairs.iter().enumerate() {
        bld.push(k + 1, 2, i, j, 1.0);
    }
    for i in 0..d + 2 {
        bld.push(0, 2, i, i, MU);
    }
    bld.push(v_beta, 2, d, d, 1.0);
    bld.push(v_gamma, 2, d + 1, d + 1, 1.0);
    let (t2_beta, t3_beta) = evaluate_theta2_theta3(problem, alpha, 1.0, 0.0);
    let (t2_gamma, t3_gamma) = evaluate_theta2_theta3(problem, alpha, 0.0, 1.0);
    bld.push(v_beta, 2, d + 2, d + 2, -t2_beta);
    bld.push(v_gamma, 2, d + 2, d + 2, -t2_gamma);
    if joint {
        let w = (-2.0 * problem.delta * problem.h_i).exp();
        bld.push(v_q2, 2, d + 3, d + 3, w);
        bld.push(v_gamma, 2, d + 3, d + 3, -alpha * problem.tail_b);
        bld.push(v_q2, 2, d + 4, d + 4, 1.0);
    }

    match variant {
        Variant::NeumannOut => {
            bld.push(v_beta, 3, 0, 0, t3_beta.unwrap_or(0.0));
            bld.push(v_gamma, 3, 0, 0, t3_gamma.unwrap_or(0.0));
        }
        Variant::JointDelay => {
            // −R₁ = e^{-2δhᵢ}Q₁ − αγ‖𝓡a‖²KᵀK
            let w = (-2.0 * problem.delta * problem.h_i).exp();
            for (k, &(i, j)) in q_pairs.iter().enumerate() {
                bld.push_upper(v_q1 + k, 3, 0, &(sym_unit(n0, i, j) * w));
                bld.push_upper(v_q1 + k, 4, 0, &sym_unit(n0, i, j));
            }
            let kk = kk_full.view((0, 0), (n0, n0)).into_owned();
            bld.push_upper(v_gamma, 3, 0, &(kk * (-alpha * problem.tail_a)));
        }
        Variant::DirichletOut => {}
    }

    let mut comments = vec![
        format!("variant {} N = {} N0 = {} alpha = {alpha:e}", variant.name(), r.n, n0),
        format!("constraints: sum_i x_i F_i - F_0 >= 0, mu = {MU:e}"),
        format!("x_1..x_{} = P upper triangle, row-major, P is {d}x{d}", p_pairs.len()),
        format!("x_{v_beta} = beta, x_{v_gamma} = gamma"),
    ];
    if let Some(eps) = problem.eps() {
        comments.push(format!("eps = {eps:e}"));
    }
    if joint {
        comments.push(format!(
            "x_{v_q1}..x_{} = Q1 upper triangle ({n0}x{n0}), x_{v_q2} = q2 with Q2 = q2 K^T K",
            v_q2 - 1
        ));
    }
    let mut blocks_doc = String::from("block 1 = -Theta1, block 2 = diag(P - mu I, beta - mu, gamma - mu, -Theta2");
    if joint {
        blocks_doc.push_str(", -R2 / (K K^T), q2");
    }
    blocks_doc.push(')');
    match variant {
        Variant::NeumannOut => blocks_doc.push_str(", block 3 = Theta3"),
        Variant::JointDelay => blocks_doc.push_str(", block 3 = -R1, block 4 = Q1"),
        Variant::DirichletOut => {}
    }
    comments.push(blocks_doc);

    Ok(SdpaProblem {
        comments,
        n_vars,
        block_sizes,
        objective: vec![0.0; n_vars],
        entries: bld.entries,
    })
}

/// Writes the problem to `path` and returns it.
pub fn export_sdpa(problem: &CertificateProblem, alpha: f64, path: &Path) -> Result<SdpaProblem> {
    let sdpa = build_sdpa(problem, alpha)?;
    sdpa.write(path)?;
    Ok(sdpa)
}

/// Decision vector of a certificate in the export's variable order.
pub fn certificate_vector(p: &DMatrix<f64>, beta: f64, gamma: f64, q: Option<(&DMatrix<f64>, f64)>) -> Vec<f64> {
    let mut x: Vec<f64> = upper_pairs(p.nrows()).into_iter().map(|(i, j)| p[(i, j)]).collect();
    x.push(beta);
    x.push(gamma);
    if let Some((q1, q2)) = q {
        x.extend(upper_pairs(q1.nrows()).into_iter().map(|(i, j)| q1[(i, j)]));
        x.push(q2);
    }
    x
}
