//! Coefficient functions on `[0, 1]`: polynomials with exact derivatives or
//! tabulated samples with centered-difference derivatives.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefFunction {
    /// `c[0] + c[1] x + c[2] x^2 + ...`
    Poly(Vec<f64>),
    /// Samples `(x_i, f(x_i))` with strictly increasing abscissae covering
    /// `[0, 1]`; evaluated by linear interpolation.
    Table(Vec<(f64, f64)>),
}

impl CoefFunction {
    pub fn constant(c: f64) -> Self {
        CoefFunction::Poly(vec![c])
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            CoefFunction::Poly(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
            CoefFunction::Table(t) => interp(t, x, |&(_, v)| v),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            CoefFunction::Poly(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * x + k as f64 * ck),
            CoefFunction::Table(t) => {
                let d = table_derivative(t);
                let pairs: Vec<(f64, f64)> = t.iter().map(|p| p.0).zip(d).collect();
                interp(&pairs, x, |&(_, v)| v)
            }
        }
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.eval(x)).collect()
    }

    /// Checks the table layout; polynomials are always valid.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            CoefFunction::Poly(c) if c.is_empty() => Err("empty coefficient list".into()),
            CoefFunction::Poly(c) if c.iter().any(|v| !v.is_finite()) => {
                Err("non-finite coefficient".into())
            }
            CoefFunction::Poly(_) => Ok(()),
            CoefFunction::Table(t) => {
                if t.len() < 3 {
                    return Err("table needs at least 3 samples".into());
                }
                if t.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err("table abscissae must be strictly increasing".into());
                }
                if t[0].0 > 0.0 || t[t.len() - 1].0 < 1.0 {
                    return Err("table must cover [0, 1]".into());
                }
                if t.iter().any(|p| !p.1.is_finite()) {
                    return Err("non-finite table value".into());
                }
                Ok(())
            }
        }
    }
}

fn interp<T>(t: &[T], x: f64, val: impl Fn(&T) -> f64) -> f64
where
    T: AsPair,
{
    let n = t.len();
    let pos = t.partition_point(|p| p.x() <= x);
    let i = pos.clamp(1, n - 1) - 1;
    let (x0, x1) = (t[i].x(), t[i + 1].x());
    let w = (x - x0) / (x1 - x0);
    (1.0 - w) * val(&t[i]) + w * val(&t[i + 1])
}

trait AsPair {
    fn x(&self) -> f64;
}

impl AsPair for (f64, f64) {
    fn x(&self) -> f64 {
        self.0
    }
}

fn table_derivative(t: &[(f64, f64)]) -> Vec<f64> {
    let n = t.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (t[1].1 - t[0].1) / (t[1].0 - t[0].0)
            } else if i == n - 1 {
                (t[n - 1].1 - t[n - 2].1) / (t[n - 1].0 - t[n - 2].0)
            } else {
                (t[i + 1].1 - t[i - 1].1) / (t[i + 1].0 - t[i - 1].0)
            }
        })
        .collect()
}
