//! Composite quadrature and finite-difference helpers on uniform grids.

/// Composite Simpson rule; `values.len()` must be odd and at least 3.
pub fn simpson(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd number (>= 3) of samples");
    let mut s = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * dx / 3.0
}

pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    dx * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// `<f, g>` by composite Simpson.
pub fn inner_simpson(f: &[f64], g: &[f64], dx: f64) -> f64 {
    let prod: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
    simpson(&prod, dx)
}

/// First derivative: centered in the interior, 3-point one-sided at the ends.
pub fn gradient(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 3, "gradient needs at least 3 samples");
    let mut d = vec![0.0; n];
    d[0] = left_derivative(values, dx);
    d[n - 1] = right_derivative(values, dx);
    for i in 1..n - 1 {
        d[i] = (values[i + 1] - values[i - 1]) / (2.0 * dx);
    }
    d
}

/// `f'(x_0)` by the second-order one-sided stencil.
pub fn left_derivative(v: &[f64], dx: f64) -> f64 {
    (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
}

/// `f'(x_{n-1})` by the second-order one-sided stencil.
pub fn right_derivative(v: &[f64], dx: f64) -> f64 {
    let n = v.len();
    (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx)
}
