//! Continuous Lyapunov equations `AᵀX + XA = -C` by the Bartels-Stewart
//! method: real Schur form of `A`, then block back-substitution on the
//! transformed Sylvester system.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub x: DMatrix<f64>,
    /// Eigenvalues of `A` read off the Schur blocks, `(re, im)`.
    pub eigenvalues: Vec<(f64, f64)>,
    /// `2‖A‖_F ‖X‖_F / ‖C‖_F`: a cheap bound-style condition estimate.
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovFailure {
    /// Largest real part of the eigenvalues of `A`.
    NotHurwitz(f64),
    SingularBlock,
}

/// Diagonal blocks `(start, size)` of a quasi-upper-triangular matrix.
fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

fn block_eigenvalues(t: &DMatrix<f64>, blocks: &[(usize, usize)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(t.nrows());
    for &(s, k) in blocks {
        if k == 1 {
            out.push((t[(s, s)], 0.0));
        } else {
            let (a, b, c, d) = (t[(s, s)], t[(s, s + 1)], t[(s + 1, s)], t[(s + 1, s + 1)]);
            let tr = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc >= 0.0 {
                let r = disc.sqrt();
                out.push((tr + r, 0.0));
                out.push((tr - r, 0.0));
            } else {
                let r = (-disc).sqrt();
                out.push((tr, r));
                out.push((tr, -r));
            }
        }
    }
    out
}

/// Eigenvalues of a general real matrix via its real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let schur = nalgebra::linalg::Schur::new(a.clone());
    let (_, t) = schur.unpack();
    let blocks = schur_blocks(&t);
    block_eigenvalues(&t, &blocks)
}

pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().fold(f64::NEG_INFINITY, |m, e| m.max(e.0))
}

/// Solves `AᵀX + XA = -C` for symmetric `C`. Requires `A` Hurwitz.
pub fn solve_continuous_lyapunov(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<LyapunovSolution, LyapunovFailure> {
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::new(a.clone());
    let (q, t) = schur.unpack();
    let blocks = schur_blocks(&t);
    let eigenvalues = block_eigenvalues(&t, &blocks);
    let abscissa = eigenvalues.iter().fold(f64::NEG_INFINITY, |m, e| m.max(e.0));
    if abscissa >= 0.0 {
        return Err(LyapunovFailure::NotHurwitz(abscissa));
    }

    // Tᵀ Y + Y T = D with D = -Qᵀ C Q, Y = Qᵀ X Q
    let d = -(q.transpose() * c * &q);
    let mut y = DMatrix::<f64>::zeros(n, n);
    for &(ri, ni) in &blocks {
        for &(cj, nj) in &blocks {
            // rhs = D_ij - Σ_{k<i} T_kiᵀ Y_kj - Σ_{k<j} Y_ik T_kj
            let mut rhs = d.view((ri, cj), (ni, nj)).into_owned();
            if ri > 0 {
                let t_ki = t.view((0, ri), (ri, ni));
                let y_kj = y.view((0, cj), (ri, nj));
                rhs -= t_ki.transpose() * y_kj;
            }
            if cj > 0 {
                let y_ik = y.view((ri, 0), (ni, cj));
                let t_kj = t.view((0, cj), (cj, nj));
                rhs -= y_ik * t_kj;
            }
            let tii = t.view((ri, ri), (ni, ni));
            let tjj = t.view((cj, cj), (nj, nj));
            // column-major vec: (I ⊗ T_iiᵀ + T_jjᵀ ⊗ I) vec(Y) = vec(rhs)
            let m = ni * nj;
            let mut kron = DMatrix::<f64>::zeros(m, m);
            for col in 0..nj {
                for r in 0..ni {
                    let row = col * ni + r;
                    for k in 0..ni {
                        kron[(row, col * ni + k)] += tii[(k, r)];
                    }
                    for l in 0..nj {
                        kron[(row, l * ni + r)] += tjj[(l, col)];
                    }
                }
            }
            let rhs_vec = DVector::from_column_slice(rhs.as_slice());
            let sol = kron.lu().solve(&rhs_vec).ok_or(LyapunovFailure::SingularBlock)?;
            for col in 0..nj {
                for r in 0..ni {
                    y[(ri + r, cj + col)] = sol[col * ni + r];
                }
            }
        }
    }
    let mut x = &q * y * q.transpose();
    let xt = x.transpose();
    x = (x + xt) * 0.5;
    let cn = c.norm().max(f64::MIN_POSITIVE);
    let condition = 2.0 * a.norm() * x.norm() / cn;
    Ok(LyapunovSolution {
        x,
        eigenvalues,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual(a: &DMatrix<f64>, x: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
        (a.transpose() * x + x * a + c).norm()
    }

    #[test]
    fn diagonal_case() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, -3.0]));
        let c = DMatrix::identity(2, 2);
        let sol = solve_continuous_lyapunov(&a, &c).unwrap();
        assert!((sol.x[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((sol.x[(1, 1)] - 1.0 / 6.0).abs() < 1e-15);
        assert!(sol.x[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn complex_pair_case() {
        // rotation-dominated stable matrix forces a 2x2 Schur block
        let a = DMatrix::from_row_slice(3, 3, &[-0.5, 4.0, 1.0, -4.0, -0.5, 0.0, 0.0, 0.3, -2.0]);
        let c = DMatrix::identity(3, 3);
        let sol = solve_continuous_lyapunov(&a, &c).unwrap();
        assert!(residual(&a, &sol.x, &c) < 1e-12);
        assert!(sol.eigenvalues.iter().any(|e| e.1.abs() > 1.0));
    }

    #[test]
    fn rejects_unstable() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, -1.0]);
        let c = DMatrix::identity(2, 2);
        match solve_continuous_lyapunov(&a, &c) {
            Err(LyapunovFailure::NotHurwitz(s)) => assert!((s - 0.1).abs() < 1e-12),
            other => panic!("expected NotHurwitz, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn residual_small_for_shifted_random(n in 1usize..8, seed in proptest::collection::vec(-1.0f64..1.0, 64)) {
            let mut a = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] = seed[i * 8 + j];
                }
            }
            // shift well into the left half plane
            let shift = a.norm() + 0.5;
            for i in 0..n {
                a[(i, i)] -= shift;
            }
            let c = DMatrix::identity(n, n);
            let sol = solve_continuous_lyapunov(&a, &c).unwrap();
            prop_assert!(residual(&a, &sol.x, &c) <= 1e-11 * (1.0 + sol.x.norm()));
            let min_eig = sol.x.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min_eig > 0.0);
        }
    }
}
