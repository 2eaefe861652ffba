//! Symmetric tridiagonal eigenproblems (Sturm-sequence bisection plus
//! inverse iteration) and tridiagonal linear solves.

/// Symmetric tridiagonal matrix stored as its diagonal and off-diagonal.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length must be n-1");
        SymTridiagonal { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            let denom = if q == 0.0 { f64::EPSILON * (1.0 + x.abs()) } else { q };
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `m` smallest eigenvalues in increasing order.
    pub fn smallest_eigenvalues(&self, m: usize) -> Vec<f64> {
        let m = m.min(self.len());
        let (glo, ghi) = self.gershgorin();
        let span = (ghi - glo).abs().max(1.0);
        // every Sturm count tightens the brackets of all wanted eigenvalues
        let mut lo = vec![glo - 1e-12 * span; m];
        let mut hi = vec![ghi + 1e-12 * span; m];
        for k in 0..m {
            for _ in 0..200 {
                let (a, b) = (lo[k], hi[k]);
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b || b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
                    break;
                }
                let c = self.count_below(mid).min(m);
                for h in hi.iter_mut().take(c).skip(k) {
                    *h = h.min(mid);
                }
                for l in lo.iter_mut().skip(c.max(k)) {
                    *l = l.max(mid);
                }
            }
        }
        lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Eigenvalues `k = 0..hints.len()` located near `hints[k]`, bisected to
    /// relative width `rel_tol`. Brackets widen until the Sturm counts
    /// confirm them, so poor hints only cost time.
    pub fn eigenvalues_near(&self, hints: &[f64], rel_tol: f64) -> Vec<f64> {
        let (glo, ghi) = self.gershgorin();
        hints
            .iter()
            .enumerate()
            .map(|(k, &guess)| {
                let mut w = 0.05 * guess.abs() + 1e-6 * (ghi - glo).abs().max(1.0);
                let mut lo = guess - w;
                while lo > glo && self.count_below(lo) > k {
                    w *= 4.0;
                    lo = guess - w;
                }
                let mut w = 0.05 * guess.abs() + 1e-6 * (ghi - glo).abs().max(1.0);
                let mut hi = guess + w;
                while hi < ghi && self.count_below(hi) <= k {
                    w *= 4.0;
                    hi = guess + w;
                }
                let (mut lo, mut hi) = (lo.max(glo - 1e-12), hi.min(ghi + 1e-12));
                loop {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi || hi - lo <= rel_tol * lo.abs().max(hi.abs()) {
                        break;
                    }
                    if self.count_below(mid) > k {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }

    /// Unit eigenvector for an (accurate) eigenvalue by inverse iteration.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.len();
        let scale = self.diag.iter().fold(1.0_f64, |a, &d| a.max(d.abs()));
        let shift = lambda + 1e-13 * scale;
        let dl: Vec<f64> = self.off.clone();
        let du: Vec<f64> = self.off.clone();
        let d: Vec<f64> = self.diag.iter().map(|&v| v - shift).collect();
        let lu = TridiagLu::factor(&dl, &d, &du);
        // deterministic, non-symmetric start vector
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i * 7 + 3) % 11) as f64 / 11.0).collect();
        for _ in 0..3 {
            x = lu.solve(&x);
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= nrm);
        }
        x
    }
}

/// LU factorization of a general tridiagonal matrix with partial pivoting
/// (the fill-in lands on a second superdiagonal).
#[derive(Debug, Clone)]
pub struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    /// `dl` sub-diagonal, `d` diagonal, `du` super-diagonal.
    pub fn factor(dl: &[f64], d: &[f64], du: &[f64]) -> Self {
        let n = d.len();
        let mut dl = dl.to_vec();
        let mut d = d.to_vec();
        let mut du = du.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let tiny = f64::MIN_POSITIVE.sqrt();
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        TridiagLu {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.dl[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= self.du[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.du2[i] * x[i + 2];
            }
            x[i] = s / self.d[i];
        }
        x
    }
}

/// Thomas algorithm without pivoting; fails on a zero pivot.
/// Intended for diagonally dominant systems (implicit time stepping).
pub fn thomas_solve(dl: &[f64], d: &[f64], du: &[f64], rhs: &[f64]) -> Result<Vec<f64>, usize> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut denom = d[0];
    if denom == 0.0 {
        return Err(0);
    }
    if n > 1 {
        c[0] = du[0] / denom;
    }
    x[0] = rhs[0] / denom;
    for i in 1..n {
        denom = d[i] - dl[i - 1] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(i);
        }
        if i + 1 < n {
            c[i] = du[i] / denom;
        }
        x[i] = (rhs[i] - dl[i - 1] * x[i - 1]) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}
