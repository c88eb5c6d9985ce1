//! System norms of `ẋ = N x + B w`, `e = C x`, computed independently of
//! the synthesis LMIs.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequencies at which the peak gain is searched, in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid {
            lo: 1e-3,
            hi: 1e5,
            points: 2000,
        }
    }
}

impl FrequencyGrid {
    pub fn frequencies(&self) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        let n = self.points.max(2);
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

/// Largest real part among the eigenvalues.
pub fn spectral_abscissa(n: &DMatrix<f64>) -> f64 {
    n.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn require_hurwitz(n: &DMatrix<f64>) -> Result<()> {
    let abscissa = spectral_abscissa(n);
    if abscissa < 0.0 {
        Ok(())
    } else {
        Err(Error::NotHurwitz { abscissa })
    }
}

/// `σ_max(C (iω I − N)⁻¹ B)`.
pub fn gain_at(n: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, omega: f64) -> Result<f64> {
    let dim = n.nrows();
    let resolvent = DMatrix::from_fn(dim, dim, |i, j| {
        let diag = if i == j { Complex::new(0.0, omega) } else { Complex::new(0.0, 0.0) };
        diag - Complex::new(n[(i, j)], 0.0)
    });
    let bc = b.map(|v| Complex::new(v, 0.0));
    let x = resolvent
        .lu()
        .solve(&bc)
        .ok_or_else(|| Error::Numerical(format!("resolvent singular at ω = {omega}")))?;
    let g = c.map(|v| Complex::new(v, 0.0)) * x;
    Ok(g.singular_values().max())
}

/// Peak gain over the grid, refined by golden-section search in log
/// frequency around the best grid point. The zero-frequency gain is always
/// included.
pub fn hinf_norm(n: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, grid: &FrequencyGrid) -> Result<f64> {
    require_hurwitz(n)?;
    let freqs = grid.frequencies();
    let gains: Vec<f64> = freqs
        .iter()
        .map(|&w| gain_at(n, b, c, w))
        .collect::<Result<_>>()?;
    let dc = gain_at(n, b, c, 0.0)?;
    let (k, &peak) = gains
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    let lo = freqs[k.saturating_sub(1)].ln();
    let hi = freqs[(k + 1).min(freqs.len() - 1)].ln();
    let refined = golden_max(|lw| gain_at(n, b, c, lw.exp()), lo, hi, 60)?;
    Ok(peak.max(refined).max(dc))
}

fn golden_max(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, iters: usize) -> Result<f64> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok(f1.max(f2))
}

/// Solves `N W + W Nᵀ + Q = 0` for Hurwitz `N` by reducing `N` to real
/// Schur form and back-substituting block columns.
pub fn lyapunov(n: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_hurwitz(n)?;
    let dim = n.nrows();
    let (u, t) = nalgebra::Schur::new(n.clone()).unpack();
    // T Y + Y Tᵀ = −Uᵀ Q U
    let rhs = -(u.transpose() * q * &u);
    let mut y = DMatrix::<f64>::zeros(dim, dim);

    // Diagonal blocks of the quasi-triangular factor, last to first.
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < dim {
        if i + 1 < dim && t[(i + 1, i)].abs() > 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    for &(j, w) in blocks.iter().rev() {
        // Column block j: T Y_j + Y_j T_jjᵀ = R_j − Σ_{k > j} Y_k T_jkᵀ
        let mut r = rhs.columns(j, w).into_owned();
        if j + w < dim {
            let tail = dim - j - w;
            r -= y.columns(j + w, tail) * t.view((j, j + w), (w, tail)).transpose();
        }
        let tjj = t.view((j, j), (w, w)).into_owned();
        let mut sys = DMatrix::<f64>::zeros(dim * w, dim * w);
        for a in 0..w {
            sys.view_mut((a * dim, a * dim), (dim, dim)).copy_from(&t);
            for b2 in 0..w {
                let mut v = sys.view_mut((a * dim, b2 * dim), (dim, dim));
                for d in 0..dim {
                    v[(d, d)] += tjj[(a, b2)];
                }
            }
        }
        let sol = sys
            .lu()
            .solve(&DMatrix::from_column_slice(dim * w, 1, r.as_slice()))
            .ok_or_else(|| Error::Numerical("Lyapunov block singular".into()))?;
        for a in 0..w {
            y.column_mut(j + a).copy_from(&sol.rows(a * dim, dim));
        }
    }
    let w = &u * y * u.transpose();
    Ok((&w + w.transpose()) * 0.5)
}

/// `√trace(C W Cᵀ)` with `W` the controllability Gramian.
pub fn h2_norm(n: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<f64> {
    let w = lyapunov(n, &(b * b.transpose()))?;
    let t = (c * w * c.transpose()).trace();
    Ok(t.max(0.0).sqrt())
}
