//! A primal-dual interior-point method for small dense block-diagonal
//! semidefinite programs.
//!
//! Problems are stated as "minimise `cᵀy` subject to a list of LMIs in `y`".
//! Internally every LMI becomes a block `C_k − Σ yᵢ A_{k,i} ⪰ 0` of the dual
//! standard form; the primal partner is `min ⟨C, X⟩ s.t. ⟨A_i, X⟩ = b_i,
//! X ⪰ 0`. Iterates follow the HKM search direction with a Mehrotra
//! predictor-corrector and an infeasible start.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::expr::{AffineExpr, VarTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `expr ⪰ margin · I`
    PositiveSemidefinite,
    /// `expr ⪯ −margin · I`
    NegativeSemidefinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint {
    pub name: String,
    pub expr: AffineExpr,
    pub sense: Sense,
    pub margin: f64,
}

impl LmiConstraint {
    pub fn psd(name: &str, expr: AffineExpr, margin: f64) -> Self {
        LmiConstraint {
            name: name.into(),
            expr,
            sense: Sense::PositiveSemidefinite,
            margin,
        }
    }

    pub fn nsd(name: &str, expr: AffineExpr, margin: f64) -> Self {
        LmiConstraint {
            name: name.into(),
            expr,
            sense: Sense::NegativeSemidefinite,
            margin,
        }
    }

    /// The constraint rewritten as `G(y) ⪰ 0`.
    fn as_psd(&self) -> AffineExpr {
        let n = self.expr.shape().0;
        let shift = AffineExpr::identity(n).scale(self.margin);
        match self.sense {
            Sense::PositiveSemidefinite => &self.expr - &shift,
            Sense::NegativeSemidefinite => -(&self.expr + &shift),
        }
    }

    /// Largest eigenvalue of the violation: `≤ 0` means satisfied.
    pub fn violation(&self, y: &DVector<f64>) -> f64 {
        let g = self.as_psd().eval(y);
        let g = (&g + g.transpose()) * 0.5;
        -g.symmetric_eigenvalues().min()
    }
}

/// Minimise `objective · y` subject to the listed LMIs.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub vars: VarTable,
    pub objective: DVector<f64>,
    pub constraints: Vec<LmiConstraint>,
}

impl SdpProblem {
    pub fn new(vars: VarTable) -> Self {
        let n = vars.count;
        SdpProblem {
            vars,
            objective: DVector::zeros(n),
            constraints: Vec::new(),
        }
    }

    pub fn add(&mut self, c: LmiConstraint) -> Result<()> {
        let (r, cc) = c.expr.shape();
        if r != cc {
            return Err(Error::Dimension(format!("constraint {} is {r}x{cc}", c.name)));
        }
        if let Some((&k, _)) = c.expr.terms.iter().next_back() {
            if k >= self.vars.count {
                return Err(Error::Dimension(format!("constraint {} uses unknown variable {k}", c.name)));
            }
        }
        let asym = |m: &DMatrix<f64>| (m - m.transpose()).amax();
        let scale = c.expr.scale_estimate().max(1.0);
        let worst = c
            .expr
            .terms
            .values()
            .chain(std::iter::once(&c.expr.constant))
            .map(asym)
            .fold(0.0, f64::max);
        if worst > 1e-9 * scale {
            return Err(Error::Dimension(format!("constraint {} is not symmetric ({worst:e})", c.name)));
        }
        self.constraints.push(c);
        Ok(())
    }

    /// Per-constraint violation at `y`; all entries `≤ 0` when feasible.
    pub fn violations(&self, y: &DVector<f64>) -> Vec<(String, f64)> {
        self.constraints.iter().map(|c| (c.name.clone(), c.violation(y))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions { tol: 1e-7, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
}

struct Block {
    c: DMatrix<f64>,
    a: BTreeMap<usize, DMatrix<f64>>,
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Largest step `α ≤ 1/τ`-style bound keeping `X + α ΔX ⪰ 0`, given the
/// Cholesky factor of `X`.
fn max_step(chol_l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let n = dx.nrows();
    let l = chol_l;
    // W = L⁻¹ ΔX L⁻ᵀ
    let half = l.solve_lower_triangular(dx).expect("triangular factor");
    let w = l.solve_lower_triangular(&half.transpose()).expect("triangular factor");
    let w = sym(w);
    let lo = if n == 1 { w[(0, 0)] } else { w.symmetric_eigenvalues().min() };
    if lo >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lo
    }
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    y: DVector<f64>,
}

struct Solver {
    blocks: Vec<Block>,
    b: DVector<f64>,
    m: usize,
    n_total: usize,
}

impl Solver {
    fn a_op(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (blk, xk) in self.blocks.iter().zip(x) {
            for (&i, ai) in &blk.a {
                out[i] += dot(ai, xk);
            }
        }
        out
    }

    fn at_op(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|blk| {
                let n = blk.c.nrows();
                let mut s = DMatrix::zeros(n, n);
                for (&i, ai) in &blk.a {
                    s += ai * y[i];
                }
                s
            })
            .collect()
    }

    fn dual_residual(&self, it: &Iterate) -> Vec<DMatrix<f64>> {
        let aty = self.at_op(&it.y);
        self.blocks
            .iter()
            .zip(aty)
            .zip(&it.s)
            .map(|((blk, aty), s)| &blk.c - s - aty)
            .collect()
    }

    fn schur(&self, x: &[DMatrix<f64>], s_inv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut mat = DMatrix::zeros(self.m, self.m);
        for ((blk, xk), sk) in self.blocks.iter().zip(x).zip(s_inv) {
            let idx: Vec<usize> = blk.a.keys().copied().collect();
            let mats: Vec<&DMatrix<f64>> = blk.a.values().collect();
            let prods: Vec<DMatrix<f64>> = mats.iter().map(|ai| xk * *ai * sk).collect();
            for (p, &i) in idx.iter().enumerate() {
                for q in p..idx.len() {
                    let v = dot(mats[q], &prods[p]);
                    mat[(i, idx[q])] += v;
                    if q != p {
                        mat[(idx[q], i)] += v;
                    }
                }
            }
        }
        mat
    }
}

enum SchurFactor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn new(m: DMatrix<f64>) -> Result<Self> {
        if let Some(c) = m.clone().cholesky() {
            return Ok(SchurFactor::Chol(c));
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Numerical("singular Schur complement".into()));
        }
        Ok(SchurFactor::Lu(lu))
    }

    fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            SchurFactor::Chol(c) => Ok(c.solve(rhs)),
            SchurFactor::Lu(lu) => lu
                .solve(rhs)
                .ok_or_else(|| Error::Numerical("singular Schur complement".into())),
        }
    }
}

/// Solves the problem to relative accuracy `opts.tol`.
pub fn solve_sdp(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    let m = problem.vars.count;
    if problem.objective.len() != m {
        return Err(Error::Dimension("objective length differs from variable count".into()));
    }
    if problem.constraints.is_empty() {
        return Err(Error::Dimension("no constraints".into()));
    }

    // Each LMI is normalised so its data has unit magnitude.
    let blocks: Vec<Block> = problem
        .constraints
        .iter()
        .map(|c| {
            let g = c.as_psd();
            let scale = g.scale_estimate().max(f64::MIN_POSITIVE);
            Block {
                c: g.constant / scale,
                a: g.terms.into_iter().map(|(k, v)| (k, v / -scale)).collect(),
            }
        })
        .collect();
    let b_scale = problem.objective.amax().max(f64::MIN_POSITIVE);
    let b = -&problem.objective / b_scale;
    let n_total: usize = blocks.iter().map(|bk| bk.c.nrows()).sum();
    let solver = Solver { blocks, b, m, n_total };

    let norm_c = solver.blocks.iter().map(|bk| bk.c.norm_squared()).sum::<f64>().sqrt();
    let norm_b = solver.b.norm();

    let mut it = {
        let x: Vec<_> = solver
            .blocks
            .iter()
            .map(|bk| {
                let n = bk.c.nrows();
                let mut xi = 10.0f64.max((n as f64).sqrt());
                for (&i, ai) in &bk.a {
                    xi = xi.max((1.0 + solver.b[i].abs()) / (1.0 + ai.norm()) * (n as f64).sqrt());
                }
                DMatrix::identity(n, n) * xi
            })
            .collect();
        let s: Vec<_> = solver
            .blocks
            .iter()
            .map(|bk| {
                let n = bk.c.nrows();
                let mut eta = 10.0f64.max((n as f64).sqrt()).max(bk.c.norm());
                for ai in bk.a.values() {
                    eta = eta.max(ai.norm());
                }
                DMatrix::identity(n, n) * eta
            })
            .collect();
        Iterate { x, s, y: DVector::zeros(m) }
    };

    let mut best: Option<(f64, SdpSolution)> = None;
    for iter in 0..opts.max_iter {
        let rp = &solver.b - solver.a_op(&it.x);
        let rd = solver.dual_residual(&it);
        let pobj: f64 = solver.blocks.iter().zip(&it.x).map(|(bk, x)| dot(&bk.c, x)).sum();
        let dobj = solver.b.dot(&it.y);
        let xs: f64 = it.x.iter().zip(&it.s).map(|(x, s)| dot(x, s)).sum();
        let mu = xs / solver.n_total as f64;
        let rel_p = rp.norm() / (1.0 + norm_b);
        let rel_d = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + norm_c);
        let gap = xs.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());

        log::trace!("sdp iter {iter}: p={rel_p:.2e} d={rel_d:.2e} gap={gap:.2e} dobj={dobj:.6e}");
        let sol = SdpSolution {
            y: it.y.iter().copied().collect(),
            objective: problem.objective.dot(&it.y),
            iterations: iter,
            primal_infeasibility: rel_p,
            dual_infeasibility: rel_d,
            relative_gap: gap,
        };
        if rel_p < opts.tol && rel_d < opts.tol && gap < opts.tol {
            return Ok(sol);
        }
        let merit = rel_p.max(rel_d).max(gap);
        if best.as_ref().map_or(true, |(bm, _)| merit < *bm) {
            best = Some((merit, sol));
        }

        // A growing primal iterate with A(X) ≈ 0 and ⟨C, X⟩ < 0 certifies that
        // no y satisfies the LMIs.
        let x_norm = it.x.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
        let ax = solver.a_op(&it.x);
        if pobj < 0.0 && x_norm > 1e6 && ax.norm() <= 1e-6 * -pobj {
            return Err(Error::Infeasible(format!(
                "LMIs admit no solution (certificate ratio {:.1e})",
                ax.norm() / -pobj
            )));
        }
        // A growing dual iterate along a ray with Aᵀy ⪯ 0 means the
        // objective is unbounded below.
        let y_norm = it.y.norm();
        if dobj > 0.0 && y_norm > 1e8 {
            let aty = solver.at_op(&it.y);
            let worst = aty
                .iter()
                .map(|t| sym(t.clone()).symmetric_eigenvalues().max())
                .fold(f64::NEG_INFINITY, f64::max);
            if worst <= 1e-6 * dobj {
                return Err(Error::Infeasible("objective unbounded below".into()));
            }
        }

        let s_chol: Vec<_> = it
            .s
            .iter()
            .map(|s| s.clone().cholesky().ok_or_else(|| Error::Numerical("slack lost definiteness".into())))
            .collect::<Result<_>>()?;
        let x_chol: Vec<_> = it
            .x
            .iter()
            .map(|x| x.clone().cholesky().ok_or_else(|| Error::Numerical("primal lost definiteness".into())))
            .collect::<Result<_>>()?;
        let s_inv: Vec<DMatrix<f64>> = s_chol.iter().map(|c| sym(c.inverse())).collect();
        let schur = solver.schur(&it.x, &s_inv);
        let factor = SchurFactor::new(schur)?;

        // h = Rp − A(Rc S⁻¹) + A(X Rd S⁻¹) for a given centring term Rc.
        let direction = |rc: &[DMatrix<f64>]| -> Result<(DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
            let rc_sinv: Vec<DMatrix<f64>> = rc.iter().zip(&s_inv).map(|(r, si)| r * si).collect();
            let x_rd_sinv: Vec<DMatrix<f64>> = it
                .x
                .iter()
                .zip(&rd)
                .zip(&s_inv)
                .map(|((x, r), si)| x * r * si)
                .collect();
            let h = &rp - solver.a_op(&rc_sinv) + solver.a_op(&x_rd_sinv);
            let dy = factor.solve(&h)?;
            let at_dy = solver.at_op(&dy);
            let ds: Vec<DMatrix<f64>> = rd.iter().zip(&at_dy).map(|(r, a)| r - a).collect();
            let dx: Vec<DMatrix<f64>> = rc_sinv
                .iter()
                .zip(&it.x)
                .zip(&ds)
                .zip(&s_inv)
                .map(|(((rcs, x), d), si)| sym(rcs - x * d * si))
                .collect();
            Ok((dy, dx, ds))
        };
        let steps = |dx: &[DMatrix<f64>], ds: &[DMatrix<f64>]| -> (f64, f64) {
            let ap = x_chol
                .iter()
                .zip(dx)
                .map(|(c, d)| max_step(&c.l(), d))
                .fold(f64::INFINITY, f64::min);
            let ad = s_chol
                .iter()
                .zip(ds)
                .map(|(c, d)| max_step(&c.l(), d))
                .fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // Predictor: pure Newton step towards μ = 0.
        let rc_aff: Vec<DMatrix<f64>> = it.x.iter().zip(&it.s).map(|(x, s)| -(x * s)).collect();
        let (_, dx_a, ds_a) = direction(&rc_aff)?;
        let (ap, ad) = steps(&dx_a, &ds_a);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff: f64 = it
            .x
            .iter()
            .zip(&dx_a)
            .zip(it.s.iter().zip(&ds_a))
            .map(|((x, dx), (s, ds))| dot(&(x + dx * ap), &(s + ds * ad)))
            .sum::<f64>()
            / solver.n_total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector with second-order term.
        let rc: Vec<DMatrix<f64>> = it
            .x
            .iter()
            .zip(&it.s)
            .zip(dx_a.iter().zip(&ds_a))
            .map(|((x, s), (dx, ds))| {
                let n = x.nrows();
                DMatrix::identity(n, n) * (sigma * mu) - x * s - dx * ds
            })
            .collect();
        let (dy, dx, ds) = direction(&rc)?;
        let (ap, ad) = steps(&dx, &ds);
        let gamma = 0.9 + 0.09 * ap.min(ad).min(1.0);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);

        for (x, d) in it.x.iter_mut().zip(&dx) {
            *x = sym(&*x + d * ap);
        }
        for (s, d) in it.s.iter_mut().zip(&ds) {
            *s = sym(&*s + d * ad);
        }
        it.y += dy * ad;
    }

    match best {
        Some((merit, sol)) if merit < 1e3 * opts.tol => Ok(sol),
        Some((merit, _)) => Err(Error::Numerical(format!(
            "interior-point method stalled after {} iterations (residual {merit:.2e})",
            opts.max_iter
        ))),
        None => Err(Error::Numerical("no iterations performed".into())),
    }
    .map(|mut sol| {
        // Objective is reported in the caller's scaling.
        sol.objective = problem.objective.dot(&DVector::from_vec(sol.y.clone()));
        let _ = b_scale;
        sol
    })
}
