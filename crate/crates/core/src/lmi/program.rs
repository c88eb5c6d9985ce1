//! The mixed H2/H∞ synthesis program and gain recovery.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::augmented::AugmentedPlant;
use super::expr::{AffineExpr, MatrixVar, VarTable};
use super::sdp::{LmiConstraint, SdpProblem, SdpSolution};
use crate::error::{Error, Result};

/// Largest condition number accepted for the Lyapunov matrix.
pub const P_CONDITION_LIMIT: f64 = 1e10;

/// The assembled program together with handles to its decision variables.
///
/// The program may be posed in scaled state coordinates `z̃ = T⁻¹ z` with
/// diagonal `T = diag(scaling)`; the decision variables then live in those
/// coordinates too.
#[derive(Debug, Clone)]
pub struct SynthesisProgram {
    pub problem: SdpProblem,
    pub p: MatrixVar,
    pub r: MatrixVar,
    pub q: MatrixVar,
    pub z: MatrixVar,
    pub lambda: MatrixVar,
    pub gamma: MatrixVar,
    pub scaling: DVector<f64>,
    pub epsilon: f64,
    pub gamma_max: f64,
    /// Data in the coordinates the program is posed in.
    pub aa: DMatrix<f64>,
    pub ca: DMatrix<f64>,
    pub da: DMatrix<f64>,
    pub cbar_a: DMatrix<f64>,
}

impl SynthesisProgram {
    /// `X(P, R, Q) = Aaᵀ P + Aaᵀ Caᵀ Rᵀ − Caᵀ Qᵀ + P Aa + R Ca Aa − Q Ca`.
    pub fn lyapunov_expr(&self) -> AffineExpr {
        let p = self.p.expr();
        let r = self.r.expr();
        let q = self.q.expr();
        let pa = &p * &self.aa;
        let rca = &(&r * &self.ca) * &self.aa;
        let qc = &q * &self.ca;
        (pa + rca - qc).sym()
    }

    /// `Y = −(P + R Ca) Da`.
    pub fn coupling_expr(&self) -> AffineExpr {
        let p = self.p.expr();
        let r = self.r.expr();
        -(&(p + &r * &self.ca) * &self.da)
    }
}

/// Decision values of the synthesis program in plant coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionValues {
    #[serde(with = "crate::dense")]
    pub p: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub r: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub q: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub z: DMatrix<f64>,
    pub lambda_bar: f64,
    pub gamma_bar: f64,
}

/// Recovered filter gains and realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterGains {
    #[serde(with = "crate::dense")]
    pub e: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub k: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub n: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub g: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub l: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub m: DMatrix<f64>,
}

/// Diagonal similarity `T` (powers of two) that balances row and column
/// norms of `a`, clamped to `[1/limit, limit]`.
pub fn balance(a: &DMatrix<f64>, limit: f64) -> DVector<f64> {
    let n = a.nrows();
    let mut d = DVector::from_element(n, 1.0);
    for _ in 0..50 {
        let mut changed = false;
        for i in 0..n {
            let mut row = 0.0;
            let mut col = 0.0;
            for j in 0..n {
                if j != i {
                    row += (a[(i, j)] * d[j] / d[i]).abs();
                    col += (a[(j, i)] * d[i] / d[j]).abs();
                }
            }
            if row == 0.0 || col == 0.0 {
                continue;
            }
            let f = (row / col).sqrt().log2().round().exp2();
            let next = (d[i] * f).clamp(1.0 / limit, limit);
            if next != d[i] {
                d[i] = next;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    d
}

/// Assembles the program in plant coordinates.
pub fn assemble_program(aug: &AugmentedPlant, epsilon: f64, gamma_max: f64) -> Result<SynthesisProgram> {
    assemble_scaled(aug, epsilon, gamma_max, 1e-7, &DVector::from_element(aug.n_z(), 1.0))
}

/// Assembles the program in coordinates scaled by `T = diag(scaling)`.
///
/// Strict inequalities are imposed with margin `strict_margin`.
pub fn assemble_scaled(
    aug: &AugmentedPlant,
    epsilon: f64,
    gamma_max: f64,
    strict_margin: f64,
    scaling: &DVector<f64>,
) -> Result<SynthesisProgram> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    if !(gamma_max > 0.0) {
        return Err(Error::invalid("gamma_max", "must be positive"));
    }
    let nz = aug.n_z();
    if scaling.len() != nz || scaling.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Dimension("scaling must be a positive vector of length n_z".into()));
    }
    let t = DMatrix::from_diagonal(scaling);
    let t_inv = DMatrix::from_diagonal(&scaling.map(|s| 1.0 / s));
    let aa = &t_inv * &aug.aa * &t;
    let ca = &aug.ca * &t;
    let da = &t_inv * &aug.da;
    let cbar_a = &aug.cbar_a * &t;

    let ny = ca.nrows();
    let nw = da.ncols();
    let ne = cbar_a.nrows();

    let mut vars = VarTable::new();
    let p = vars.symmetric("P", nz);
    let r = vars.full("R", nz, ny);
    let q = vars.full("Q", nz, ny);
    let z = vars.symmetric("Z", ne);
    let lambda = vars.scalar("lambda");
    let gamma = vars.scalar("gamma");
    let mut problem = SdpProblem::new(vars);
    problem.objective[lambda.offset] = 1.0;

    let mut prog = SynthesisProgram {
        problem: SdpProblem::new(VarTable::new()),
        p,
        r,
        q,
        z,
        lambda,
        gamma,
        scaling: scaling.clone(),
        epsilon,
        gamma_max,
        aa,
        ca,
        da,
        cbar_a,
    };

    let x = prog.lyapunov_expr();
    let y = prog.coupling_expr();
    let c = |m: &DMatrix<f64>| AffineExpr::constant(m.clone());
    let zero = AffineExpr::zeros;
    let lam = prog.lambda.expr();
    let gam = prog.gamma.expr();
    let scalar_eye = |s: &AffineExpr, n: usize| -> AffineExpr {
        let coeff = s.terms.values().next().expect("scalar variable")[(0, 0)];
        let k = *s.terms.keys().next().expect("scalar variable");
        AffineExpr {
            constant: DMatrix::zeros(n, n),
            terms: [(k, DMatrix::identity(n, n) * coeff)].into_iter().collect(),
        }
    };

    let tt = &t.transpose() * &t;
    problem.add(LmiConstraint::nsd("decay", &x + &c(&(tt * epsilon)), 0.0))?;

    let hinf = AffineExpr::block(&[
        vec![x.clone(), y.clone(), c(&prog.cbar_a.transpose())],
        vec![y.transpose(), -scalar_eye(&lam, nw), zero(nw, ne)],
        vec![c(&prog.cbar_a), zero(ne, nw), -scalar_eye(&lam, ne)],
    ])?;
    problem.add(LmiConstraint::nsd("hinf", hinf, strict_margin))?;

    let qe = prog.q.expr();
    let re = prog.r.expr();
    let h2 = AffineExpr::block(&[
        vec![x.clone(), qe.clone(), -re.clone()],
        vec![qe.transpose(), -scalar_eye(&gam, ny), zero(ny, ny)],
        vec![-re.transpose(), zero(ny, ny), -scalar_eye(&gam, ny)],
    ])?;
    problem.add(LmiConstraint::nsd("h2", h2, strict_margin))?;

    let pz = AffineExpr::block(&[
        vec![prog.p.expr(), c(&prog.cbar_a.transpose())],
        vec![c(&prog.cbar_a), prog.z.expr()],
    ])?;
    problem.add(LmiConstraint::psd("output_bound", pz, strict_margin))?;
    problem.add(LmiConstraint::psd("lyapunov_pd", prog.p.expr(), strict_margin))?;
    problem.add(LmiConstraint::psd("trace_bound", &gam - &prog.z.expr().trace(), strict_margin))?;
    problem.add(LmiConstraint::psd(
        "gamma_cap",
        &AffineExpr::constant(DMatrix::from_element(1, 1, gamma_max)) - &gam,
        0.0,
    ))?;
    problem.add(LmiConstraint::psd("lambda_positive", lam.clone(), strict_margin))?;
    problem.add(LmiConstraint::psd("gamma_positive", gam.clone(), strict_margin))?;

    prog.problem = problem;
    Ok(prog)
}

/// Maps a solution of the (possibly scaled) program back to plant
/// coordinates.
pub fn decision_values(sol: &SdpSolution, prog: &SynthesisProgram) -> Result<DecisionValues> {
    let y = DVector::from_vec(sol.y.clone());
    let p_scaled = prog.p.value(&y);
    let eig = p_scaled.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) {
        return Err(Error::Numerical(format!("Lyapunov matrix not positive definite (λ_min = {lo:e})")));
    }
    if hi / lo > P_CONDITION_LIMIT {
        return Err(Error::IllConditioned {
            condition: hi / lo,
            limit: P_CONDITION_LIMIT,
        });
    }
    let t_inv = DMatrix::from_diagonal(&prog.scaling.map(|s| 1.0 / s));
    Ok(DecisionValues {
        p: &t_inv * p_scaled * &t_inv,
        r: &t_inv * prog.r.value(&y),
        q: &t_inv * prog.q.value(&y),
        z: prog.z.value(&y),
        lambda_bar: prog.lambda.value(&y)[(0, 0)],
        gamma_bar: prog.gamma.value(&y)[(0, 0)],
    })
}

/// `E = P⁻¹R`, `K = P⁻¹Q` and the filter realization
/// `M = I + E Ca`, `N = M Aa − K Ca`, `G = M Ba`, `L = K(I + Ca E) − M Aa E`.
pub fn recover_gains(values: &DecisionValues, aug: &AugmentedPlant) -> Result<FilterGains> {
    let eig = values.p.symmetric_eigenvalues();
    if !(eig.min() > 0.0) {
        return Err(Error::Numerical("P is not positive definite".into()));
    }
    let chol = values
        .p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("P is not positive definite".into()))?;
    let e = chol.solve(&values.r);
    let k = chol.solve(&values.q);
    Ok(realize(&e, &k, aug))
}

/// Filter realization for given gains.
pub fn realize(e: &DMatrix<f64>, k: &DMatrix<f64>, aug: &AugmentedPlant) -> FilterGains {
    let nz = aug.n_z();
    let ny = aug.n_outputs();
    let m = DMatrix::identity(nz, nz) + e * &aug.ca;
    let n = &m * &aug.aa - k * &aug.ca;
    let g = &m * &aug.ba;
    let l = k * (DMatrix::identity(ny, ny) + &aug.ca * e) - &m * &aug.aa * e;
    FilterGains {
        e: e.clone(),
        k: k.clone(),
        n,
        g,
        l,
        m,
    }
}
