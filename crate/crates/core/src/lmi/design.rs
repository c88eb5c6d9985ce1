//! End-to-end synthesis, the persisted design document and its
//! independent verification.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::augmented::{build_augmented, AugmentedPlant};
use super::norms::{h2_norm, hinf_norm, spectral_abscissa, FrequencyGrid};
use super::sdp::{solve_sdp, SdpOptions};
use super::program::{assemble_scaled, balance, decision_values, recover_gains, DecisionValues, FilterGains};
use crate::dynamics::{linearize, LinearPlant, RobotState};
use crate::error::{Error, Result};
use crate::params::RobotParams;

/// Relative slack allowed when comparing swept norms with certified bounds.
pub const NORM_TOLERANCE: f64 = 1e-4;

/// Absolute slack on LMI residual eigenvalues.
pub const LMI_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisOptions {
    /// Order of the fault model (number of integrators per fault channel).
    pub order: usize,
    pub epsilon: f64,
    pub gamma_max: f64,
    pub strict_margin: f64,
    /// Bound on the diagonal state scaling; `1` disables scaling.
    pub balance_limit: f64,
    pub sdp: SdpOptions,
    pub grid: FrequencyGrid,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            order: 3,
            epsilon: 1e-4,
            gamma_max: 300.0,
            strict_margin: 1e-7,
            balance_limit: 1e3,
            sdp: SdpOptions::default(),
            grid: FrequencyGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiResidual {
    pub name: String,
    /// Largest eigenvalue of the violation; `≤ 0` when satisfied.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub spectral_abscissa: f64,
    pub hurwitz: bool,
    /// Decay rate guaranteed by the dissipation inequality, `−ε / (2 λ_max(P))`.
    pub decay_bound: f64,
    pub decay_ok: bool,
    pub lmi_residuals: Vec<LmiResidual>,
    pub lmi_ok: bool,
    pub hinf: f64,
    pub lambda_bar: f64,
    pub hinf_ok: bool,
    pub h2: f64,
    pub gamma_bar: f64,
    pub h2_ok: bool,
    pub iss_gain: f64,
    pub iss_ok: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
}

/// A synthesised filter together with everything needed to run and audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDesign {
    pub options: SynthesisOptions,
    pub params_hash: String,
    pub operating_point: Vec<f64>,
    pub scaling: Vec<f64>,
    pub aug: AugmentedPlant,
    pub values: DecisionValues,
    pub gains: FilterGains,
    pub solver: SolverStats,
    pub verification: Option<VerificationReport>,
}

impl FilterDesign {
    pub fn lambda_bar(&self) -> f64 {
        self.values.lambda_bar
    }

    pub fn gamma_bar(&self) -> f64 {
        self.values.gamma_bar
    }

    /// Input matrix of the disturbance-to-error channel, `−M D_a`.
    pub fn disturbance_input(&self) -> DMatrix<f64> {
        -(&self.gains.m * &self.aug.da)
    }

    /// Input matrix of the noise-to-error channel, `[K  −E]`.
    pub fn noise_input(&self) -> DMatrix<f64> {
        let (nz, ny) = self.gains.k.shape();
        let mut b = DMatrix::zeros(nz, 2 * ny);
        b.columns_mut(0, ny).copy_from(&self.gains.k);
        b.columns_mut(ny, ny).copy_from(&(-&self.gains.e));
        b
    }

    /// Rebuilds the linear plant the design was synthesised against.
    pub fn linear_plant(&self, p: &RobotParams) -> Result<LinearPlant> {
        if p.fingerprint() != self.params_hash {
            return Err(Error::Config(format!(
                "design was synthesised for parameters {} but {} were supplied",
                self.params_hash,
                p.fingerprint()
            )));
        }
        let x_e = RobotState(nalgebra::SVector::<f64, 8>::from_column_slice(&self.operating_point));
        linearize(p, &x_e)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn max_eig(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().max()
}

fn blocks(rows: &[Vec<&DMatrix<f64>>]) -> DMatrix<f64> {
    let h: Vec<usize> = rows.iter().map(|r| r[0].nrows()).collect();
    let w: Vec<usize> = rows[0].iter().map(|b| b.ncols()).collect();
    let mut out = DMatrix::zeros(h.iter().sum(), w.iter().sum());
    let mut r0 = 0;
    for (i, row) in rows.iter().enumerate() {
        let mut c0 = 0;
        for (j, b) in row.iter().enumerate() {
            out.view_mut((r0, c0), (h[i], w[j])).copy_from(*b);
            c0 += w[j];
        }
        r0 += h[i];
    }
    out
}

/// Evaluates every synthesis inequality directly from the design's
/// matrices, in plant coordinates.
pub fn lmi_residuals(values: &DecisionValues, aug: &AugmentedPlant, epsilon: f64, gamma_max: f64) -> Vec<LmiResidual> {
    let (p, r, q, z) = (&values.p, &values.r, &values.q, &values.z);
    let (aa, ca, da, cba) = (&aug.aa, &aug.ca, &aug.da, &aug.cbar_a);
    let nz = aa.nrows();
    let (ny, nw, ne) = (ca.nrows(), da.ncols(), cba.nrows());
    let x = aa.transpose() * p + aa.transpose() * ca.transpose() * r.transpose() - ca.transpose() * q.transpose()
        + p * aa
        + r * ca * aa
        - q * ca;
    let y = -((p + r * ca) * da);
    let (lam, gam) = (values.lambda_bar, values.gamma_bar);
    let eye = |n: usize, s: f64| DMatrix::<f64>::identity(n, n) * s;
    let zeros = |a: usize, b: usize| DMatrix::<f64>::zeros(a, b);

    let hinf = blocks(&[
        vec![&x, &y, &cba.transpose()],
        vec![&y.transpose(), &eye(nw, -lam), &zeros(nw, ne)],
        vec![cba, &zeros(ne, nw), &eye(ne, -lam)],
    ]);
    let h2 = blocks(&[
        vec![&x, q, &(-r)],
        vec![&q.transpose(), &eye(ny, -gam), &zeros(ny, ny)],
        vec![&(-r.transpose()), &zeros(ny, ny), &eye(ny, -gam)],
    ]);
    let pz = blocks(&[vec![p, &cba.transpose()], vec![cba, z]]);
    vec![
        ("decay", max_eig(&(&x + eye(nz, epsilon)))),
        ("hinf", max_eig(&hinf)),
        ("h2", max_eig(&h2)),
        ("output_bound", max_eig(&(-pz))),
        ("lyapunov_pd", max_eig(&(-p))),
        ("trace_bound", z.trace() - gam),
        ("gamma_cap", gam - gamma_max),
        ("lambda_positive", -lam),
        ("gamma_positive", -gam),
    ]
    .into_iter()
    .map(|(n, v)| LmiResidual {
        name: n.into(),
        residual: v,
    })
    .collect()
}

/// Checks the design's claims independently of the solver.
pub fn verify_design(design: &FilterDesign) -> Result<VerificationReport> {
    let gains = &design.gains;
    let aug = &design.aug;
    let eps = design.options.epsilon;
    let abscissa = spectral_abscissa(&gains.n);
    let hurwitz = abscissa < 0.0;
    let p_max = design.values.p.symmetric_eigenvalues().max();
    let decay_bound = -eps / (2.0 * p_max);
    let residuals = lmi_residuals(&design.values, aug, eps, design.options.gamma_max);
    let lmi_ok = residuals.iter().all(|r| r.residual <= LMI_TOLERANCE);

    let (hinf, h2) = if hurwitz {
        (
            hinf_norm(&gains.n, &design.disturbance_input(), &aug.cbar_a, &design.options.grid)?,
            h2_norm(&gains.n, &design.noise_input(), &aug.cbar_a)?,
        )
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let (lam, gam) = (design.values.lambda_bar, design.values.gamma_bar);

    let nz = aug.n_z();
    let ny = aug.n_outputs();
    let nw = aug.da.ncols();
    let mut stacked = DMatrix::zeros(nz, nw + 2 * ny);
    stacked.columns_mut(0, nw).copy_from(&(&gains.m * &aug.da));
    stacked.columns_mut(nw, ny).copy_from(&(-&gains.k));
    stacked.columns_mut(nw + ny, ny).copy_from(&gains.e);
    let iss_gain = 2.0 * (&design.values.p * stacked).singular_values().max() / eps;

    let hinf_ok = hinf <= lam * (1.0 + NORM_TOLERANCE);
    let h2_ok = h2 <= gam * (1.0 + NORM_TOLERANCE);
    let decay_ok = abscissa <= decay_bound;
    let iss_ok = iss_gain.is_finite() && iss_gain > 0.0;
    Ok(VerificationReport {
        spectral_abscissa: abscissa,
        hurwitz,
        decay_bound,
        decay_ok,
        lmi_residuals: residuals,
        lmi_ok,
        hinf,
        lambda_bar: lam,
        hinf_ok,
        h2,
        gamma_bar: gam,
        h2_ok,
        iss_gain,
        iss_ok,
        passed: hurwitz && decay_ok && lmi_ok && hinf_ok && h2_ok && iss_ok,
    })
}

/// Synthesises a filter for an augmented plant.
pub fn synthesize_augmented(aug: &AugmentedPlant, opts: &SynthesisOptions) -> Result<(DecisionValues, FilterGains, SolverStats, Vec<f64>)> {
    let scaling = if opts.balance_limit > 1.0 {
        balance(&aug.aa, opts.balance_limit)
    } else {
        DVector::from_element(aug.n_z(), 1.0)
    };
    let prog = assemble_scaled(aug, opts.epsilon, opts.gamma_max, opts.strict_margin, &scaling)?;
    let sol = solve_sdp(&prog.problem, &opts.sdp)?;
    let values = decision_values(&sol, &prog)?;
    let gains = recover_gains(&values, aug)?;
    let stats = SolverStats {
        iterations: sol.iterations,
        primal_infeasibility: sol.primal_infeasibility,
        dual_infeasibility: sol.dual_infeasibility,
        relative_gap: sol.relative_gap,
    };
    Ok((values, gains, stats, scaling.iter().copied().collect()))
}

/// Linearises the robot at `x_e`, synthesises the filter and verifies it.
pub fn synthesize(p: &RobotParams, x_e: &RobotState, opts: &SynthesisOptions) -> Result<FilterDesign> {
    let plant = linearize(p, x_e)?;
    let aug = build_augmented(&plant, opts.order)?;
    let (values, gains, solver, scaling) = synthesize_augmented(&aug, opts)?;
    let mut design = FilterDesign {
        options: *opts,
        params_hash: p.fingerprint(),
        operating_point: x_e.0.iter().copied().collect(),
        scaling,
        aug,
        values,
        gains,
        solver,
        verification: None,
    };
    design.verification = Some(verify_design(&design)?);
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::realize;

    #[test]
    fn unstable_filter_fails_hurwitz_check() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let aug = AugmentedPlant::from_parts(&(-&one), &DMatrix::zeros(1, 1), &one, &one, &one, 1).unwrap();
        // Zero gains leave the integrator of the fault model marginal, and a
        // positive K on the measured state destabilises it.
        let e = DMatrix::zeros(2, 1);
        let k = DMatrix::from_row_slice(2, 1, &[-3.0, 0.0]);
        let gains = realize(&e, &k, &aug);
        let design = FilterDesign {
            options: SynthesisOptions { order: 1, ..Default::default() },
            params_hash: String::new(),
            operating_point: vec![],
            scaling: vec![1.0; 2],
            values: DecisionValues {
                p: DMatrix::identity(2, 2),
                r: e.clone(),
                q: k.clone(),
                z: DMatrix::identity(2, 2),
                lambda_bar: 1.0,
                gamma_bar: 1.0,
            },
            aug,
            gains,
            solver: SolverStats {
                iterations: 0,
                primal_infeasibility: 0.0,
                dual_infeasibility: 0.0,
                relative_gap: 0.0,
            },
            verification: None,
        };
        let report = verify_design(&design).unwrap();
        assert!(!report.hurwitz);
        assert!(!report.passed);
        assert!(report.iss_gain > 0.0 && report.iss_gain.is_finite());
    }
}
