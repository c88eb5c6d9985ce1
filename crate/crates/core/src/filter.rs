//! Running the synthesised filter on logged input/output data.
//!
//! The filter state obeys `ż = N z + G u + L y` and the fault estimate is
//! `f̂ = C̄(z − E y) − g(V_a(z − E y))`, with `g` the nonlinear residual of
//! the robot model.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SVector, Vector2};

use crate::dynamics::{nonlinear_residual, LinearPlant, RobotState};
use crate::error::{Error, Result};
use crate::lmi::FilterDesign;
use crate::params::RobotParams;
use crate::sim::{fmt_float, TimeSeries};

/// Bound on `h · ρ(N)` for each integration substep.
pub const SUBSTEP_STIFFNESS: f64 = 0.5;

/// The pieces of a design needed online.
#[derive(Debug, Clone)]
pub struct FilterRealization {
    pub n: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub cbar: DMatrix<f64>,
    pub va: DMatrix<f64>,
}

impl From<&FilterDesign> for FilterRealization {
    fn from(d: &FilterDesign) -> Self {
        FilterRealization {
            n: d.gains.n.clone(),
            g: d.gains.g.clone(),
            l: d.gains.l.clone(),
            e: d.gains.e.clone(),
            cbar: d.aug.cbar.clone(),
            va: d.aug.va.clone(),
        }
    }
}

impl FilterRealization {
    /// Number of RK4 substeps per sample keeping the fastest filter mode
    /// resolved.
    pub fn substeps(&self, dt: f64) -> usize {
        let rho = self
            .n
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max);
        ((dt * rho / SUBSTEP_STIFFNESS).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct FilterState {
    pub z: DVector<f64>,
    pub dt: f64,
    pub substeps: usize,
}

impl FilterState {
    pub fn new(filter: &FilterRealization, dt: f64) -> Self {
        FilterState {
            z: DVector::zeros(filter.n.nrows()),
            dt,
            substeps: filter.substeps(dt),
        }
    }

    /// Advances one sample. The input is held over the step and the
    /// measurement is interpolated linearly from `y_start` to `y_end`.
    pub fn step(&mut self, f: &FilterRealization, u: &Vector2<f64>, y_start: &Vector2<f64>, y_end: &Vector2<f64>) {
        let h = self.dt / self.substeps as f64;
        let gu = &f.g * DVector::from_column_slice(u.as_slice());
        let ly0 = &f.l * DVector::from_column_slice(y_start.as_slice());
        let ly1 = &f.l * DVector::from_column_slice(y_end.as_slice());
        let forcing = |s: f64| &gu + &ly0 + (&ly1 - &ly0) * s;
        let rhs = |z: &DVector<f64>, s: f64| &f.n * z + forcing(s);
        for i in 0..self.substeps {
            let s0 = i as f64 / self.substeps as f64;
            let ds = 1.0 / self.substeps as f64;
            let k1 = rhs(&self.z, s0);
            let k2 = rhs(&(&self.z + &k1 * (0.5 * h)), s0 + 0.5 * ds);
            let k3 = rhs(&(&self.z + &k2 * (0.5 * h)), s0 + 0.5 * ds);
            let k4 = rhs(&(&self.z + &k3 * h), s0 + ds);
            self.z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
}

/// `f̂ = C̄(z − E y) − g(V_a(z − E y))`.
pub fn fault_estimate(
    f: &FilterRealization,
    z: &DVector<f64>,
    y: &Vector2<f64>,
    p: &RobotParams,
    plant: &LinearPlant,
) -> Result<Vector2<f64>> {
    let za = z - &f.e * DVector::from_column_slice(y.as_slice());
    let lumped = &f.cbar * &za;
    let x = SVector::<f64, 8>::from_column_slice((&f.va * &za).as_slice());
    let g = nonlinear_residual(&RobotState(x), plant, p)?;
    Ok(Vector2::new(lumped[0], lumped[1]) - g)
}

/// Fault estimates alongside the true fault signal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateSeries {
    pub t: Vec<f64>,
    pub fhat: Vec<Vector2<f64>>,
    pub f: Vec<Vector2<f64>>,
}

impl EstimateSeries {
    /// `‖f̂ − f‖ / ‖f‖` in RMS over samples with `t ≥ from`.
    pub fn normalized_rms_error(&self, from: f64) -> f64 {
        let mut err = 0.0;
        let mut sig = 0.0;
        for k in 0..self.t.len() {
            if self.t[k] >= from {
                err += (self.fhat[k] - self.f[k]).norm_squared();
                sig += self.f[k].norm_squared();
            }
        }
        (err / sig).sqrt()
    }

    /// Every `every`-th sample, starting with the first.
    pub fn decimate(&self, every: usize) -> Self {
        let every = every.max(1);
        EstimateSeries {
            t: self.t.iter().step_by(every).copied().collect(),
            fhat: self.fhat.iter().step_by(every).copied().collect(),
            f: self.f.iter().step_by(every).copied().collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W, config_hash: Option<&str>) -> Result<()> {
        if let Some(h) = config_hash {
            writeln!(out, "# config_hash={h}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "f1", "f2", "fhat1", "fhat2"])?;
        for k in 0..self.t.len() {
            w.write_record([
                fmt_float(self.t[k]),
                fmt_float(self.f[k][0]),
                fmt_float(self.f[k][1]),
                fmt_float(self.fhat[k][0]),
                fmt_float(self.fhat[k][1]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut es = EstimateSeries::default();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Dimension(format!("estimate row has {} fields, expected 5", rec.len())));
            }
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("bad number {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            es.t.push(v[0]);
            es.f.push(Vector2::new(v[1], v[2]));
            es.fhat.push(Vector2::new(v[3], v[4]));
        }
        Ok(es)
    }
}

/// Runs the filter over a logged series starting from `z = 0`.
pub fn run_filter(design: &FilterDesign, ts: &TimeSeries, p: &RobotParams, plant: &LinearPlant) -> Result<EstimateSeries> {
    run_realization(&FilterRealization::from(design), ts, p, plant)
}

pub fn run_realization(
    f: &FilterRealization,
    ts: &TimeSeries,
    p: &RobotParams,
    plant: &LinearPlant,
) -> Result<EstimateSeries> {
    let n = ts.len();
    if ts.u.len() != n || ts.y.len() != n || ts.f_true.len() != n {
        return Err(Error::Dimension("time series columns differ in length".into()));
    }
    if n < 2 {
        return Err(Error::Dimension("time series needs at least two samples".into()));
    }
    let dt = ts.t[1] - ts.t[0];
    let mut state = FilterState::new(f, dt);
    let mut out = EstimateSeries {
        t: Vec::with_capacity(n),
        fhat: Vec::with_capacity(n),
        f: Vec::with_capacity(n),
    };
    for k in 0..n {
        out.t.push(ts.t[k]);
        out.fhat.push(fault_estimate(f, &state.z, &ts.y[k], p, plant)?);
        out.f.push(ts.f_true[k]);
        if k + 1 < n {
            state.step(f, &ts.u[k], &ts.y[k], &ts.y[k + 1]);
        }
    }
    Ok(out)
}
