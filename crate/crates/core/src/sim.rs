//! Closed-loop scenario execution: setpoint tracking under PD control with
//! optional fault injection and measurement noise.

use std::io::{Read, Write};

use nalgebra::{SVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{healthy_rhs, RobotState, Vector8};
use crate::error::{Error, Result};
use crate::fault::{belt_rhs, fault_signal_belt, fault_signal_tilt, tilt_rhs, BeltFaultState, TiltAngles};
use crate::params::RobotParams;

/// Name of the noise generator, recorded alongside generated data.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9)";

/// State norm beyond which a run is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Sinusoidal arm-angle reference `centre + amplitude · sin(rate · t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setpoint {
    pub centre: [f64; 2],
    pub amplitude: f64,
    pub rate: f64,
}

impl Default for Setpoint {
    fn default() -> Self {
        Setpoint {
            centre: [4.0, 1.5],
            amplitude: 2.0,
            rate: 0.5,
        }
    }
}

impl Setpoint {
    pub fn at(&self, t: f64) -> Vector2<f64> {
        let s = self.amplitude * (self.rate * t).sin();
        Vector2::new(self.centre[0] + s, self.centre[1] + s)
    }
}

/// Default arm-angle reference `(4 + 2 sin(t/2), 1.5 + 2 sin(t/2))`.
pub fn setpoint(t: f64) -> Vector2<f64> {
    Setpoint::default().at(t)
}

/// PD law `diag(k_p) e + diag(k_d) ė` on the motor-side tracking error.
pub fn pd_control(e_s: &Vector2<f64>, de_s: &Vector2<f64>, p: &RobotParams) -> Vector2<f64> {
    Vector2::new(
        p.kp1 * e_s[0] + p.kd1 * de_s[0],
        p.kp2 * e_s[1] + p.kd2 * de_s[1],
    )
}

/// One classical Runge-Kutta step with the input held over the step.
pub fn rk4_step<const N: usize, F>(
    rhs: F,
    x: &SVector<f64, N>,
    u: &Vector2<f64>,
    dt: f64,
) -> Result<SVector<f64, N>>
where
    F: Fn(&SVector<f64, N>, &Vector2<f64>) -> Result<SVector<f64, N>>,
{
    let k1 = rhs(x, u)?;
    let k2 = rhs(&(x + k1 * (0.5 * dt)), u)?;
    let k3 = rhs(&(x + k2 * (0.5 * dt)), u)?;
    let k4 = rhs(&(x + k3 * dt), u)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Which dynamics a scenario switches to, and when.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FaultKind {
    Healthy,
    Belt { t_fault: f64 },
    Tilt { tilt: TiltAngles, t_fault: f64 },
}

impl FaultKind {
    pub fn onset(&self) -> Option<f64> {
        match *self {
            FaultKind::Healthy => None,
            FaultKind::Belt { t_fault } | FaultKind::Tilt { t_fault, .. } => Some(t_fault),
        }
    }

    /// Class index used by the classifier: healthy 0, belt 1, tilt 2.
    pub fn label(&self) -> usize {
        match self {
            FaultKind::Healthy => 0,
            FaultKind::Belt { .. } => 1,
            FaultKind::Tilt { .. } => 2,
        }
    }
}

/// A single closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub dt: f64,
    pub setpoint: Setpoint,
    pub fault: FaultKind,
    /// Amplitude of the uniform measurement noise on each encoder.
    pub noise: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(name: impl Into<String>, duration: f64, fault: FaultKind) -> Self {
        Scenario {
            name: name.into(),
            duration,
            dt: 1e-3,
            setpoint: Setpoint::default(),
            fault,
            noise: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return Err(Error::invalid("dt", format!("{} must lie in (0, 0.01]", self.dt)));
        }
        if !(self.duration > self.dt) || !self.duration.is_finite() {
            return Err(Error::invalid("duration", format!("{} must exceed dt", self.duration)));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::invalid("noise", "amplitude must be finite and nonnegative"));
        }
        if let Some(t) = self.fault.onset() {
            if !(t > 0.0 && t < self.duration) {
                return Err(Error::invalid("t_fault", format!("{t} must lie inside (0, {})", self.duration)));
            }
        }
        if let FaultKind::Tilt { tilt, .. } = self.fault {
            tilt.validate()?;
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Logged closed-loop run. Sample `k` holds the measurement at `t[k]` and the
/// input applied over `[t[k], t[k+1])`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub u: Vec<Vector2<f64>>,
    pub y: Vec<Vector2<f64>>,
    pub f_true: Vec<Vector2<f64>>,
    pub x: Vec<Vector8>,
    /// Free end-effector angle and rate once the belt has broken.
    pub effector: Vec<Option<Vector2<f64>>>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn push(&mut self, t: f64, u: Vector2<f64>, y: Vector2<f64>, f: Vector2<f64>, x: Vector8, eff: Option<Vector2<f64>>) {
        self.t.push(t);
        self.u.push(u);
        self.y.push(y);
        self.f_true.push(f);
        self.x.push(x);
        self.effector.push(eff);
    }

    /// Every `every`-th sample, starting with the first.
    pub fn decimate(&self, every: usize) -> Self {
        let every = every.max(1);
        TimeSeries {
            t: self.t.iter().step_by(every).copied().collect(),
            u: self.u.iter().step_by(every).copied().collect(),
            y: self.y.iter().step_by(every).copied().collect(),
            f_true: self.f_true.iter().step_by(every).copied().collect(),
            x: self.x.iter().step_by(every).copied().collect(),
            effector: self.effector.iter().step_by(every).copied().collect(),
        }
    }

    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = ["t", "u1", "u2", "y1", "y2", "f1", "f2"].iter().map(|s| s.to_string()).collect();
        h.extend((1..=8).map(|i| format!("x{i}")));
        h.push("theta_a3".into());
        h.push("dtheta_a3".into());
        h
    }

    /// Writes the series as CSV, preceded by a `# config_hash=` line when a
    /// hash is given.
    pub fn write_csv<W: Write>(&self, mut out: W, config_hash: Option<&str>) -> Result<()> {
        if let Some(h) = config_hash {
            writeln!(out, "# config_hash={h}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header())?;
        for k in 0..self.len() {
            let mut row = vec![
                self.t[k], self.u[k][0], self.u[k][1], self.y[k][0], self.y[k][1],
                self.f_true[k][0], self.f_true[k][1],
            ]
            .into_iter()
            .map(fmt_float)
            .collect::<Vec<_>>();
            row.extend(self.x[k].iter().map(|&v| fmt_float(v)));
            match self.effector[k] {
                Some(e) => row.extend([fmt_float(e[0]), fmt_float(e[1])]),
                None => row.extend([String::new(), String::new()]),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut ts = TimeSeries::default();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 17 {
                return Err(Error::Dimension(format!("time series row has {} fields, expected 17", rec.len())));
            }
            let v = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| Error::Config(format!("bad number {:?}: {e}", &rec[i])))
            };
            let mut x = Vector8::zeros();
            for i in 0..8 {
                x[i] = v(7 + i)?;
            }
            let eff = if rec[15].is_empty() { None } else { Some(Vector2::new(v(15)?, v(16)?)) };
            ts.push(
                v(0)?,
                Vector2::new(v(1)?, v(2)?),
                Vector2::new(v(3)?, v(4)?),
                Vector2::new(v(5)?, v(6)?),
                x,
                eff,
            );
        }
        Ok(ts)
    }
}

/// Shortest decimal representation that round-trips.
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

enum Plant {
    Healthy(RobotState),
    Belt(BeltFaultState),
    Tilt(RobotState, TiltAngles),
}

impl Plant {
    fn shared(&self) -> RobotState {
        match self {
            Plant::Healthy(x) | Plant::Tilt(x, _) => *x,
            Plant::Belt(xf) => xf.shared(),
        }
    }

    fn fault(&self, p: &RobotParams) -> Result<Vector2<f64>> {
        match self {
            Plant::Healthy(_) => Ok(Vector2::zeros()),
            Plant::Belt(xf) => fault_signal_belt(xf, p),
            Plant::Tilt(x, tilt) => fault_signal_tilt(x, tilt, p),
        }
    }

    fn step(&mut self, u: &Vector2<f64>, dt: f64, p: &RobotParams) -> Result<f64> {
        match self {
            Plant::Healthy(x) => {
                x.0 = rk4_step(|s, u| healthy_rhs(&RobotState(*s), u, p), &x.0, u, dt)?;
                Ok(x.0.norm())
            }
            Plant::Tilt(x, tilt) => {
                let tilt = *tilt;
                x.0 = rk4_step(|s, u| tilt_rhs(&RobotState(*s), u, &tilt, p), &x.0, u, dt)?;
                Ok(x.0.norm())
            }
            Plant::Belt(xf) => {
                xf.0 = rk4_step(|s, u| belt_rhs(&BeltFaultState(*s), u, p), &xf.0, u, dt)?;
                Ok(xf.0.norm())
            }
        }
    }
}

/// Runs a scenario from rest at the initial setpoint.
pub fn run_scenario(sc: &Scenario, p: &RobotParams) -> Result<TimeSeries> {
    sc.validate()?;
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let n = sc.steps();
    let mut plant = Plant::Healthy(RobotState::at_rest(sc.setpoint.at(0.0), p));
    let mut ts = TimeSeries::default();
    let mut prev_error: Option<Vector2<f64>> = None;

    for k in 0..=n {
        let t = k as f64 * sc.dt;
        if let (Plant::Healthy(x), Some(onset)) = (&plant, sc.fault.onset()) {
            if t >= onset {
                plant = match sc.fault {
                    FaultKind::Belt { .. } => Plant::Belt(BeltFaultState::from_healthy(x)),
                    FaultKind::Tilt { tilt, .. } => Plant::Tilt(*x, tilt),
                    FaultKind::Healthy => unreachable!(),
                };
            }
        }
        let x = plant.shared();
        let noise = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * sc.noise;
        let y = x.motor_angles() + noise;
        let e = y - sc.setpoint.at(t) / p.mu;
        let de = prev_error.map_or(Vector2::zeros(), |prev| (e - prev) / sc.dt);
        prev_error = Some(e);
        let u = pd_control(&e, &de, p);
        let effector = match &plant {
            Plant::Belt(xf) => Some(Vector2::new(xf.effector_angle(), xf.effector_velocity())),
            _ => None,
        };
        ts.push(t, u, y, plant.fault(p)?, x.0, effector);
        if k == n {
            break;
        }
        let norm = plant.step(&u, sc.dt, p)?;
        if !(norm <= DIVERGENCE_LIMIT) {
            return Err(Error::Diverged { t: t + sc.dt, norm });
        }
    }
    Ok(ts)
}
