//! Faulty motion models: a broken end-effector belt, which frees the third
//! link, and a constant out-of-plane tilt of the links.
//!
//! Both enter the healthy model as an additive term in the arm-acceleration
//! rows, `f_faulty = f_h + S f_j`.

use nalgebra::{Matrix2, Matrix3, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    assemble_rhs, healthy_arm_acceleration, motor_acceleration, solve_mass2, solve_mass3,
    transmission_load, RobotState, Vector8,
};
use crate::error::{Error, Result};
use crate::params::RobotParams;

pub type Vector10 = SVector<f64, 10>;

/// State of the arm after the end-effector belt broke: the healthy state
/// followed by the free end-effector angle and its rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeltFaultState(pub Vector10);

impl BeltFaultState {
    /// Extends a healthy state with the end-effector at its constrained
    /// position, the mean of the two arm angles.
    pub fn from_healthy(x: &RobotState) -> Self {
        let qa = x.arm_angles();
        let wa = x.arm_velocities();
        let mut xf = Vector10::zeros();
        xf.fixed_rows_mut::<8>(0).copy_from(&x.0);
        xf[8] = 0.5 * (qa[0] + qa[1]);
        xf[9] = 0.5 * (wa[0] + wa[1]);
        BeltFaultState(xf)
    }

    pub fn shared(&self) -> RobotState {
        RobotState(self.0.fixed_rows::<8>(0).into())
    }

    pub fn effector_angle(&self) -> f64 {
        self.0[8]
    }

    pub fn effector_velocity(&self) -> f64 {
        self.0[9]
    }
}

/// Tilt of the upper arm, lower arm and end-effector about their body
/// y-axes, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TiltAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl TiltAngles {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let tilt = TiltAngles { alpha, beta, gamma };
        tilt.validate()?;
        Ok(tilt)
    }

    pub fn from_degrees(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        Self::new(alpha.to_radians(), beta.to_radians(), gamma.to_radians())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.abs() < std::f64::consts::FRAC_PI_2) {
                return Err(Error::invalid(name, format!("tilt {v} rad must lie inside (-pi/2, pi/2)")));
            }
        }
        Ok(())
    }

    pub fn to_degrees(&self) -> [f64; 3] {
        [self.alpha.to_degrees(), self.beta.to_degrees(), self.gamma.to_degrees()]
    }

    fn cosines(&self) -> (f64, f64, f64) {
        (self.alpha.cos(), self.beta.cos(), self.gamma.cos())
    }
}

/// Inertia of the three free links after the belt broke.
pub fn belt_mass_matrix(theta_a: &Vector2<f64>, theta_a3: f64, p: &RobotParams) -> Matrix3<f64> {
    let l2 = p.l * p.l;
    let m11 = p.m1 * p.r1 * p.r1 + (p.m2 + p.m3) * l2 + p.jzz1;
    let m22 = p.m2 * p.r2 * p.r2 + p.m3 * l2 + p.jzz2;
    let m33 = p.m3 * p.r3 * p.r3 + p.jzz3;
    let m12 = (p.m2 * p.r2 + p.m3 * p.l) * p.l * (theta_a[0] - theta_a[1]).cos();
    let m13 = p.m3 * p.l * p.r3 * (theta_a[0] - theta_a3).cos();
    let m23 = p.m3 * p.l * p.r3 * (theta_a[1] - theta_a3).cos();
    Matrix3::new(m11, m12, m13, m12, m22, m23, m13, m23, m33)
}

/// Centrifugal vector of the three free links.
pub fn belt_coriolis(
    theta_a: &Vector2<f64>,
    dtheta_a: &Vector2<f64>,
    theta_a3: f64,
    dtheta_a3: f64,
    p: &RobotParams,
) -> Vector3<f64> {
    let s12 = (theta_a[0] - theta_a[1]).sin();
    let s13 = (theta_a[0] - theta_a3).sin();
    let s23 = (theta_a[1] - theta_a3).sin();
    let inner = p.m3 * p.l * p.l + p.m2 * p.r2 * p.l;
    let outer = p.m3 * p.r3 * p.l;
    let (w1, w2, w3) = (dtheta_a[0], dtheta_a[1], dtheta_a3);
    Vector3::new(
        inner * w2 * w2 * s12 + outer * w3 * w3 * s13,
        -inner * w1 * w1 * s12 + outer * w3 * w3 * s23,
        -outer * (w1 * w1 * s13 + w2 * w2 * s23),
    )
}

fn belt_link_acceleration(xf: &BeltFaultState, p: &RobotParams) -> Result<Vector3<f64>> {
    let x = xf.shared();
    let qa = x.arm_angles();
    let load = transmission_load(&x, p);
    let rhs = belt_coriolis(&qa, &x.arm_velocities(), xf.effector_angle(), xf.effector_velocity(), p)
        + Vector3::new(load[0], load[1], 0.0);
    Ok(-solve_mass3(&belt_mass_matrix(&qa, xf.effector_angle(), p), &rhs)?)
}

/// State derivative of the broken-belt model.
pub fn belt_rhs(xf: &BeltFaultState, tau_m: &Vector2<f64>, p: &RobotParams) -> Result<Vector10> {
    let x = xf.shared();
    let acc = belt_link_acceleration(xf, p)?;
    let head = assemble_rhs(&x, motor_acceleration(&x, tau_m, p), acc.fixed_rows::<2>(0).into());
    let mut dx = Vector10::zeros();
    dx.fixed_rows_mut::<8>(0).copy_from(&head);
    dx[8] = xf.effector_velocity();
    dx[9] = acc[2];
    Ok(dx)
}

/// Additive fault `f₁` the broken belt induces on the arm accelerations.
pub fn fault_signal_belt(xf: &BeltFaultState, p: &RobotParams) -> Result<Vector2<f64>> {
    let acc = belt_link_acceleration(xf, p)?;
    let healthy = healthy_arm_acceleration(&xf.shared(), p)?;
    Ok(Vector2::new(acc[0], acc[1]) - healthy)
}

/// Inertia of the tilted arm. Equals [`mass_matrix`] for zero tilt.
pub fn tilt_mass_matrix(theta_a: &Vector2<f64>, tilt: &TiltAngles, p: &RobotParams) -> Matrix2<f64> {
    let (a, b, g) = tilt.cosines();
    let delta = theta_a[0] - theta_a[1];
    let (half, full) = ((delta / 2.0).cos(), delta.cos());
    let l2 = p.l * p.l;
    let effector = 0.25 * p.jzz3 + 0.25 * p.m3 * p.r3 * p.r3 * g * g;
    let m11 = p.jzz1
        + effector
        + ((p.m2 + p.m3) * l2 + p.m1 * p.r1 * p.r1) * a * a
        + p.m3 * p.l * p.r3 * a * g * half;
    let m12 = effector
        + (p.m3 * l2 + p.m2 * p.l * p.r2) * a * b * full
        + 0.5 * p.m3 * p.l * p.r3 * (a + b) * g * half;
    let m22 = p.jzz2
        + effector
        + (p.m3 * l2 + p.m2 * p.r2 * p.r2) * b * b
        + p.m3 * p.l * p.r3 * b * g * half;
    Matrix2::new(m11, m12, m12, m22)
}

/// Coriolis and centrifugal vector of the tilted arm.
pub fn tilt_coriolis(
    theta_a: &Vector2<f64>,
    dtheta_a: &Vector2<f64>,
    tilt: &TiltAngles,
    p: &RobotParams,
) -> Vector2<f64> {
    let (a, b, g) = tilt.cosines();
    let delta = theta_a[0] - theta_a[1];
    let (sh, s) = ((delta / 2.0).sin(), delta.sin());
    let k = p.m3 * p.l * p.r3 * g * sh;
    let link = (p.m3 * p.l * p.l + p.m2 * p.l * p.r2) * a * b * s;
    let (w1, w2) = (dtheta_a[0], dtheta_a[1]);
    let c1 = -0.25 * k * a * w1 * w1 + (link + (0.25 * a + 0.5 * b) * k) * w2 * w2 + 0.5 * k * a * w1 * w2;
    let c2 = 0.25 * k * b * w2 * w2 - (link + (0.5 * a + 0.25 * b) * k) * w1 * w1 - 0.5 * k * b * w1 * w2;
    Vector2::new(c1, c2)
}

fn tilt_arm_acceleration(x: &RobotState, tilt: &TiltAngles, p: &RobotParams) -> Result<Vector2<f64>> {
    let qa = x.arm_angles();
    let rhs = tilt_coriolis(&qa, &x.arm_velocities(), tilt, p) + transmission_load(x, p);
    Ok(-solve_mass2(&tilt_mass_matrix(&qa, tilt, p), &rhs)?)
}

/// State derivative of the tilted arm.
pub fn tilt_rhs(x: &RobotState, tau_m: &Vector2<f64>, tilt: &TiltAngles, p: &RobotParams) -> Result<Vector8> {
    let arm = tilt_arm_acceleration(x, tilt, p)?;
    Ok(assemble_rhs(x, motor_acceleration(x, tau_m, p), arm))
}

/// Additive fault `f₂` the tilt induces on the arm accelerations.
pub fn fault_signal_tilt(x: &RobotState, tilt: &TiltAngles, p: &RobotParams) -> Result<Vector2<f64>> {
    Ok(tilt_arm_acceleration(x, tilt, p)? - healthy_arm_acceleration(x, p)?)
}
