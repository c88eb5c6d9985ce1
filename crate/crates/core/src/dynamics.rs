//! Healthy planar dynamics of the arm with flexible belt transmissions.
//!
//! State layout (8 entries): motor angles `θ_m`, arm angles `θ_a`, motor
//! velocities, arm velocities. The right-hand side splits exactly into a
//! linear part about an operating point and a nonlinear residual `g(x)` that
//! enters through the arm-acceleration rows.

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::RobotParams;

/// Condition number above which a mass matrix is treated as singular.
pub const MASS_CONDITION_LIMIT: f64 = 1e12;

pub type Vector8 = SVector<f64, 8>;
pub type Matrix8 = SMatrix<f64, 8, 8>;

/// Healthy robot state `(θ_m, θ_a, θ̇_m, θ̇_a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState(pub Vector8);

impl RobotState {
    pub fn new(
        motor_angles: Vector2<f64>,
        arm_angles: Vector2<f64>,
        motor_velocities: Vector2<f64>,
        arm_velocities: Vector2<f64>,
    ) -> Self {
        let mut x = Vector8::zeros();
        x.fixed_rows_mut::<2>(0).copy_from(&motor_angles);
        x.fixed_rows_mut::<2>(2).copy_from(&arm_angles);
        x.fixed_rows_mut::<2>(4).copy_from(&motor_velocities);
        x.fixed_rows_mut::<2>(6).copy_from(&arm_velocities);
        RobotState(x)
    }

    /// Rest state with arm angles `theta_a` and a relaxed transmission
    /// (`μ θ_m = θ_a`).
    pub fn at_rest(theta_a: Vector2<f64>, p: &RobotParams) -> Self {
        Self::new(theta_a / p.mu, theta_a, Vector2::zeros(), Vector2::zeros())
    }

    pub fn motor_angles(&self) -> Vector2<f64> {
        self.0.fixed_rows::<2>(0).into()
    }

    pub fn arm_angles(&self) -> Vector2<f64> {
        self.0.fixed_rows::<2>(2).into()
    }

    pub fn motor_velocities(&self) -> Vector2<f64> {
        self.0.fixed_rows::<2>(4).into()
    }

    pub fn arm_velocities(&self) -> Vector2<f64> {
        self.0.fixed_rows::<2>(6).into()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Linear part of the healthy model about an operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPlant {
    pub a: Matrix8,
    pub b: SMatrix<f64, 8, 2>,
    pub c: SMatrix<f64, 2, 8>,
    pub s: SMatrix<f64, 8, 2>,
    pub d_w: SMatrix<f64, 8, 4>,
    /// Operating point the mass matrix was frozen at.
    pub x_e: Vector8,
    /// Inverse of the frozen mass matrix `M_l`.
    pub m_l_inv: Matrix2<f64>,
}

/// Arm inertia matrix `M(θ_a)`.
pub fn mass_matrix(theta_a: &Vector2<f64>, p: &RobotParams) -> Matrix2<f64> {
    let half = ((theta_a[0] - theta_a[1]) / 2.0).cos();
    let full = (theta_a[0] - theta_a[1]).cos();
    let l2 = p.l * p.l;
    let shared = p.m3 * (l2 + p.l * p.r3 * half + 0.25 * p.r3 * p.r3) + 0.25 * p.jzz3;
    let m11 = p.m1 * p.r1 * p.r1 + p.m2 * l2 + shared + p.jzz1;
    let m22 = p.m2 * p.r2 * p.r2 + shared + p.jzz2;
    let m12 = p.m2 * p.l * p.r2 * full
        + p.m3 * (l2 * full + p.l * p.r3 * half + 0.25 * p.r3 * p.r3)
        + 0.25 * p.jzz3;
    Matrix2::new(m11, m12, m12, m22)
}

/// Coriolis and centrifugal vector `C(θ_a, θ̇_a)`.
pub fn coriolis(theta_a: &Vector2<f64>, dtheta_a: &Vector2<f64>, p: &RobotParams) -> Vector2<f64> {
    let delta = theta_a[0] - theta_a[1];
    let s_half = (delta / 2.0).sin();
    let s_full = delta.sin();
    let b = p.m3 * p.l * p.r3;
    let a = (p.m2 * p.l * p.r2 + p.m3 * p.l * p.l) * s_full + 0.75 * b * s_half;
    let (w1, w2) = (dtheta_a[0], dtheta_a[1]);
    let c1 = -0.25 * b * s_half * w1 * w1 + a * w2 * w2 + 0.5 * b * s_half * w1 * w2;
    let c2 = 0.25 * b * s_half * w2 * w2 - a * w1 * w1 - 0.5 * b * s_half * w1 * w2;
    Vector2::new(c1, c2)
}

/// Condition number of a symmetric 2×2 matrix, `None` unless positive definite.
fn spd_condition2(m: &Matrix2<f64>) -> Option<f64> {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_gap = (0.25 * (m[(0, 0)] - m[(1, 1)]).powi(2) + m[(0, 1)] * m[(1, 0)]).sqrt();
    let (lo, hi) = (mean - half_gap, mean + half_gap);
    (lo > 0.0 && lo.is_finite()).then(|| hi / lo)
}

/// Solves `M v = rhs` for a symmetric positive-definite 2×2 mass matrix.
pub(crate) fn solve_mass2(m: &Matrix2<f64>, rhs: &Vector2<f64>) -> Result<Vector2<f64>> {
    match spd_condition2(m) {
        Some(cond) if cond <= MASS_CONDITION_LIMIT => {}
        Some(cond) => return Err(Error::SingularMassMatrix { condition: cond }),
        None => return Err(Error::SingularMassMatrix { condition: f64::INFINITY }),
    }
    let chol = m
        .cholesky()
        .ok_or(Error::SingularMassMatrix { condition: f64::INFINITY })?;
    Ok(chol.solve(rhs))
}

/// Solves `M v = rhs` for a symmetric positive-definite 3×3 mass matrix.
pub(crate) fn solve_mass3(m: &Matrix3<f64>, rhs: &Vector3<f64>) -> Result<Vector3<f64>> {
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) {
        return Err(Error::SingularMassMatrix { condition: f64::INFINITY });
    }
    if hi / lo > MASS_CONDITION_LIMIT {
        return Err(Error::SingularMassMatrix { condition: hi / lo });
    }
    let chol = m
        .cholesky()
        .ok_or(Error::SingularMassMatrix { condition: f64::INFINITY })?;
    Ok(chol.solve(rhs))
}

/// Torque the transmission and friction exert against the arm,
/// `D(θ̇_a − μθ̇_m) + K(θ_a − μθ_m) + D_v θ̇_a`.
pub(crate) fn transmission_load(x: &RobotState, p: &RobotParams) -> Vector2<f64> {
    let (qm, qa, wm, wa) = (
        x.motor_angles(),
        x.arm_angles(),
        x.motor_velocities(),
        x.arm_velocities(),
    );
    p.damping() * (wa - p.mu * wm) + p.stiffness() * (qa - p.mu * qm) + p.friction() * wa
}

/// Motor acceleration `J⁻¹(τ_m − D(μ²θ̇_m − μθ̇_a) − K(μ²θ_m − μθ_a))`.
pub(crate) fn motor_acceleration(x: &RobotState, tau_m: &Vector2<f64>, p: &RobotParams) -> Vector2<f64> {
    let mu = p.mu;
    let (qm, qa, wm, wa) = (
        x.motor_angles(),
        x.arm_angles(),
        x.motor_velocities(),
        x.arm_velocities(),
    );
    let reaction = p.damping() * (mu * mu * wm - mu * wa) + p.stiffness() * (mu * mu * qm - mu * qa);
    (tau_m - reaction) / p.jm
}

/// Arm acceleration of the healthy model, `−M(θ_a)⁻¹(C + load)`.
pub(crate) fn healthy_arm_acceleration(x: &RobotState, p: &RobotParams) -> Result<Vector2<f64>> {
    let qa = x.arm_angles();
    let wa = x.arm_velocities();
    let rhs = coriolis(&qa, &wa, p) + transmission_load(x, p);
    Ok(-solve_mass2(&mass_matrix(&qa, p), &rhs)?)
}

pub(crate) fn assemble_rhs(x: &RobotState, motor_acc: Vector2<f64>, arm_acc: Vector2<f64>) -> Vector8 {
    let mut dx = Vector8::zeros();
    dx.fixed_rows_mut::<2>(0).copy_from(&x.motor_velocities());
    dx.fixed_rows_mut::<2>(2).copy_from(&x.arm_velocities());
    dx.fixed_rows_mut::<2>(4).copy_from(&motor_acc);
    dx.fixed_rows_mut::<2>(6).copy_from(&arm_acc);
    dx
}

/// Healthy state derivative `f_h(x, τ_m)`.
pub fn healthy_rhs(x: &RobotState, tau_m: &Vector2<f64>, p: &RobotParams) -> Result<Vector8> {
    let arm = healthy_arm_acceleration(x, p)?;
    Ok(assemble_rhs(x, motor_acceleration(x, tau_m, p), arm))
}

/// Default operating point: arm angles at the trajectory mean, relaxed
/// transmission, at rest.
pub fn default_operating_point(p: &RobotParams) -> RobotState {
    RobotState::at_rest(Vector2::new(4.0, 1.5), p)
}

/// Splits the healthy model into `A x + B τ + S g(x)` with the mass matrix
/// frozen at `x_e`.
pub fn linearize(p: &RobotParams, x_e: &RobotState) -> Result<LinearPlant> {
    if x_e.motor_velocities().norm() != 0.0 || x_e.arm_velocities().norm() != 0.0 {
        return Err(Error::invalid("x_e", "operating point must have zero velocities"));
    }
    let m_l = mass_matrix(&x_e.arm_angles(), p);
    match spd_condition2(&m_l) {
        Some(cond) if cond <= MASS_CONDITION_LIMIT => {}
        other => {
            return Err(Error::SingularMassMatrix {
                condition: other.unwrap_or(f64::INFINITY),
            })
        }
    }
    let m_l_inv = m_l
        .try_inverse()
        .ok_or(Error::SingularMassMatrix { condition: f64::INFINITY })?;
    let j_inv = Matrix2::from_diagonal_element(1.0 / p.jm);
    let (d, k, dv, mu) = (p.damping(), p.stiffness(), p.friction(), p.mu);
    let eye = Matrix2::identity();

    let mut a = Matrix8::zeros();
    let mut put = |r: usize, c: usize, block: Matrix2<f64>| {
        a.fixed_view_mut::<2, 2>(2 * r, 2 * c).copy_from(&block);
    };
    put(0, 2, eye);
    put(1, 3, eye);
    put(2, 0, -j_inv * k * mu * mu);
    put(2, 1, j_inv * k * mu);
    put(2, 2, -j_inv * d * mu * mu);
    put(2, 3, j_inv * d * mu);
    put(3, 0, m_l_inv * k * mu);
    put(3, 1, -m_l_inv * k);
    put(3, 2, m_l_inv * d * mu);
    put(3, 3, -m_l_inv * (d + dv));

    let mut b = SMatrix::<f64, 8, 2>::zeros();
    b.fixed_view_mut::<2, 2>(4, 0).copy_from(&j_inv);
    let mut c = SMatrix::<f64, 2, 8>::zeros();
    c.fixed_view_mut::<2, 2>(0, 0).copy_from(&eye);
    let mut s = SMatrix::<f64, 8, 2>::zeros();
    s.fixed_view_mut::<2, 2>(6, 0).copy_from(&eye);
    let mut d_w = SMatrix::<f64, 8, 4>::zeros();
    d_w.fixed_view_mut::<4, 4>(4, 0).fill_with_identity();

    Ok(LinearPlant {
        a,
        b,
        c,
        s,
        d_w,
        x_e: x_e.0,
        m_l_inv,
    })
}

/// Nonlinear residual `g(x)` left over after the linear part.
pub fn nonlinear_residual(x: &RobotState, plant: &LinearPlant, p: &RobotParams) -> Result<Vector2<f64>> {
    let load = transmission_load(x, p);
    let qa = x.arm_angles();
    let full = coriolis(&qa, &x.arm_velocities(), p) + load;
    let exact = solve_mass2(&mass_matrix(&qa, p), &full)?;
    Ok(plant.m_l_inv * load - exact)
}

/// `S v`: places a 2-vector in the arm-acceleration rows.
pub fn arm_rows(v: &Vector2<f64>) -> Vector8 {
    let mut out = Vector8::zeros();
    out.fixed_rows_mut::<2>(6).copy_from(v);
    out
}
