//! Physical constants of the two-link arm, its belt transmissions and the
//! tracking controller.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Physical and controller parameters of the robot.
///
/// Lengths in metres, masses in kilograms, inertias in kg·m², stiffness in
/// N·m/rad and damping in N·m·s/rad. `mu` is the transmission ratio mapping
/// motor angle to arm angle (`θ_a ≈ μ θ_m` when the transmission is relaxed).
///
/// The controller gains act on the motor-side tracking error `y − s`, so a
/// stabilising loop has negative gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "R3")]
    pub r3: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "Jzz1")]
    pub jzz1: f64,
    #[serde(rename = "Jzz2")]
    pub jzz2: f64,
    #[serde(rename = "Jzz3")]
    pub jzz3: f64,
    #[serde(rename = "Jm")]
    pub jm: f64,
    pub cr1: f64,
    pub cr2: f64,
    pub dr1: f64,
    pub dr2: f64,
    pub dv: f64,
    pub mu: f64,
    pub kp1: f64,
    pub kp2: f64,
    pub kd1: f64,
    pub kd2: f64,
}

impl Default for RobotParams {
    /// A desk-scale arm: 30 cm links, a 1:50 reduction and belt
    /// transmissions whose flexible modes sit near 28 and 41 Hz with a few
    /// percent damping. The PD loop closes at roughly 20 rad/s on the motor
    /// side, well below the transmission modes.
    fn default() -> Self {
        RobotParams {
            m1: 3.0,
            m2: 2.0,
            m3: 1.0,
            r1: 0.15,
            r2: 0.15,
            r3: 0.1,
            l: 0.3,
            jzz1: 0.03,
            jzz2: 0.02,
            jzz3: 0.005,
            jm: 1e-4,
            cr1: 5000.0,
            cr2: 5000.0,
            dr1: 3.0,
            dr2: 3.0,
            dv: 0.5,
            mu: 0.02,
            kp1: -0.1,
            kp2: -0.1,
            kd1: -0.0073,
            kd2: -0.0073,
        }
    }
}

impl RobotParams {
    /// Checks the sign invariants: every physical constant strictly positive
    /// and finite, controller gains finite.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("m3", self.m3),
            ("R1", self.r1),
            ("R2", self.r2),
            ("R3", self.r3),
            ("L", self.l),
            ("Jzz1", self.jzz1),
            ("Jzz2", self.jzz2),
            ("Jzz3", self.jzz3),
            ("Jm", self.jm),
            ("cr1", self.cr1),
            ("cr2", self.cr2),
            ("dr1", self.dr1),
            ("dr2", self.dr2),
            ("dv", self.dv),
            ("mu", self.mu),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {value}")));
            }
        }
        let gains = [
            ("kp1", self.kp1),
            ("kp2", self.kp2),
            ("kd1", self.kd1),
            ("kd2", self.kd2),
        ];
        for (name, value) in gains {
            if !value.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Diagonal motor inertia matrix `J`.
    pub fn motor_inertia(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal_element(self.jm)
    }

    /// Diagonal transmission damping `D`.
    pub fn damping(&self) -> Matrix2<f64> {
        Matrix2::new(self.dr1, 0.0, 0.0, self.dr2)
    }

    /// Diagonal transmission stiffness `K`.
    pub fn stiffness(&self) -> Matrix2<f64> {
        Matrix2::new(self.cr1, 0.0, 0.0, self.cr2)
    }

    /// Diagonal viscous arm friction `D_v`.
    pub fn friction(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal_element(self.dv)
    }

    /// Short SHA-256 fingerprint of the parameter set, used to tie a
    /// synthesized design to the plant it was computed for.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("parameters serialize");
        short_hash(json.as_bytes())
    }
}

/// First 16 hex digits of the SHA-256 digest of `bytes`.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameters_are_valid() {
        RobotParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_nonpositive_physics() {
        let p = RobotParams {
            cr2: 0.0,
            ..RobotParams::default()
        };
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("cr2"), "{err}");
        let p = RobotParams {
            mu: -0.02,
            ..RobotParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn toml_section_uses_symbol_names() {
        let p = RobotParams::default();
        let text = toml::to_string(&p).unwrap();
        assert!(text.contains("Jzz3 = 0.005"), "{text}");
        assert!(text.contains("L = 0.3"));
        let back: RobotParams = toml::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn fingerprint_tracks_values() {
        let a = RobotParams::default();
        let b = RobotParams { m3: 1.1, ..a };
        assert_eq!(a.fingerprint(), RobotParams::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }
}
