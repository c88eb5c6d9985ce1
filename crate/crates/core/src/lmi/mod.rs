//! Synthesis of the fault-estimation filter and independent checks of the
//! guarantees it claims.

mod augmented;
mod design;
pub mod expr;
pub mod norms;
pub mod sdp;
pub mod program;

pub use augmented::{build_augmented, AugmentedPlant};
pub use design::{
    lmi_residuals, synthesize, synthesize_augmented, verify_design, FilterDesign, LmiResidual, SolverStats,
    SynthesisOptions, VerificationReport, LMI_TOLERANCE, NORM_TOLERANCE,
};
pub use norms::{h2_norm, hinf_norm, lyapunov, spectral_abscissa, FrequencyGrid};
pub use sdp::{solve_sdp, LmiConstraint, SdpOptions, SdpProblem, SdpSolution, Sense};
pub use program::{
    assemble_scaled, assemble_program, balance, decision_values, recover_gains, realize, DecisionValues,
    FilterGains, SynthesisProgram,
};
