//! Fault detection, isolation and estimation for a two-link wafer-handling
//! robot with belt transmissions.
//!
//! The crate is organised as a pipeline:
//!
//! - [`dynamics`] and [`fault`]: healthy, broken-belt and tilted motion models.
//! - [`sim`]: closed-loop scenarios under PD tracking control.
//! - [`lmi`]: mixed H2/H∞ synthesis of a fault-estimation filter through a
//!   semidefinite program, plus independent norm checks.
//! - [`filter`]: running the synthesised filter on logged data.
//! - [`isolation`]: window features, SVM training and the detection metrics.
//! - [`harness`]: configuration, parameter grids and the end-to-end pipeline.

pub mod dynamics;
mod dense;
pub mod error;
pub mod fault;
pub mod harness;
pub mod isolation;
pub mod filter;
pub mod lmi;
pub mod params;
pub mod sim;

pub use error::{Error, Result};
pub use params::RobotParams;

/// The book chapters, compiled and run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    pub mod dynamics {}
    #[doc = include_str!("../../../book/src/faults.md")]
    pub mod faults {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub mod simulation {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    pub mod synthesis {}
    #[doc = include_str!("../../../book/src/filter.md")]
    pub mod filter {}
    #[doc = include_str!("../../../book/src/isolation.md")]
    pub mod isolation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    pub mod pipeline {}
}
