//! Certified lower bounds for discrete-time, discounted min-max control
//! problems with input constraints and bounded disturbances.
//!
//! The pipeline associates an unconstrained H∞-type game with the
//! constrained problem, solves it through a generalized Riccati recursion
//! and a semidefinite program, tunes the associated stage cost by
//! alternating SDPs, and verifies the set of initial states on which the
//! resulting bound holds.
//!
//! Module map:
//!
//! * [`model`]: problem data, validation, random generation, JSON I/O.
//! * [`numerics`]: dense symmetric linear algebra helpers.
//! * [`hinf`]: Isaacs/Riccati value iteration, gains, optimal γ.
//! * [`lmi`]: conic programs, builders, mechanical dualization and the
//!   in-tree interior-point backend.
//! * [`bounds`]: basic and optimized bounds, certification, region
//!   verification.
//! * [`sim`]: closed-loop rollouts, adversaries, grid DP oracle, gap
//!   reports.

pub mod bounds;
pub mod config;
pub mod error;
pub mod hinf;
pub mod lmi;
pub mod model;
pub mod numerics;
pub mod sim;

pub use bounds::{
    basic_bound, certify, ellipsoid_inner, evaluate_bound, optimize_bound, verify_initial_state,
    AlternationLog, BoundCertificate, Provenance, RegionCertificate,
};
pub use config::Tolerances;
pub use error::{Error, ErrorClass};
pub use hinf::{ClosedLoop, RiccatiSolution};
pub use lmi::{ConicProgram, SolveResult, SolveStatus};
pub use model::{DisturbanceEllipsoid, InputConstraint, ProblemInstance, ValidationReport};

/// Dense real matrix used throughout the crate.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense real vector used throughout the crate.
pub type Vec64 = nalgebra::DVector<f64>;
