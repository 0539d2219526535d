//! Semidefinite programs of the bound pipeline: conic-form representation,
//! builders, mechanical dualization and a pluggable solver backend.

pub mod builders;
pub mod dualize;
pub mod dump;
pub mod ipm;
pub mod program;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Tolerances;
use crate::numerics::NumericsError;
use crate::Mat;

pub use builders::{
    build_relaxation2, build_relaxation4, build_verify, encode_stage_domination, Relaxation4,
};
pub use dualize::dualize;
pub use dump::dump_sdpblocks;
pub use ipm::InteriorPoint;
pub use program::{BlockKind, ConicProgram, ProgramBuilder, Sense};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("expression for {0} is not affine in the declared variables and parameters")]
    NotAffine(String),
    #[error("constraint {0} is not symmetric")]
    NotSymmetric(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("unknown variable {0}")]
    UnknownVar(String),
    #[error("program {0} has bilinear objective terms; freeze one factor first")]
    Bilinear(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Q is not invertible")]
    QNotInvertible,
    #[error("R is not positive definite")]
    RNotPositiveDefinite,
    #[error("finite input set is empty")]
    EmptyFiniteSet,
    #[error("backend cannot handle the program: {0}")]
    Capability(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalTrouble,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Relative primal infeasibility (constraint violation).
    pub primal: f64,
    /// Relative dual infeasibility (stationarity violation).
    pub dual: f64,
    /// Relative duality gap.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// All program coordinates.
    pub x: Vec<f64>,
    pub primal: BTreeMap<String, Mat>,
    /// Multiplier of each PSD constraint, keyed by constraint name. For
    /// maximization problems these belong to the equivalent minimization of
    /// the negated objective.
    pub duals: BTreeMap<String, Mat>,
    pub eq_duals: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub message: String,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn var(&self, name: &str) -> Option<&Mat> {
        self.primal.get(name)
    }

    pub fn dual(&self, constraint: &str) -> Option<&Mat> {
        self.duals.get(constraint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self::from(&Tolerances::default())
    }
}

impl From<&Tolerances> for SolverSettings {
    fn from(t: &Tolerances) -> Self {
        Self {
            tol: t.sdp_tol,
            max_iter: t.sdp_max_iter,
            step_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub max_block: usize,
    pub supports_equalities: bool,
}

/// A conic solver. Implementations must be deterministic for fixed inputs.
pub trait SolverBackend {
    fn name(&self) -> &'static str;
    fn capabilities(&self) -> Capabilities;
    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<SolveResult, LmiError>;
}

/// Solves `prog` with `backend` after a capability check. Every optimal
/// result is checked for weak duality; a violation downgrades the status.
pub fn solve(
    prog: &ConicProgram,
    backend: &dyn SolverBackend,
    settings: &SolverSettings,
) -> Result<SolveResult, LmiError> {
    let caps = backend.capabilities();
    if let Some(c) = prog.psd.iter().find(|c| c.map.dim > caps.max_block) {
        return Err(LmiError::Capability(format!(
            "constraint {} has dimension {} > {}",
            c.name, c.map.dim, caps.max_block
        )));
    }
    if !prog.eqs.is_empty() && !caps.supports_equalities {
        return Err(LmiError::Capability("equality constraints unsupported".into()));
    }
    let mut res = backend.solve(prog, settings)?;
    if res.status == SolveStatus::Optimal {
        let slack = 10.0 * settings.tol * (1.0 + res.objective.abs() + res.dual_objective.abs());
        let violation = match prog.objective.sense {
            Sense::Minimize => res.dual_objective - res.objective,
            Sense::Maximize => res.objective - res.dual_objective,
        };
        if !(violation <= slack) {
            res.message = format!(
                "weak duality violated by {violation:.3e} (objective {}, dual {})",
                res.objective, res.dual_objective
            );
            res.status = SolveStatus::NumericalTrouble;
        }
    }
    Ok(res)
}

/// Solves with the in-tree backend.
pub fn solve_default(prog: &ConicProgram, tol: &Tolerances) -> Result<SolveResult, LmiError> {
    solve(prog, &InteriorPoint, &SolverSettings::from(tol))
}
