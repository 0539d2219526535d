use thiserror::Error;

use crate::bounds::BoundsError;
use crate::hinf::HinfError;
use crate::lmi::LmiError;
use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::sim::SimError;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: malformed files, dimension mismatches, illegal options.
    User,
    /// The numerics failed: infeasible γ, solver trouble, no convergence.
    Numerical,
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Hinf(#[from] HinfError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Model(_) => ErrorClass::User,
            Error::Numerics(e) => match e {
                NumericsError::NotSquare { .. }
                | NumericsError::Asymmetric { .. }
                | NumericsError::BadPackedLength(_) => ErrorClass::User,
                _ => ErrorClass::Numerical,
            },
            Error::Sim(SimError::Unsupported(_)) | Error::Sim(SimError::Dimension(_)) => {
                ErrorClass::User
            }
            Error::Bounds(
                BoundsError::Dimension(_)
                | BoundsError::Unsupported(_)
                | BoundsError::GammaBelowWeight { .. }
                | BoundsError::RNotPositiveDefinite
                | BoundsError::Model(_)
                | BoundsError::Lmi(LmiError::QNotInvertible),
            )
            | Error::Lmi(LmiError::QNotInvertible) => ErrorClass::User,
            _ => ErrorClass::Numerical,
        }
    }

    /// Short machine-readable tag for JSON error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Model(_) => "model",
            Error::Numerics(_) => "numerics",
            Error::Hinf(_) => "hinf",
            Error::Lmi(_) => "lmi",
            Error::Bounds(_) => "bounds",
            Error::Sim(_) => "sim",
        }
    }
}
