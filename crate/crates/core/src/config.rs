//! Default tolerance constants, threaded through every module.

use serde::{Deserialize, Serialize};

/// Name of the environment variable that selects a tolerance profile
/// (`default`, `strict` or `loose`).
pub const TOLERANCE_PROFILE_ENV: &str = "MINMAX_BOUNDS_TOL_PROFILE";

/// Tolerance configuration shared by all modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Singular values below `rank_tol * sigma_max` count as zero.
    pub rank_tol: f64,
    /// Relative asymmetry allowed on symmetric inputs before they are rejected.
    pub symmetry_tol: f64,
    /// Relative eigenvalue tolerance for PSD/PD decisions.
    pub definiteness_tol: f64,
    /// Riccati fixed-point residual, relative to `‖Q‖`.
    pub riccati_tol: f64,
    /// Iteration cap for the Isaacs value iteration.
    pub riccati_max_iter: usize,
    /// Relative margin used to encode strict LMIs as `⪰ ε·I`.
    pub sdp_margin: f64,
    /// Interior-point stopping tolerance (relative gap and residuals).
    pub sdp_tol: f64,
    /// Interior-point iteration cap.
    pub sdp_max_iter: usize,
    /// Default relative tolerance for γ bisection.
    pub gamma_rel_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: 1e-9,
            symmetry_tol: 1e-8,
            definiteness_tol: 1e-12,
            riccati_tol: 1e-11,
            riccati_max_iter: 100_000,
            sdp_margin: 0.0,
            sdp_tol: 1e-8,
            sdp_max_iter: 200,
            gamma_rel_tol: 1e-6,
        }
    }
}

impl Tolerances {
    /// Tighter settings for reference runs.
    pub fn strict() -> Self {
        Self {
            riccati_tol: 1e-13,
            sdp_tol: 1e-9,
            sdp_max_iter: 300,
            gamma_rel_tol: 1e-8,
            ..Self::default()
        }
    }

    /// Faster, looser settings for exploratory runs.
    pub fn loose() -> Self {
        Self {
            riccati_tol: 1e-9,
            riccati_max_iter: 20_000,
            sdp_tol: 1e-7,
            gamma_rel_tol: 1e-4,
            ..Self::default()
        }
    }

    /// Looks up a profile by name.
    pub fn profile(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "default" | "" => Some(Self::default()),
            "strict" => Some(Self::strict()),
            "loose" => Some(Self::loose()),
            _ => None,
        }
    }

    /// Profile named by [`TOLERANCE_PROFILE_ENV`], falling back to the default.
    pub fn from_env() -> Self {
        std::env::var(TOLERANCE_PROFILE_ENV)
            .ok()
            .and_then(|name| Self::profile(&name))
            .unwrap_or_default()
    }
}
