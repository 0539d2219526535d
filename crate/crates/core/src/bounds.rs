//! Lower bounds on the constrained min-max value from unconstrained games.
//!
//! If `uᵀRu − γ²wᵀw + s ≤ uᵀR0u − γ0²wᵀw` on `U × W` (with `Q = Q0`), the
//! value of the unconstrained game with weights `(Q0, R, γ)` shifted by
//! `s/(1−α)` is a lower bound on the constrained value at every initial
//! state whose unconstrained adversary trajectory stays inside `W`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::Tolerances;
use crate::hinf::{closed_loop, solve_discounted, HinfError};
use crate::lmi::builders::{
    build_relaxation4, build_verify, encode_stage_domination, DUAL_LAMBDA, PARAM_R_INV, VAR_S,
};
use crate::lmi::{dualize, solve_default, ConicProgram, LmiError, SolveStatus};
use crate::model::{matrix_to_json, InputConstraint, ModelError, ProblemInstance};
use crate::numerics::{self, min_eig, spd_inverse, symmetrize};
use crate::{Mat, Vec64};

pub const CERTIFICATE_SCHEMA_VERSION: u64 = 1;

const ALTERNATION_MARGIN: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("gamma {gamma} is below the disturbance weight {gamma0}")]
    GammaBelowWeight { gamma: f64, gamma0: f64 },
    #[error("R must be symmetric positive definite")]
    RNotPositiveDefinite,
    #[error("(R, s) violates stage domination: s = {s} exceeds the largest admissible offset {s_max}")]
    DominationInfeasible { s: f64, s_max: f64 },
    #[error("the adversary leaves W at prefix step {0}")]
    PrefixViolation(usize),
    #[error("verification LMI not certified: {0}")]
    LmiInfeasible(String),
    #[error("SDP failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Hinf(#[from] HinfError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Basic,
    Optimized,
    External,
}

/// Verified set of initial states: the bound holds at `x0` and on the
/// `prefix_t`-step preimage of `{x : xᵀHx ≤ level}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCertificate {
    pub h: Mat,
    pub level: f64,
    pub prefix_t: usize,
    pub x_ref: Vec64,
}

impl RegionCertificate {
    /// True if `x` lies in the sublevel set certified after the prefix.
    pub fn contains_tail_state(&self, x: &Vec64) -> bool {
        (x.transpose() * &self.h * x)[(0, 0)] <= self.level
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub q: Mat,
    pub r: Mat,
    pub gamma: f64,
    pub alpha: f64,
    /// Stage offset, `s ≤ 0` for the box and finite encodings.
    pub s: f64,
    /// Value matrix of the unconstrained game at `(Q, R, γ)`.
    pub p: Mat,
    pub k: Mat,
    pub kw: Mat,
    /// `Tr(P)` from the Riccati solution.
    pub trace: f64,
    /// Optimal value of the trace-minimization SDP at `R⁻¹`, when solved.
    pub sdp_trace: Option<f64>,
    /// S-procedure multipliers backing `s` (empty for finite `U`).
    pub multipliers: Vec<f64>,
    pub provenance: Provenance,
    pub region: Option<RegionCertificate>,
}

impl BoundCertificate {
    pub fn offset(&self) -> f64 {
        self.s / (1.0 - self.alpha)
    }

    /// Trace summary `Tr(P) + s/(1−α)` with the Riccati `P`.
    pub fn value(&self) -> f64 {
        self.trace + self.offset()
    }

    /// Trace summary `J*(R⁻¹) + s/(1−α)` with the SDP optimum.
    pub fn sdp_value(&self) -> Option<f64> {
        self.sdp_trace.map(|t| t + self.offset())
    }

    pub fn to_json(&self) -> Value {
        let mut doc = json!({
            "schema_version": CERTIFICATE_SCHEMA_VERSION,
            "provenance": self.provenance,
            "Q": matrix_to_json(&self.q),
            "R": matrix_to_json(&self.r),
            "gamma": self.gamma,
            "alpha": self.alpha,
            "s": self.s,
            "offset": self.offset(),
            "P": matrix_to_json(&self.p),
            "K": matrix_to_json(&self.k),
            "Kw": matrix_to_json(&self.kw),
            "trace": self.trace,
            "sdp_trace": self.sdp_trace,
            "value": self.value(),
            "sdp_value": self.sdp_value(),
            "multipliers": self.multipliers,
        });
        if let Some(r) = &self.region {
            doc["region"] = json!({
                "H": matrix_to_json(&r.h),
                "level": r.level,
                "prefix_T": r.prefix_t,
                "x_ref": r.x_ref.iter().copied().collect::<Vec<f64>>(),
            });
        }
        doc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrozenBlock {
    RInv,
    Lambda33,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternationRecord {
    pub round: usize,
    pub frozen: FrozenBlock,
    pub sdp_objective: f64,
    /// Certified value after this step, when it was certified.
    pub certified: Option<f64>,
    pub status: SolveStatus,
    pub accepted: bool,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlternationLog {
    pub records: Vec<AlternationRecord>,
    pub warnings: Vec<String>,
}

impl AlternationLog {
    /// Certified values of the accepted steps, starting with the basic bound.
    pub fn accepted_values(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.accepted)
            .filter_map(|r| r.certified)
            .collect()
    }
}

/// Description of a disturbance set to be inner-approximated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DisturbanceSet {
    Ellipsoid { s: Mat, beta: f64 },
    /// `[−d_1, d_1] × … × [−d_l, d_l]`.
    Box { half_widths: Vec<f64> },
}

/// Inscribed ellipsoid `{w : wᵀSw ≤ β}` of the given set.
pub fn ellipsoid_inner(w: &DisturbanceSet) -> Result<(Mat, f64), BoundsError> {
    match w {
        DisturbanceSet::Ellipsoid { s, beta } => {
            if !(*beta > 0.0) || s.nrows() != s.ncols() || !numerics::is_pd(&symmetrize(s), 1e-12) {
                return Err(BoundsError::Unsupported("ellipsoid must have S ≻ 0 and β > 0".into()));
            }
            Ok((s.clone(), *beta))
        }
        DisturbanceSet::Box { half_widths } => {
            if half_widths.is_empty() || half_widths.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
                return Err(BoundsError::Unsupported("box half-widths must be positive and finite".into()));
            }
            let r = half_widths.iter().copied().fold(f64::INFINITY, f64::min);
            Ok((Mat::identity(half_widths.len(), half_widths.len()), r * r))
        }
    }
}

fn check_gamma(p: &ProblemInstance, gamma: f64) -> Result<(), BoundsError> {
    if !(gamma >= p.gamma0) {
        return Err(BoundsError::GammaBelowWeight {
            gamma,
            gamma0: p.gamma0,
        });
    }
    Ok(())
}

fn sdp_trace(p: &ProblemInstance, r: &Mat, gamma: f64, tol: &Tolerances) -> Result<f64, BoundsError> {
    let r_inv = spd_inverse(r).map_err(|_| BoundsError::RNotPositiveDefinite)?;
    let r4 = build_relaxation4(p, &p.q0, &r_inv, gamma, tol)?;
    let res = solve_default(&r4.program, tol)?;
    if res.status != SolveStatus::Optimal {
        return Err(BoundsError::Solver(format!("{:?}: {}", res.status, res.message)));
    }
    Ok(res.objective)
}

/// SDP optimum at `R` compared with the Riccati trace. The bound rests on the
/// Riccati solution, so a solver failure only loses the cross-check.
fn checked_sdp_trace(p: &ProblemInstance, r: &Mat, gamma: f64, trace: f64, tol: &Tolerances) -> Option<f64> {
    match sdp_trace(p, r, gamma, tol) {
        Ok(sdp) => {
            cross_check(trace, sdp);
            Some(sdp)
        }
        Err(e) => {
            log::warn!("trace SDP not solved, certificate carries no SDP value: {e}");
            None
        }
    }
}

fn cross_check(trace: f64, sdp: f64) {
    let rel = (sdp - trace).abs() / trace.abs().max(f64::MIN_POSITIVE);
    if rel > 1e-3 {
        log::warn!("SDP trace {sdp} and Riccati trace {trace} differ by {rel:.2e} relative");
    }
}

/// Basic bound: `Q = Q0`, `R = R0`, `s = 0`.
pub fn basic_bound(p: &ProblemInstance, gamma: f64, tol: &Tolerances) -> Result<BoundCertificate, BoundsError> {
    check_gamma(p, gamma)?;
    let sol = solve_discounted(p, &p.q0, &p.r0, gamma, tol)?;
    let trace = sol.p.trace();
    let sdp = checked_sdp_trace(p, &p.r0, gamma, trace, tol);
    let k = p.u.to_quadratic().map_or(0, |(r, _)| r.len());
    Ok(BoundCertificate {
        q: p.q0.clone(),
        r: p.r0.clone(),
        gamma,
        alpha: p.alpha,
        s: 0.0,
        p: sol.p,
        k: sol.k,
        kw: sol.kw,
        trace,
        sdp_trace: sdp,
        multipliers: vec![0.0; k],
        provenance: Provenance::Basic,
        region: None,
    })
}

/// Largest verified offset `s` with `uᵀRu + s ≤ uᵀR0u` on `U`, and the
/// multipliers backing it.
pub fn max_offset(
    u: &InputConstraint,
    r0: &Mat,
    r: &Mat,
    tol: &Tolerances,
) -> Result<(f64, Vec<f64>), BoundsError> {
    let m = r0.nrows();
    if r.shape() != (m, m) {
        return Err(BoundsError::Dimension("R and R0 differ in size".into()));
    }
    let diff = symmetrize(&(r0 - r));
    match u {
        InputConstraint::Finite { points } => {
            if points.is_empty() {
                return Err(LmiError::EmptyFiniteSet.into());
            }
            let s = points
                .iter()
                .map(|pt| {
                    let v = Vec64::from_column_slice(pt);
                    (v.transpose() * &diff * &v)[(0, 0)]
                })
                .fold(f64::INFINITY, f64::min);
            Ok((s, Vec::new()))
        }
        _ => {
            let (ri, si) = u
                .to_quadratic()
                .ok_or_else(|| BoundsError::Unsupported("input set has no quadratic form".into()))?;
            let k = ri.len();
            // Candidate from the small SDP in (s, λ) at fixed R⁻¹.
            let r_inv = spd_inverse(r).map_err(|_| BoundsError::RNotPositiveDefinite)?;
            let mut frag = encode_stage_domination(u, r0, tol)?.freeze_block(PARAM_R_INV, &r_inv)?;
            let s_coord = frag.var(VAR_S).expect("s").offset;
            frag.add_objective_term(s_coord, 1.0);
            let mut candidates = vec![vec![0.0; k]];
            let res = solve_default(&frag, tol)?;
            if res.status == SolveStatus::Optimal {
                let lam = res.var("lambda").expect("lambda");
                candidates.push(lam.iter().map(|v| v.max(0.0)).collect());
            }
            // Verify each candidate by an eigenvalue test, raising λ along
            // ΣRᵢ when rounding leaves a small violation.
            let sum_r: Mat = ri.iter().fold(Mat::zeros(m, m), |acc, x| acc + x);
            let rho = min_eig(&symmetrize(&sum_r));
            let mut best: Option<(f64, Vec<f64>)> = None;
            for mut lam in candidates {
                let slack = |lam: &[f64]| {
                    let mut t = diff.clone();
                    for (rm, l) in ri.iter().zip(lam) {
                        t += rm * *l;
                    }
                    min_eig(&symmetrize(&t))
                };
                let mut gap = slack(&lam);
                if gap < 0.0 && rho > 0.0 {
                    let bump = -gap / rho * (1.0 + 1e-9) + 1e-15;
                    lam.iter_mut().for_each(|l| *l += bump);
                    gap = slack(&lam);
                }
                if gap < 0.0 {
                    continue;
                }
                let s: f64 = lam.iter().zip(&si).map(|(l, s)| l * s).sum();
                if best.as_ref().is_none_or(|(b, _)| s > *b) {
                    best = Some((s, lam));
                }
            }
            best.ok_or_else(|| {
                BoundsError::Unsupported("no verified S-procedure multipliers (ΣRᵢ is singular)".into())
            })
        }
    }
}

/// Independent certification of a candidate weight `R` and offset `s`:
/// re-checks domination, re-maximizes `s` at `R`, and recomputes `P` from
/// the Riccati recursion with an SDP cross-check.
pub fn certify(
    p: &ProblemInstance,
    r: &Mat,
    s: f64,
    gamma: f64,
    tol: &Tolerances,
) -> Result<BoundCertificate, BoundsError> {
    check_gamma(p, gamma)?;
    let r = symmetrize(r);
    if r.shape() != (p.m(), p.m()) {
        return Err(BoundsError::Dimension("R must be m×m".into()));
    }
    if !numerics::is_pd(&r, tol.definiteness_tol) {
        return Err(BoundsError::RNotPositiveDefinite);
    }
    let (s_max, multipliers) = max_offset(&p.u, &p.r0, &r, tol)?;
    if s > s_max + 1e-7 * (1.0 + s.abs()) {
        return Err(BoundsError::DominationInfeasible { s, s_max });
    }
    let sol = solve_discounted(p, &p.q0, &r, gamma, tol)?;
    let trace = sol.p.trace();
    let sdp = checked_sdp_trace(p, &r, gamma, trace, tol);
    Ok(BoundCertificate {
        q: p.q0.clone(),
        r,
        gamma,
        alpha: p.alpha,
        s: s_max,
        p: sol.p,
        k: sol.k,
        kw: sol.kw,
        trace,
        sdp_trace: sdp,
        multipliers,
        provenance: Provenance::External,
        region: None,
    })
}

/// `x0ᵀPx0 + s/(1−α)`.
pub fn evaluate_bound(cert: &BoundCertificate, x0: &Vec64) -> Result<f64, BoundsError> {
    if x0.len() != cert.p.nrows() {
        return Err(BoundsError::Dimension(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            cert.p.nrows()
        )));
    }
    Ok((x0.transpose() * &cert.p * x0)[(0, 0)] + cert.offset())
}

/// `uᵀR0u − γ0²wᵀw − (uᵀRu − γ²wᵀw + s)`; nonnegative when the stage cost
/// of the certificate is dominated at `(u, w)`.
pub fn domination_slack(p: &ProblemInstance, cert: &BoundCertificate, u: &Vec64, w: &Vec64) -> f64 {
    let uu = |m: &Mat| (u.transpose() * m * u)[(0, 0)];
    let ww = w.norm_squared();
    uu(&p.r0) - p.gamma0 * p.gamma0 * ww - (uu(&cert.r) - cert.gamma * cert.gamma * ww + cert.s)
}

/// Dual of the trace-minimization SDP with `R⁻¹` promoted, merged with the
/// stage-domination constraints and the offset term `s/(1−α)`.
fn bound_program(
    p: &ProblemInstance,
    r_inv: &Mat,
    gamma: f64,
    tol: &Tolerances,
) -> Result<(ConicProgram, std::ops::Range<usize>), BoundsError> {
    // A small strictness margin keeps the dual optimum off the boundary;
    // without it the interior-point steps stall. Certification re-solves
    // with the caller's margin, so this only steers the heuristic.
    let tol = Tolerances {
        sdp_margin: tol.sdp_margin.max(ALTERNATION_MARGIN),
        ..*tol
    };
    let tol = &tol;
    let r4 = build_relaxation4(p, &p.q0, r_inv, gamma, tol)?;
    let dual = dualize(&r4.program, Some(PARAM_R_INV))?;
    let frag = encode_stage_domination(&p.u, &p.r0, tol)?;
    let mut prog = dual.merge(&frag)?;
    let s_coord = prog.var(VAR_S).expect("s").offset;
    prog.add_objective_term(s_coord, 1.0 / (1.0 - p.alpha));
    prog.name = "bound".into();
    Ok((prog, r4.lambda33()))
}

fn solve_step(prog: &ConicProgram, tol: &Tolerances) -> Result<crate::lmi::SolveResult, String> {
    match solve_default(prog, tol) {
        Ok(res) if res.status == SolveStatus::Optimal => Ok(res),
        Ok(res) => Err(format!("{:?}: {}", res.status, res.message)),
        Err(e) => Err(e.to_string()),
    }
}

/// Alternating optimization of the bound over `(R⁻¹, s)`: freeze `R⁻¹` and
/// solve for the dual blocks, then freeze the `Λ₃₃` entries that multiply
/// `R⁻¹` and solve for `(R⁻¹, s)`. Each round is certified independently and
/// accepted only if the certified value does not decrease.
pub fn optimize_bound(
    p: &ProblemInstance,
    gamma: f64,
    rounds: usize,
    inner_tol: f64,
    tol: &Tolerances,
) -> Result<(BoundCertificate, AlternationLog), BoundsError> {
    let basic = basic_bound(p, gamma, tol)?;
    let mut log = AlternationLog::default();
    log.records.push(AlternationRecord {
        round: 0,
        frozen: FrozenBlock::RInv,
        sdp_objective: basic.sdp_trace.unwrap_or(f64::NAN),
        certified: Some(basic.value()),
        status: SolveStatus::Optimal,
        accepted: true,
        note: "basic bound".into(),
    });
    let mut best = basic;
    for round in 1..=rounds {
        let r_inv = match spd_inverse(&best.r) {
            Ok(v) => v,
            Err(_) => break,
        };
        let (prog, l33) = bound_program(p, &r_inv, gamma, tol)?;

        // (a) R⁻¹ frozen.
        let step_a = prog.freeze_block(PARAM_R_INV, &r_inv)?;
        let res_a = match solve_step(&step_a, tol) {
            Ok(r) => r,
            Err(msg) => {
                warn(&mut log, round, FrozenBlock::RInv, msg);
                break;
            }
        };
        log.records.push(AlternationRecord {
            round,
            frozen: FrozenBlock::RInv,
            sdp_objective: res_a.objective,
            certified: None,
            status: res_a.status,
            accepted: false,
            note: String::new(),
        });

        // (b) Λ₃₃ frozen, R⁻¹ free.
        let lambda = res_a.var(DUAL_LAMBDA).expect("Lambda").clone();
        let pick = |i: usize, j: usize| l33.contains(&i) && l33.contains(&j);
        let step_b = prog.freeze_entries(DUAL_LAMBDA, &lambda, pick)?;
        let res_b = match solve_step(&step_b, tol) {
            Ok(r) => r,
            Err(msg) => {
                warn(&mut log, round, FrozenBlock::Lambda33, msg);
                break;
            }
        };
        let r_inv_new = symmetrize(res_b.var(PARAM_R_INV).expect("R_inv"));
        let s_new = res_b.var(VAR_S).expect("s")[(0, 0)];
        let mut record = AlternationRecord {
            round,
            frozen: FrozenBlock::Lambda33,
            sdp_objective: res_b.objective,
            certified: None,
            status: res_b.status,
            accepted: false,
            note: String::new(),
        };
        // The step may leave the set where the game at γ is solvable; the
        // (R⁻¹, s) domination set is convex, so backtrack toward the iterate.
        let mut step = 1.0;
        let mut candidate = Err(String::new());
        for _ in 0..8 {
            let ri = &r_inv + (&r_inv_new - &r_inv) * step;
            let si = best.s + (s_new - best.s) * step;
            candidate = spd_inverse(&symmetrize(&ri))
                .map_err(|e| e.to_string())
                .and_then(|r| certify(p, &r, si, gamma, tol).map_err(|e| e.to_string()));
            if matches!(&candidate, Ok(c) if c.value() >= best.value()) {
                break;
            }
            step *= 0.5;
        }
        if step < 1.0 {
            record.note = format!("backtracked to step {step}");
        }
        let cert = match candidate {
            Ok(c) => c,
            Err(msg) => {
                record.note = format!("certification failed: {msg}");
                log.warnings.push(format!("round {round}: {}", record.note));
                log::warn!("round {round}: {}", record.note);
                log.records.push(record);
                break;
            }
        };
        let previous = best.value();
        record.certified = Some(cert.value());
        if cert.value() >= previous {
            record.accepted = true;
            log.records.push(record);
            best = BoundCertificate {
                provenance: Provenance::Optimized,
                ..cert
            };
        } else {
            record.note = format!("rejected: certified {} < {previous}", cert.value());
            log.records.push(record);
            break;
        }
        if best.value() - previous < inner_tol * previous.abs().max(1e-12) {
            break;
        }
    }
    Ok((best, log))
}

fn warn(log: &mut AlternationLog, round: usize, frozen: FrozenBlock, msg: String) {
    let text = format!("round {round}, {frozen:?} frozen: {msg}; keeping the best certified bound");
    log::warn!("{text}");
    log.warnings.push(text);
    log.records.push(AlternationRecord {
        round,
        frozen,
        sdp_objective: f64::NAN,
        certified: None,
        status: SolveStatus::NumericalTrouble,
        accepted: false,
        note: msg,
    });
}

/// Optional outer sweep: the best optimized bound over a grid of `γ ≥ γ0`.
pub fn optimize_bound_sweep(
    p: &ProblemInstance,
    gammas: &[f64],
    rounds: usize,
    inner_tol: f64,
    tol: &Tolerances,
) -> Result<(BoundCertificate, AlternationLog), BoundsError> {
    let mut best: Option<(BoundCertificate, AlternationLog)> = None;
    let mut last_err = None;
    for &g in gammas {
        match optimize_bound(p, g, rounds, inner_tol, tol) {
            Ok((c, l)) => {
                if best.as_ref().is_none_or(|(b, _)| c.value() > b.value()) {
                    best = Some((c, l));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(BoundsError::Unsupported("empty γ grid".into())))
}

/// Checks `K_w A_clᵏ x0 ∈ W` for `k < prefix_t`, then certifies the tail
/// from `x_ref = A_cl^{prefix_t} x0` with the invariant-ellipsoid LMI.
pub fn verify_initial_state(
    p: &ProblemInstance,
    cert: &BoundCertificate,
    x0: &Vec64,
    prefix_t: usize,
    tol: &Tolerances,
) -> Result<RegionCertificate, BoundsError> {
    let n = p.n();
    if x0.len() != n {
        return Err(BoundsError::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
    }
    let a_cl = &p.a + &p.b * &cert.k + &p.g * &cert.kw;
    let (s, beta) = (&p.w.s, p.w.beta);
    if x0.iter().all(|v| *v == 0.0) {
        // The origin is a fixed point with zero adversary.
        return Ok(RegionCertificate {
            h: Mat::identity(n, n),
            level: 0.0,
            prefix_t: 0,
            x_ref: x0.clone(),
        });
    }
    let mut x = x0.clone();
    for k in 0..prefix_t {
        let w = &cert.kw * &x;
        if (w.transpose() * s * &w)[(0, 0)] > beta {
            return Err(BoundsError::PrefixViolation(k));
        }
        x = &a_cl * x;
    }
    let prog = build_verify(&a_cl, &cert.kw, s, beta, &x)?;
    let res = solve_default(&prog, tol)?;
    if res.status != SolveStatus::Optimal {
        return Err(BoundsError::LmiInfeasible(format!("{:?}: {}", res.status, res.message)));
    }
    let h = symmetrize(res.var("H").expect("H"));
    // Independent re-check of the returned H.
    let kskw = symmetrize(&(cert.kw.transpose() * s * &cert.kw));
    let level = (x.transpose() * &h * &x)[(0, 0)];
    let ok = min_eig(&(&h - &kskw)) >= 0.0
        && min_eig(&symmetrize(&(&h - a_cl.transpose() * &h * &a_cl))) >= 0.0
        && level <= beta;
    if !ok {
        return Err(BoundsError::LmiInfeasible("returned H fails the direct check".into()));
    }
    Ok(RegionCertificate {
        h,
        level,
        prefix_t,
        x_ref: x,
    })
}

/// Closed-loop matrix of the certificate's unconstrained pair.
pub fn certificate_closed_loop(p: &ProblemInstance, cert: &BoundCertificate) -> Mat {
    let sol = crate::hinf::RiccatiSolution {
        p: cert.p.clone(),
        pbar: Mat::zeros(0, 0),
        k: cert.k.clone(),
        kw: cert.kw.clone(),
        q: cert.q.clone(),
        r: cert.r.clone(),
        gamma: cert.gamma,
        alpha: cert.alpha,
        iterations: 0,
        residual: 0.0,
        residual_history: Vec::new(),
    };
    closed_loop(p, &sol).a_cl
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hinf::hinf_optimal_gamma;
    use crate::model::reference_example;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example() -> ProblemInstance {
        let tol = Tolerances::default();
        let p = reference_example(1.0, 1.0);
        let g = hinf_optimal_gamma(&p, tol.gamma_rel_tol, &tol).unwrap();
        p.with_gamma0(1.1 * g)
    }

    #[test]
    fn basic_bound_on_example() {
        let p = example();
        let cert = basic_bound(&p, p.gamma0, &Tolerances::default()).unwrap();
        assert_eq!(cert.s, 0.0);
        assert_eq!(cert.provenance, Provenance::Basic);
        assert!((cert.trace - 3.526).abs() < 0.02 * 3.526);
        let sdp = cert.sdp_trace.unwrap();
        assert!((sdp - cert.trace).abs() < 1e-3 * cert.trace);
    }

    #[test]
    fn gamma_below_weight_is_rejected() {
        let p = example();
        let err = basic_bound(&p, 0.9 * p.gamma0, &Tolerances::default());
        assert!(matches!(err, Err(BoundsError::GammaBelowWeight { .. })));
    }

    #[test]
    fn certify_reproduces_basic_bound() {
        let p = example();
        let tol = Tolerances::default();
        let basic = basic_bound(&p, p.gamma0, &tol).unwrap();
        let c = certify(&p, &p.r0, 0.0, p.gamma0, &tol).unwrap();
        assert_eq!(c.p, basic.p);
        assert!(c.s <= 0.0 && c.s >= -1e-9);
        assert!(c.value() >= basic.value() - 1e-8);
    }

    #[test]
    fn certify_rejects_dominating_offsets() {
        let p = example();
        let tol = Tolerances::default();
        // R = 2·R0 needs s ≤ −λ_max-ish; s = 0 must be refused.
        let err = certify(&p, &(&p.r0 * 2.0), 0.0, p.gamma0, &tol);
        assert!(matches!(err, Err(BoundsError::DominationInfeasible { .. })));
        let ok = certify(&p, &(&p.r0 * 2.0), -100.0, p.gamma0, &tol).unwrap();
        assert!(ok.s > -100.0 && ok.s < 0.0);
        // The re-maximized offset is verified on the box corners and edges.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let u = Vec64::from_fn(2, |_, _| rng.random_range(-1.0..=1.0));
            let w = Vec64::zeros(p.l());
            assert!(domination_slack(&p, &ok, &u, &w) >= -1e-12);
        }
    }

    #[test]
    fn max_offset_finite_closed_form() {
        let u = InputConstraint::Finite {
            points: vec![vec![1.0], vec![-2.0]],
        };
        let (s, lam) = max_offset(&u, &Mat::from_element(1, 1, 3.0), &Mat::from_element(1, 1, 4.0), &Tolerances::default()).unwrap();
        assert!(lam.is_empty());
        assert_eq!(s, -4.0);
    }

    #[test]
    fn evaluate_bound_is_quadratic_plus_offset() {
        let p = example();
        let mut cert = basic_bound(&p, p.gamma0, &Tolerances::default()).unwrap();
        cert.s = -0.1;
        let x = Vec64::from_vec(vec![1.0, -0.5, 0.2, 0.3]);
        let zero = evaluate_bound(&cert, &Vec64::zeros(4)).unwrap();
        assert!((zero - cert.offset()).abs() < 1e-15);
        let v1 = evaluate_bound(&cert, &x).unwrap() - cert.offset();
        let v2 = evaluate_bound(&cert, &(&x * 2.0)).unwrap() - cert.offset();
        assert!((v2 - 4.0 * v1).abs() < 1e-12 * v2.abs());
        assert!(evaluate_bound(&cert, &Vec64::zeros(3)).is_err());
    }

    #[test]
    fn zero_rounds_return_basic_bound() {
        let p = example();
        let tol = Tolerances::default();
        let (cert, log) = optimize_bound(&p, p.gamma0, 0, 1e-4, &tol).unwrap();
        let basic = basic_bound(&p, p.gamma0, &tol).unwrap();
        assert_eq!(cert, basic);
        assert_eq!(log.records.len(), 1);
    }

    #[test]
    fn alternation_is_monotone() {
        let p = example();
        let (cert, log) = optimize_bound(&p, p.gamma0, 3, 1e-4, &Tolerances::default()).unwrap();
        let vals = log.accepted_values();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        assert!(cert.value() >= vals[0]);
    }

    #[test]
    fn region_verification_on_example() {
        let p = example();
        let tol = Tolerances::default();
        let cert = basic_bound(&p, p.gamma0, &tol).unwrap();
        let zero = verify_initial_state(&p, &cert, &Vec64::zeros(4), 50, &tol).unwrap();
        assert_eq!(zero.prefix_t, 0);
        let x0 = Vec64::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let reg = verify_initial_state(&p, &cert, &x0, 50, &tol).unwrap();
        assert!(reg.level <= p.w.beta);
        // Far enough out the adversary leaves W at step 0.
        let far = &x0 * 1e4;
        assert!(matches!(
            verify_initial_state(&p, &cert, &far, 50, &tol),
            Err(BoundsError::PrefixViolation(0))
        ));
        // Star-shaped: scaling toward the origin stays inside.
        for c in [0.1, 0.5, 0.9] {
            assert!(reg.contains_tail_state(&(&reg.x_ref * c)));
        }
    }

    #[test]
    fn ellipsoid_inner_cases() {
        let (s, b) = ellipsoid_inner(&DisturbanceSet::Ellipsoid {
            s: Mat::identity(2, 2),
            beta: 1.0,
        })
        .unwrap();
        assert_eq!((s, b), (Mat::identity(2, 2), 1.0));
        let (s, b) = ellipsoid_inner(&DisturbanceSet::Box {
            half_widths: vec![1.0, 2.0],
        })
        .unwrap();
        assert_eq!(s, Mat::identity(2, 2));
        assert_eq!(b, 1.0);
        assert!(ellipsoid_inner(&DisturbanceSet::Box { half_widths: vec![0.0] }).is_err());
        // 10⁴ samples of the ellipsoid lie in the box.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = [1.5, 0.7, 3.0];
        let (s, beta) = ellipsoid_inner(&DisturbanceSet::Box { half_widths: d.to_vec() }).unwrap();
        for _ in 0..10_000 {
            let w = Vec64::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let w = if w.norm() > 0.0 { &w / w.norm() * (beta.sqrt() * rng.random::<f64>()) } else { w };
            assert!((w.transpose() * &s * &w)[(0, 0)] <= beta + 1e-12);
            assert!(w.iter().zip(&d).all(|(x, h)| x.abs() <= *h));
        }
    }

    #[test]
    fn certificate_json_has_schema() {
        let p = example();
        let cert = basic_bound(&p, p.gamma0, &Tolerances::default()).unwrap();
        let doc = cert.to_json();
        assert_eq!(doc["schema_version"], 1);
        assert_eq!(doc["provenance"], "basic");
        assert_eq!(doc["P"].as_array().unwrap().len(), 4);
    }
}
