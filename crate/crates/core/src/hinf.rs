//! Unconstrained discounted H∞ game: generalized Riccati fixed point,
//! saddle-point gains, optimal γ and the bounded-real cross-check.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Tolerances;
use crate::model::{discount_transform, ModelError, ProblemInstance};
use crate::numerics::{self, max_eig, symmetrize};
use crate::Mat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HinfError {
    #[error("gamma too small: gamma^2 I - G'PG lost definiteness at iterate {iteration}")]
    GammaTooSmall { iteration: usize },
    #[error("R + B'P̄B lost definiteness at iterate {iteration}")]
    IllPosed { iteration: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("no feasible gamma below {cap:.3e}")]
    NoUpperBracket { cap: f64 },
    #[error("every gamma down to {floor:.3e} is feasible; the disturbance has no effect")]
    NoLowerBracket { floor: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Fixed point of the Isaacs recursion together with its saddle-point
/// gains. When produced by [`solve_discounted`], `pbar` and `kw` use the
/// original (unscaled) data convention: `pbar = α·P̄` and
/// `w = kw·x` for the system `x⁺ = Ax + Bu + Gw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub p: Mat,
    pub pbar: Mat,
    pub k: Mat,
    pub kw: Mat,
    pub q: Mat,
    pub r: Mat,
    pub gamma: f64,
    pub alpha: f64,
    pub iterations: usize,
    /// `‖P − RHS(P)‖_F / ‖P‖_F` at the returned `P`.
    pub residual: f64,
    #[serde(skip)]
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoop {
    pub a_cl: Mat,
}

struct Step {
    rhs: Mat,
    pbar: Mat,
    k: Mat,
    w_chol: Cholesky<f64, nalgebra::Dyn>,
}

fn isaacs_step(
    a: &Mat,
    b: &Mat,
    g: &Mat,
    q: &Mat,
    r: &Mat,
    gamma: f64,
    p: &Mat,
    iteration: usize,
    def_tol: f64,
) -> Result<Step, HinfError> {
    let l = g.ncols();
    let pg = p * g;
    let w = symmetrize(&(Mat::identity(l, l) * (gamma * gamma) - g.transpose() * &pg));
    let w_chol = definite_cholesky(w, def_tol * gamma * gamma)
        .ok_or(HinfError::GammaTooSmall { iteration })?;
    let pbar = symmetrize(&(p + &pg * w_chol.solve(&pg.transpose())));
    let pbar_b = &pbar * b;
    let s = symmetrize(&(r + b.transpose() * &pbar_b));
    let s_chol = definite_cholesky(s, 0.0).ok_or(HinfError::IllPosed { iteration })?;
    let bt_pbar_a = pbar_b.transpose() * a;
    let k = -s_chol.solve(&bt_pbar_a);
    // Q + AᵀP̄A − AᵀP̄B S⁻¹ BᵀP̄A = Q + AᵀP̄A + (BᵀP̄A)ᵀ K
    let rhs = symmetrize(&(q + a.transpose() * &pbar * a + bt_pbar_a.transpose() * &k));
    Ok(Step {
        rhs,
        pbar,
        k,
        w_chol,
    })
}

fn definite_cholesky(m: Mat, floor: f64) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    (min_pivot > floor).then_some(chol)
}

/// Value iteration `P ← Q + AᵀP̄A − AᵀP̄B(R + BᵀP̄B)⁻¹BᵀP̄A` with
/// `P̄ = P + PG(γ²I − GᵀPG)⁻¹GᵀP`, started at `P = Q`, on undiscounted data.
#[allow(clippy::too_many_arguments)]
pub fn isaacs_iterate(
    a: &Mat,
    b: &Mat,
    g: &Mat,
    q: &Mat,
    r: &Mat,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RiccatiSolution, HinfError> {
    isaacs_iterate_with(a, b, g, q, r, gamma, tol, max_iter, Tolerances::default().definiteness_tol)
}

#[allow(clippy::too_many_arguments)]
fn isaacs_iterate_with(
    a: &Mat,
    b: &Mat,
    g: &Mat,
    q: &Mat,
    r: &Mat,
    gamma: f64,
    tol: f64,
    max_iter: usize,
    def_tol: f64,
) -> Result<RiccatiSolution, HinfError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || g.nrows() != n || q.shape() != (n, n) {
        return Err(HinfError::InvalidInput("inconsistent dimensions".into()));
    }
    if r.shape() != (b.ncols(), b.ncols()) {
        return Err(HinfError::InvalidInput("R does not match B".into()));
    }
    if !(gamma > 0.0) {
        return Err(HinfError::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    let q = symmetrize(q);
    let r = symmetrize(r);
    let mut p = q.clone();
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    for iteration in 0..max_iter {
        let step = isaacs_step(a, b, g, &q, &r, gamma, &p, iteration, def_tol)?;
        let scale = p.norm().max(f64::MIN_POSITIVE);
        residual = (&step.rhs - &p).norm() / scale;
        history.push(residual);
        if residual <= tol {
            let acl = a + b * &step.k;
            let kw = step.w_chol.solve(&(g.transpose() * &p * acl));
            return Ok(RiccatiSolution {
                p,
                pbar: step.pbar,
                k: step.k,
                kw,
                q,
                r,
                gamma,
                alpha: 1.0,
                iterations: iteration,
                residual,
                residual_history: history,
            });
        }
        p = step.rhs;
    }
    Err(HinfError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Discounted problem with weights `(Q, R)` and disturbance weight `γ`,
/// solved through the equivalent undiscounted problem on `(√α·A, √α·B, γ/√α)`.
pub fn solve_discounted(
    p: &ProblemInstance,
    q: &Mat,
    r: &Mat,
    gamma: f64,
    tol: &Tolerances,
) -> Result<RiccatiSolution, HinfError> {
    let (at, bt, gt) = discount_transform(&p.a, &p.b, gamma, p.alpha)?;
    let mut sol = isaacs_iterate_with(
        &at,
        &bt,
        &p.g,
        q,
        r,
        gt,
        tol.riccati_tol,
        tol.riccati_max_iter,
        tol.definiteness_tol,
    )?;
    let root = p.alpha.sqrt();
    sol.pbar *= p.alpha;
    sol.kw /= root;
    sol.gamma = gamma;
    sol.alpha = p.alpha;
    Ok(sol)
}

/// Riccati solution at the instance's own weights `(Q0, R0, γ0)`.
pub fn solve_instance(p: &ProblemInstance, tol: &Tolerances) -> Result<RiccatiSolution, HinfError> {
    solve_discounted(p, &p.q0, &p.r0, p.gamma0, tol)
}

/// Smallest `γ` at which the discounted game with `(Q0, R0)` is well posed,
/// by doubling/halving to a bracket and bisection. A run that fails to
/// converge within the iteration cap counts as infeasible.
pub fn hinf_optimal_gamma(
    p: &ProblemInstance,
    rel_tol: f64,
    tol: &Tolerances,
) -> Result<f64, HinfError> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(HinfError::InvalidInput(format!("rel_tol must lie in (0,1), got {rel_tol}")));
    }
    let feasible = |gamma: f64| solve_discounted(p, &p.q0, &p.r0, gamma, tol).is_ok();
    let guess = 1.0 + numerics::sym_norm(&(p.g.transpose() * &p.g)).sqrt() * numerics::sym_norm(&p.q0);
    let cap = guess * 2f64.powi(60);
    let floor = guess * 2f64.powi(-60);
    let (mut lo, mut hi);
    if feasible(guess) {
        hi = guess;
        lo = guess / 2.0;
        while feasible(lo) {
            hi = lo;
            lo /= 2.0;
            if lo < floor {
                return Err(HinfError::NoLowerBracket { floor });
            }
        }
    } else {
        lo = guess;
        hi = guess * 2.0;
        while !feasible(hi) {
            lo = hi;
            hi *= 2.0;
            if hi > cap {
                return Err(HinfError::NoUpperBracket { cap });
            }
        }
    }
    while hi - lo > 0.5 * rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `A + BK + GK_w` on the original data.
pub fn closed_loop(p: &ProblemInstance, sol: &RiccatiSolution) -> ClosedLoop {
    ClosedLoop {
        a_cl: &p.a + &p.b * &sol.k + &p.g * &sol.kw,
    }
}

/// Assembles the bounded-real block matrix
///
/// ```text
/// [ −P⁻¹   A_K   G     0   ]
/// [ A_Kᵀ   −P    0     C_Kᵀ]
/// [ Gᵀ     0    −γ̃I    0   ]
/// [ 0      C_K   0    −γ̃I  ]
/// ```
///
/// on discount-scaled data with `A_K = Ã + B̃K`, `C_K = [Q^½; R^½K]` and
/// `P = P_ric/γ̃`.
pub fn bounded_real_matrix(p: &ProblemInstance, sol: &RiccatiSolution, gamma: f64) -> Result<Mat, HinfError> {
    let (at, bt, gt) = discount_transform(&p.a, &p.b, gamma, sol.alpha)?;
    let n = p.n();
    let m = p.m();
    let l = p.l();
    let pbr = &sol.p / gt;
    let pbr_inv = numerics::spd_inverse(&pbr)
        .map_err(|_| HinfError::InvalidInput("P is not positive definite".into()))?;
    let ak = &at + &bt * &sol.k;
    let c_q = numerics::sym_sqrt(&sol.q);
    let c_r = numerics::sym_sqrt(&sol.r) * &sol.k;
    let nz = n + m;
    let dim = 2 * n + l + nz;
    let mut big = Mat::zeros(dim, dim);
    let (o1, o2, o3, o4) = (0, n, 2 * n, 2 * n + l);
    big.view_mut((o1, o1), (n, n)).copy_from(&(-pbr_inv));
    big.view_mut((o1, o2), (n, n)).copy_from(&ak);
    big.view_mut((o2, o1), (n, n)).copy_from(&ak.transpose());
    big.view_mut((o1, o3), (n, l)).copy_from(&p.g);
    big.view_mut((o3, o1), (l, n)).copy_from(&p.g.transpose());
    big.view_mut((o2, o2), (n, n)).copy_from(&(-&pbr));
    let mut ck = Mat::zeros(nz, n);
    ck.view_mut((0, 0), (n, n)).copy_from(&c_q);
    ck.view_mut((n, 0), (m, n)).copy_from(&c_r);
    big.view_mut((o4, o2), (nz, n)).copy_from(&ck);
    big.view_mut((o2, o4), (n, nz)).copy_from(&ck.transpose());
    big.view_mut((o3, o3), (l, l)).copy_from(&(Mat::identity(l, l) * -gt));
    big.view_mut((o4, o4), (nz, nz)).copy_from(&(Mat::identity(nz, nz) * -gt));
    Ok(symmetrize(&big))
}

/// True iff the bounded-real matrix at `sol` is negative semidefinite up to
/// `slack_tol`.
pub fn bounded_real_check(p: &ProblemInstance, sol: &RiccatiSolution, gamma: f64, slack_tol: f64) -> bool {
    match bounded_real_matrix(p, sol, gamma) {
        Ok(m) => max_eig(&m) <= slack_tol,
        Err(_) => false,
    }
}
