//! Builders for the programs of the bound pipeline.
//!
//! Every builder works on discount-scaled data `Ã = √α·A`, `B̃ = √α·B`,
//! `γ̃ = γ/√α`. Strict inequalities get the margin
//! `ε = sdp_margin · scale`, where the scale is the largest entry of the
//! constant data entering the block (at least 1). The default margin is 0:
//! near `γ*` any fixed margin visibly biases the trace optimum, and nothing
//! downstream relies on strictness of the SDP solution.

use serde::{Deserialize, Serialize};

use super::program::{BlockKind, ConicProgram, Env, ProgramBuilder, Sense};
use super::LmiError;
use crate::config::Tolerances;
use crate::model::{discount_transform, InputConstraint, ProblemInstance};
use crate::numerics::{self, null_bases_with_tol, NullBases};
use crate::{Mat, Vec64};

pub const VAR_P: &str = "P";
pub const VAR_X: &str = "X";
pub const PARAM_R_INV: &str = "R_inv";
pub const VAR_S: &str = "s";
pub const G_COUPLING: &str = "G_coupling";
pub const COUPLING: &str = "coupling";
pub const BOUNDED_REAL: &str = "bounded_real";
pub const DUAL_Z: &str = "Z";
pub const DUAL_PHI: &str = "Phi";
pub const DUAL_LAMBDA: &str = "Lambda";

fn margin(tol: &Tolerances, scale: f64) -> f64 {
    tol.sdp_margin * scale.max(1.0)
}

/// Writes `blocks[i][j]` into one dense matrix with the given partition.
fn assemble(sizes: &[usize], blocks: &[(usize, usize, Mat)]) -> Mat {
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let dim: usize = sizes.iter().sum();
    let mut out = Mat::zeros(dim, dim);
    for (i, j, m) in blocks {
        out.view_mut((offsets[*i], offsets[*j]), (sizes[*i], sizes[*j])).copy_from(m);
        if i != j {
            out.view_mut((offsets[*j], offsets[*i]), (sizes[*j], sizes[*i]))
                .copy_from(&m.transpose());
        }
    }
    out
}

/// The trace-minimization program at fixed `(Q, R⁻¹, γ)` together with the
/// data needed to interpret its dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relaxation4 {
    pub program: ConicProgram,
    /// Row partition `[n − r, n, r, l]` of the bounded-real block.
    pub partition: [usize; 4],
    pub a_tilde: Mat,
    pub b_tilde: Mat,
    pub gamma_tilde: f64,
    pub bases: NullBases,
}

impl Relaxation4 {
    /// Rows/columns of the sub-block of the bounded-real constraint that
    /// multiplies `R⁻¹`.
    pub fn lambda33(&self) -> std::ops::Range<usize> {
        let start = self.partition[0] + self.partition[1];
        start..start + self.partition[2]
    }
}

/// `min Tr(P)` subject to
///
/// ```text
/// γ̃I − GᵀPG/γ̃ ⪰ εI,
/// [X  √γ̃I; √γ̃I  P] ⪰ 0,
/// −L(X, R⁻¹) ⪰ εI,
/// ```
///
/// with `L` the 4×4-block bounded-real matrix expressed in the bases
/// `N` of null(B̃ᵀ) and `M` of range(B̃). `R⁻¹` is a parameter block so that
/// the program can be dualized with it promoted to a variable.
pub fn build_relaxation4(
    p: &ProblemInstance,
    q: &Mat,
    r_inv: &Mat,
    gamma: f64,
    tol: &Tolerances,
) -> Result<Relaxation4, LmiError> {
    let (n, m, l) = (p.n(), p.m(), p.l());
    if q.shape() != (n, n) || r_inv.shape() != (m, m) {
        return Err(LmiError::Dimension("Q must be n×n and R⁻¹ m×m".into()));
    }
    let q_inv = numerics::spd_inverse(&numerics::symmetrize(q)).map_err(|_| LmiError::QNotInvertible)?;
    let (at, bt, gt) = discount_transform(&p.a, &p.b, gamma, p.alpha)?;
    let bases = null_bases_with_tol(&bt, tol.rank_tol);
    let r = bases.rank();
    let (nb, mb) = (bases.n.clone(), bases.m.clone());
    let g = p.g.clone();
    let sizes = [n - r, n, r, l];
    let root = gt.sqrt();

    let mut b = ProgramBuilder::new("relaxation4", Sense::Minimize);
    let pv = b.var(VAR_P, BlockKind::Sym(n));
    let xv = b.var(VAR_X, BlockKind::Sym(n));
    let rp = b.param(PARAM_R_INV, BlockKind::Sym(m), r_inv);

    let g_scale = gt;
    b.psd(G_COUPLING, DUAL_Z, margin(tol, g_scale), |e| {
        Mat::identity(l, l) * gt - g.transpose() * e.var(pv) * &g / gt
    })?;
    b.psd(COUPLING, DUAL_PHI, 0.0, |e| {
        let mut c = Mat::zeros(2 * n, 2 * n);
        c.view_mut((0, 0), (n, n)).copy_from(e.var(xv));
        c.view_mut((n, n), (n, n)).copy_from(e.var(pv));
        for i in 0..n {
            c[(i, n + i)] = root;
            c[(n + i, i)] = root;
        }
        c
    })?;
    let lmat = |e: &Env| -> Mat {
        let x = e.var(xv);
        let axa = &at * x * at.transpose() - x;
        let brb = &bt * e.param(rp) * bt.transpose() * gt;
        let blocks = vec![
            (0, 0, nb.transpose() * &axa * &nb),
            (0, 1, nb.transpose() * &at * x),
            (0, 2, nb.transpose() * &axa * &mb),
            (0, 3, nb.transpose() * &g),
            (1, 1, x - &q_inv * gt),
            (1, 2, x * at.transpose() * &mb),
            (1, 3, Mat::zeros(n, l)),
            (2, 2, mb.transpose() * (&axa - brb) * &mb),
            (2, 3, mb.transpose() * &g),
            (3, 3, Mat::identity(l, l) * -gt),
        ];
        -assemble(&sizes, &blocks)
    };
    let br_scale = gt
        * numerics::max_abs(&q_inv)
            .max(1.0)
            .max(numerics::max_abs(&(&bt * r_inv * bt.transpose())));
    b.psd(BOUNDED_REAL, DUAL_LAMBDA, margin(tol, br_scale), lmat)?;
    b.objective(|e| e.var(pv).trace())?;
    Ok(Relaxation4 {
        program: b.build(),
        partition: sizes,
        a_tilde: at,
        b_tilde: bt,
        gamma_tilde: gt,
        bases,
    })
}

/// Bounded-real program in `Y = γ̃·P⁻¹` and `L = K·Y`:
///
/// ```text
/// [−Y       ÃY+B̃L  G     0        ]
/// [(ÃY+B̃L)ᵀ  −Y    0   (CY+DL)ᵀ   ]  ⪯ −εI,   [W  √γ̃I; √γ̃I  Y] ⪰ 0,
/// [Gᵀ        0    −γ̃I    0        ]
/// [0        CY+DL  0    −γ̃I       ]
/// ```
///
/// minimizing `Tr W`, with `C = [Q^½; 0]` and `D = [0; R^½]`. At the
/// optimum `W ≈ P` and `K = L·Y⁻¹`.
pub fn build_relaxation2(
    p: &ProblemInstance,
    q: &Mat,
    r: &Mat,
    gamma: f64,
    tol: &Tolerances,
) -> Result<ConicProgram, LmiError> {
    let (n, m, l) = (p.n(), p.m(), p.l());
    if q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(LmiError::Dimension("Q must be n×n and R m×m".into()));
    }
    if !numerics::is_pd(&numerics::symmetrize(r), tol.definiteness_tol) {
        return Err(LmiError::RNotPositiveDefinite);
    }
    let (at, bt, gt) = discount_transform(&p.a, &p.b, gamma, p.alpha)?;
    let nz = n + m;
    let mut c = Mat::zeros(nz, n);
    c.view_mut((0, 0), (n, n)).copy_from(&numerics::sym_sqrt(q));
    let mut d = Mat::zeros(nz, m);
    d.view_mut((n, 0), (m, m)).copy_from(&numerics::sym_sqrt(r));
    let g = p.g.clone();
    let root = gt.sqrt();

    let mut b = ProgramBuilder::new("relaxation2", Sense::Minimize);
    let yv = b.var("Y", BlockKind::Sym(n));
    let lv = b.var("L", BlockKind::Full(m, n));
    let wv = b.var("W", BlockKind::Sym(n));
    let sizes = [n, n, l, nz];
    let scale = gt.max(numerics::max_abs(&at)).max(numerics::max_abs(&c)).max(numerics::max_abs(&d));
    b.psd(BOUNDED_REAL, DUAL_LAMBDA, margin(tol, scale), |e| {
        let y = e.var(yv);
        let lk = e.var(lv);
        let blocks = vec![
            (0, 0, -y),
            (0, 1, &at * y + &bt * lk),
            (0, 2, g.clone()),
            (0, 3, Mat::zeros(n, nz)),
            (1, 1, -y),
            (1, 2, Mat::zeros(n, l)),
            (1, 3, (&c * y + &d * lk).transpose()),
            (2, 2, Mat::identity(l, l) * -gt),
            (2, 3, Mat::zeros(l, nz)),
            (3, 3, Mat::identity(nz, nz) * -gt),
        ];
        -assemble(&sizes, &blocks)
    })?;
    b.psd(COUPLING, DUAL_PHI, 0.0, |e| {
        let mut cm = Mat::zeros(2 * n, 2 * n);
        cm.view_mut((0, 0), (n, n)).copy_from(e.var(wv));
        cm.view_mut((n, n), (n, n)).copy_from(e.var(yv));
        for i in 0..n {
            cm[(i, n + i)] = root;
            cm[(n + i, i)] = root;
        }
        cm
    })?;
    b.objective(|e| e.var(wv).trace())?;
    Ok(b.build())
}

/// Constraints in `(R⁻¹, s, λ)` under which every `u ∈ U` satisfies the
/// per-stage domination `uᵀRu + s ≤ uᵀR0u`.
///
/// * Finite `U = {u₁..u_k}`: `[uᵢᵀR0uᵢ − s, uᵢᵀ; uᵢ, R⁻¹] ⪰ 0` for each `i`.
/// * Box or quadratic `U = {u : uᵀRᵢu + sᵢ ≤ 0}`: `λᵢ ≥ 0`,
///   `[R0 + ΣλᵢRᵢ, I; I, R⁻¹] ⪰ 0` and `s ≤ Σλᵢsᵢ`.
///
/// Both add `R⁻¹ ⪰ εI`. Variables are `R_inv` (Sym m), `s` and, in the
/// quadratic case, `lambda` (k×1). The objective is zero; the caller adds
/// the `s/(1−α)` term after merging.
pub fn encode_stage_domination(
    u: &InputConstraint,
    r0: &Mat,
    tol: &Tolerances,
) -> Result<ConicProgram, LmiError> {
    let m = r0.nrows();
    if u.dim().is_some_and(|d| d != m) {
        return Err(LmiError::Dimension("input set and R0 disagree on m".into()));
    }
    let mut b = ProgramBuilder::new("stage_domination", Sense::Maximize);
    let rv = b.var(PARAM_R_INV, BlockKind::Sym(m));
    let sv = b.var(VAR_S, BlockKind::Scalar);
    // Keeps R⁻¹ away from singular even with a zero margin.
    let eps = margin(tol, 1.0).max(1e-9);
    match u {
        InputConstraint::Finite { points } => {
            if points.is_empty() {
                return Err(LmiError::EmptyFiniteSet);
            }
            for (i, pt) in points.iter().enumerate() {
                let ui = Vec64::from_column_slice(pt);
                let cost = (ui.transpose() * r0 * &ui)[(0, 0)];
                b.psd(&format!("finite_{i}"), &format!("mu_{i}"), 0.0, |e| {
                    let mut c = Mat::zeros(m + 1, m + 1);
                    c[(0, 0)] = cost - e.scalar(sv);
                    for j in 0..m {
                        c[(0, j + 1)] = ui[j];
                        c[(j + 1, 0)] = ui[j];
                    }
                    c.view_mut((1, 1), (m, m)).copy_from(e.var(rv));
                    c
                })?;
            }
        }
        _ => {
            let (ri, si) = u
                .to_quadratic()
                .ok_or_else(|| LmiError::Dimension("input set has no quadratic form".into()))?;
            let k = ri.len();
            let lv = b.var("lambda", BlockKind::Full(k, 1));
            for i in 0..k {
                b.psd(&format!("lambda_{i}>=0"), &format!("nu_lambda_{i}"), 0.0, |e| {
                    Mat::from_element(1, 1, e.var(lv)[(i, 0)])
                })?;
            }
            b.psd("s_procedure", "Psi", 0.0, |e| {
                let mut top = r0.clone();
                for (i, rm) in ri.iter().enumerate() {
                    top += rm * e.var(lv)[(i, 0)];
                }
                let mut c = Mat::zeros(2 * m, 2 * m);
                c.view_mut((0, 0), (m, m)).copy_from(&top);
                c.view_mut((m, m), (m, m)).copy_from(e.var(rv));
                for j in 0..m {
                    c[(j, m + j)] = 1.0;
                    c[(m + j, j)] = 1.0;
                }
                c
            })?;
            b.psd("offset", "nu_offset", 0.0, |e| {
                let total: f64 = (0..k).map(|i| e.var(lv)[(i, 0)] * si[i]).sum();
                Mat::from_element(1, 1, total - e.scalar(sv))
            })?;
        }
    }
    b.psd("R_inv_pd", "nu_R_inv", eps, |e| e.var(rv).clone())?;
    Ok(b.build())
}

/// Feasibility program certifying that the adversary `w = K_w x` stays in
/// `{w : wᵀSw ≤ β}` along `x⁺ = A_cl x` from `x0`: find `H ⪰ 0`, `t = 1`
/// with `H ⪰ t·K_wᵀSK_w`, `x0ᵀHx0 ≤ β·t` and `A_clᵀHA_cl ⪯ H`.
pub fn build_verify(
    a_cl: &Mat,
    kw: &Mat,
    s: &Mat,
    beta: f64,
    x0: &Vec64,
) -> Result<ConicProgram, LmiError> {
    let n = a_cl.nrows();
    if a_cl.ncols() != n || kw.ncols() != n || s.shape() != (kw.nrows(), kw.nrows()) || x0.len() != n {
        return Err(LmiError::Dimension("verification data are inconsistent".into()));
    }
    let kskw = numerics::symmetrize(&(kw.transpose() * s * kw));
    let mut b = ProgramBuilder::new("verify", Sense::Minimize);
    let hv = b.var("H", BlockKind::Sym(n));
    let tv = b.var("t", BlockKind::Scalar);
    b.psd("kw_in_W", "D1", 0.0, |e| e.var(hv) - &kskw * e.scalar(tv))?;
    b.psd("level", "D2", 0.0, |e| {
        Mat::from_element(1, 1, beta * e.scalar(tv) - (x0.transpose() * e.var(hv) * x0)[(0, 0)])
    })?;
    b.psd("invariance", "D3", 0.0, |e| {
        let h = e.var(hv);
        h - a_cl.transpose() * h * a_cl
    })?;
    b.psd("H_psd", "D4", 0.0, |e| e.var(hv).clone())?;
    b.eq("normalization", false, |e| Mat::from_element(1, 1, e.scalar(tv) - 1.0))?;
    b.objective(|_| 0.0)?;
    Ok(b.build())
}
