//! Dense primal-dual interior-point method (HKM direction, Mehrotra
//! predictor-corrector, infeasible start) for small block-diagonal SDPs.
//!
//! A linear [`ConicProgram`] `min cᵀx s.t. F_j(x) ⪰ ε_j I, Ex = e` is reduced
//! to free coordinates `x = x_p + T z`, and then solved in the standard pair
//!
//! ```text
//! (P) min ⟨C, X⟩  s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0
//! (D) max bᵀz     s.t. Σ z_i A_i + S = C, S ⪰ 0
//! ```
//!
//! with `C = F_0`, `A_i = −F_i`, `b = −c`; `z` is the program's variable and
//! `X` collects the constraint multipliers.

use nalgebra::Cholesky;

use super::program::{ConicProgram, Sense};
use super::{Capabilities, LmiError, Residuals, SolveResult, SolveStatus, SolverBackend, SolverSettings};
use crate::numerics::{sym_eig_unchecked, symmetrize};
use crate::{Mat, Vec64};

/// The in-tree reference backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl SolverBackend for InteriorPoint {
    fn name(&self) -> &'static str {
        "in-tree HKM interior point"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            max_block: 64,
            supports_equalities: true,
        }
    }

    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<SolveResult, LmiError> {
        solve_program(prog, settings)
    }
}

/// Standard-form data after elimination and scaling.
struct Core {
    dims: Vec<usize>,
    c: Vec<Mat>,
    /// `a[i][j]`: block `j` of `A_i`, `None` when zero.
    a: Vec<Vec<Option<Mat>>>,
    b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CoreExit {
    Converged,
    InfeasibleCert,
    UnboundedCert,
    MaxIter,
    Stalled,
    Diverged,
    Breakdown,
}

struct CoreOutcome {
    exit: CoreExit,
    z: Vec<f64>,
    x: Vec<Mat>,
    iterations: usize,
    pobj: f64,
    dobj: f64,
    /// `‖𝒜(X) − b‖/(1+‖b‖)`: multiplier (dual) feasibility of the program.
    mult_inf: f64,
    /// `‖C − S − 𝒜ᵀz‖/(1+‖C‖)`: primal feasibility of the program.
    var_inf: f64,
    rel_gap: f64,
    reason: &'static str,
}

fn inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn max_step(x: &Mat, dx: &Mat) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let linv = l.clone().try_inverse()?;
    let m = symmetrize(&(&linv * dx * linv.transpose()));
    let lam = sym_eig_unchecked(&m).min();
    Some(if lam >= 0.0 { f64::INFINITY } else { -1.0 / lam })
}

impl Core {
    fn m(&self) -> usize {
        self.b.len()
    }

    fn apply(&self, x: &[Mat]) -> Vec<f64> {
        self.a
            .iter()
            .map(|ai| {
                ai.iter()
                    .zip(x)
                    .map(|(aij, xj)| aij.as_ref().map_or(0.0, |a| inner(a, xj)))
                    .sum()
            })
            .collect()
    }

    fn adjoint(&self, z: &[f64]) -> Vec<Mat> {
        let mut out: Vec<Mat> = self.dims.iter().map(|&k| Mat::zeros(k, k)).collect();
        for (ai, zi) in self.a.iter().zip(z) {
            if *zi == 0.0 {
                continue;
            }
            for (j, aij) in ai.iter().enumerate() {
                if let Some(a) = aij {
                    out[j] += a * *zi;
                }
            }
        }
        out
    }

    fn norm_c(&self) -> f64 {
        self.c.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt()
    }

    fn solve(&self, settings: &SolverSettings) -> CoreOutcome {
        let m = self.m();
        let nb = self.dims.len();
        let nu: f64 = self.dims.iter().sum::<usize>() as f64;
        let norm_b = self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_c = self.norm_c();

        let mut x: Vec<Mat> = Vec::with_capacity(nb);
        let mut s: Vec<Mat> = Vec::with_capacity(nb);
        for j in 0..nb {
            let k = self.dims[j] as f64;
            let mut amax: f64 = 0.0;
            let mut ratio: f64 = 0.0;
            for (i, ai) in self.a.iter().enumerate() {
                if let Some(a) = &ai[j] {
                    let na = a.norm();
                    amax = amax.max(na);
                    ratio = ratio.max((1.0 + self.b[i].abs()) / (1.0 + na));
                }
            }
            let xi = 10f64.max(k.sqrt()).max(k * ratio);
            let eta = 10f64.max(k.sqrt()).max(self.c[j].norm()).max(amax);
            x.push(Mat::identity(self.dims[j], self.dims[j]) * xi);
            s.push(Mat::identity(self.dims[j], self.dims[j]) * eta);
        }
        let mut z = vec![0.0; m];

        let mut outcome = CoreOutcome {
            exit: CoreExit::MaxIter,
            z: z.clone(),
            x: x.clone(),
            iterations: 0,
            pobj: f64::NAN,
            dobj: f64::NAN,
            mult_inf: f64::INFINITY,
            var_inf: f64::INFINITY,
            rel_gap: f64::INFINITY,
            reason: "",
        };
        let mut stall = 0usize;
        let mut best_merit = f64::INFINITY;

        for iter in 0..=settings.max_iter {
            let ax = self.apply(&x);
            let rp: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let aty = self.adjoint(&z);
            let rd: Vec<Mat> = (0..nb).map(|j| &self.c[j] - &s[j] - &aty[j]).collect();
            let pobj: f64 = (0..nb).map(|j| inner(&self.c[j], &x[j])).sum();
            let dobj: f64 = self.b.iter().zip(&z).map(|(b, y)| b * y).sum();
            let gap: f64 = (0..nb).map(|j| inner(&x[j], &s[j])).sum();
            let mu = gap / nu;
            let mult_inf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + norm_b);
            let var_inf = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + norm_c);
            let rel_gap = gap.abs().max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());

            outcome.z.clone_from(&z);
            outcome.x.clone_from(&x);
            outcome.iterations = iter;
            outcome.pobj = pobj;
            outcome.dobj = dobj;
            outcome.mult_inf = mult_inf;
            outcome.var_inf = var_inf;
            outcome.rel_gap = rel_gap;

            if !(pobj.is_finite() && dobj.is_finite() && gap.is_finite()) {
                outcome.exit = CoreExit::Breakdown;
                outcome.reason = "non-finite objective";
                return outcome;
            }
            if rel_gap <= settings.tol && mult_inf <= settings.tol && var_inf <= settings.tol {
                outcome.exit = CoreExit::Converged;
                return outcome;
            }
            // Farkas-type certificates.
            let xnorm: f64 = x.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
            if pobj < 0.0 {
                let ax_norm = ax.iter().map(|v| v * v).sum::<f64>().sqrt();
                if ax_norm / (-pobj) < settings.tol && xnorm > 1e3 {
                    outcome.exit = CoreExit::InfeasibleCert;
                    return outcome;
                }
            }
            if dobj > 0.0 {
                let ray: f64 = (0..nb)
                    .map(|j| (&aty[j] + &s[j]).norm_squared())
                    .sum::<f64>()
                    .sqrt();
                let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                if ray / dobj < settings.tol && znorm > 1e3 {
                    outcome.exit = CoreExit::UnboundedCert;
                    return outcome;
                }
            }
            if xnorm > 1e14 || z.iter().any(|v| v.abs() > 1e14) {
                outcome.exit = CoreExit::Diverged;
                return outcome;
            }
            log::trace!("{iter:3} pobj {pobj:+.10e} dobj {dobj:+.10e} gap {rel_gap:.2e} pinf {mult_inf:.2e} dinf {var_inf:.2e} mu {mu:.2e}");
            let merit = rel_gap.max(mult_inf).max(var_inf);
            if merit < 0.999 * best_merit {
                best_merit = merit;
                stall = 0;
            } else {
                stall += 1;
                if stall > 30 {
                    outcome.exit = CoreExit::Stalled;
                    return outcome;
                }
            }
            if iter == settings.max_iter {
                break;
            }

            let Some(sinv) = s
                .iter()
                .map(|sj| Cholesky::new(sj.clone()).map(|c| symmetrize(&c.inverse())))
                .collect::<Option<Vec<Mat>>>()
            else {
                outcome.exit = CoreExit::Breakdown;
                outcome.reason = "S lost definiteness";
                return outcome;
            };

            // Schur complement M_ik = ⟨A_i, X A_k S⁻¹⟩.
            let mut g: Vec<Vec<Option<Mat>>> = Vec::with_capacity(m);
            for ak in &self.a {
                g.push(
                    ak.iter()
                        .enumerate()
                        .map(|(j, a)| a.as_ref().map(|a| &x[j] * a * &sinv[j]))
                        .collect(),
                );
            }
            let mut schur = Mat::zeros(m, m);
            for i in 0..m {
                for k in i..m {
                    let mut v = 0.0;
                    for j in 0..nb {
                        if let (Some(a), Some(gk)) = (&self.a[i][j], &g[k][j]) {
                            v += inner(a, gk);
                        }
                    }
                    schur[(i, k)] = v;
                    schur[(k, i)] = v;
                }
            }
            let diag_max = (0..m).map(|i| schur[(i, i)].abs()).fold(0.0, f64::max);
            let chol = match Cholesky::new(schur.clone()) {
                Some(c) => c,
                None => {
                    let mut reg = schur.clone();
                    for i in 0..m {
                        reg[(i, i)] += 1e-13 * diag_max.max(1.0);
                    }
                    match Cholesky::new(reg) {
                        Some(c) => c,
                        None => {
                            outcome.exit = CoreExit::Breakdown;
                outcome.reason = "Schur complement singular";
                            return outcome;
                        }
                    }
                }
            };

            // 𝒜(X R_d S⁻¹) is shared by both solves.
            let xrs: Vec<Mat> = (0..nb).map(|j| &x[j] * &rd[j] * &sinv[j]).collect();
            let a_xrs = self.apply(&xrs);

            let direction = |rhs: Vec<f64>, extra: &[Mat], sigma_mu: f64| {
                let rhs = Vec64::from_vec(rhs);
                let mut dz = chol.solve(&rhs);
                // One step of iterative refinement against the unregularized matrix.
                let fix = chol.solve(&(&rhs - &schur * &dz));
                dz += fix;
                let dz: Vec<f64> = dz.iter().copied().collect();
                let atdz = self.adjoint(&dz);
                let ds: Vec<Mat> = (0..nb).map(|j| &rd[j] - &atdz[j]).collect();
                let dx: Vec<Mat> = (0..nb)
                    .map(|j| {
                        let t = &sinv[j] * sigma_mu - &x[j] - (&x[j] * &ds[j] + &extra[j]) * &sinv[j];
                        symmetrize(&t)
                    })
                    .collect();
                (dz, dx, ds)
            };
            let steps = |dx: &[Mat], ds: &[Mat]| -> Option<(f64, f64)> {
                let mut ap = f64::INFINITY;
                let mut ad = f64::INFINITY;
                for j in 0..nb {
                    ap = ap.min(max_step(&x[j], &dx[j])?);
                    ad = ad.min(max_step(&s[j], &ds[j])?);
                }
                Some((ap, ad))
            };

            // Predictor.
            let zeros: Vec<Mat> = self.dims.iter().map(|&k| Mat::zeros(k, k)).collect();
            let rhs: Vec<f64> = (0..m).map(|i| self.b[i] + a_xrs[i]).collect();
            let (_, dxa, dsa) = direction(rhs, &zeros, 0.0);
            let Some((apa, ada)) = steps(&dxa, &dsa) else {
                outcome.exit = CoreExit::Breakdown;
                outcome.reason = "step length (predictor)";
                return outcome;
            };
            let apa = apa.min(1.0);
            let ada = ada.min(1.0);
            let gap_a: f64 = (0..nb)
                .map(|j| inner(&(&x[j] + &dxa[j] * apa), &(&s[j] + &dsa[j] * ada)))
                .sum();
            let expon = 1f64.max(3.0 * apa.min(ada).powi(2));
            let sigma = if gap > 0.0 { (gap_a / gap).max(0.0).powf(expon).min(1.0) } else { 0.0 };

            // Corrector.
            let corr: Vec<Mat> = (0..nb).map(|j| &dxa[j] * &dsa[j]).collect();
            let sinv_rhs = self.apply(&sinv);
            let corr_s: Vec<Mat> = (0..nb).map(|j| &corr[j] * &sinv[j]).collect();
            let a_corr = self.apply(&corr_s);
            let rhs: Vec<f64> = (0..m)
                .map(|i| self.b[i] - sigma * mu * sinv_rhs[i] + a_xrs[i] + a_corr[i])
                .collect();
            let (dz, dx, ds) = direction(rhs, &corr, sigma * mu);
            let Some((ap, ad)) = steps(&dx, &ds) else {
                outcome.exit = CoreExit::Breakdown;
                outcome.reason = "step length (corrector)";
                return outcome;
            };
            let tau = settings.step_fraction.max(0.9 + 0.09 * apa.min(ada)).min(0.995);
            let mut ap = (tau * ap).min(1.0);
            let mut ad = (tau * ad).min(1.0);
            // Rounding can push a nearly singular iterate out of the cone;
            // shorten the step until both stay positive definite.
            let mut accepted = None;
            for _ in 0..30 {
                let xn: Vec<Mat> = (0..nb).map(|j| symmetrize(&(&x[j] + &dx[j] * ap))).collect();
                let sn: Vec<Mat> = (0..nb).map(|j| symmetrize(&(&s[j] + &ds[j] * ad))).collect();
                let inside = xn.iter().chain(&sn).all(|m| Cholesky::new(m.clone()).is_some());
                if inside {
                    accepted = Some((xn, sn));
                    break;
                }
                ap *= 0.7;
                ad *= 0.7;
            }
            let Some((xn, sn)) = accepted else {
                outcome.exit = CoreExit::Breakdown;
                outcome.reason = "no step keeps the iterates interior";
                return outcome;
            };
            x = xn;
            s = sn;
            for (zi, dzi) in z.iter_mut().zip(&dz) {
                *zi += ad * dzi;
            }
        }
        outcome.exit = CoreExit::MaxIter;
        outcome
    }

    /// `min t s.t. F_j + tI ⪰ 0, t ≥ −1`; returns `t*` when it converges.
    fn phase_one(&self, settings: &SolverSettings) -> Option<f64> {
        let nb = self.dims.len();
        let mut dims = self.dims.clone();
        dims.push(1);
        let mut c = self.c.clone();
        c.push(Mat::from_element(1, 1, 1.0));
        let mut a: Vec<Vec<Option<Mat>>> = self
            .a
            .iter()
            .map(|ai| {
                let mut row = ai.clone();
                row.push(None);
                row
            })
            .collect();
        let mut t_row: Vec<Option<Mat>> = self
            .dims
            .iter()
            .map(|&k| Some(-Mat::identity(k, k)))
            .collect();
        t_row.push(Some(Mat::from_element(1, 1, -1.0)));
        a.push(t_row);
        let mut b = vec![0.0; self.m()];
        b.push(-1.0);
        let core = Core { dims, c, a, b };
        let out = core.solve(settings);
        let _ = nb;
        matches!(out.exit, CoreExit::Converged).then(|| -out.dobj)
    }
}

fn reason_tag(reason: &str) -> String {
    if reason.is_empty() {
        String::new()
    } else {
        format!(" ({reason})")
    }
}

struct Reduction {
    x_p: Vec<f64>,
    /// Columns map free coordinates to program coordinates.
    t: Mat,
}

/// Minimum-norm particular solution and null-space basis of `E x = e`.
fn eliminate_equalities(e: &Mat, rhs: &Vec64, n: usize, rank_tol: f64) -> Result<Reduction, String> {
    if e.nrows() == 0 {
        return Ok(Reduction {
            x_p: vec![0.0; n],
            t: Mat::identity(n, n),
        });
    }
    let svd = e.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u");
    let vt = svd.v_t.as_ref().expect("v_t");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|s| **s > rank_tol * smax.max(1e-300)).count();
    let mut x_p = Vec64::zeros(n);
    for k in 0..rank {
        let coef = u.column(k).dot(rhs) / sv[k];
        x_p += vt.row(k).transpose() * coef;
    }
    let resid = (e * &x_p - rhs).norm();
    if resid > 1e-9 * (1.0 + rhs.norm()) {
        return Err(format!("equality constraints are inconsistent (residual {resid:.3e})"));
    }
    // Complete the row space to an orthonormal basis of ℝⁿ.
    let mut t = Mat::zeros(n, n - rank);
    if rank < n {
        let mut aug = Mat::zeros(n, n + rank);
        for k in 0..rank {
            aug.set_column(k, &vt.row(k).transpose());
        }
        aug.columns_mut(rank, n).copy_from(&Mat::identity(n, n));
        let q = aug.qr().q();
        t.copy_from(&q.columns(rank, n - rank));
    }
    Ok(Reduction {
        x_p: x_p.iter().copied().collect(),
        t,
    })
}

fn empty_result(prog: &ConicProgram, status: SolveStatus, message: String) -> SolveResult {
    SolveResult {
        status,
        x: vec![f64::NAN; prog.n_coords()],
        primal: Default::default(),
        duals: Default::default(),
        eq_duals: vec![f64::NAN; prog.eqs.len()],
        objective: f64::NAN,
        dual_objective: f64::NAN,
        residuals: Residuals {
            primal: f64::INFINITY,
            dual: f64::INFINITY,
            gap: f64::INFINITY,
        },
        iterations: 0,
        message,
    }
}

pub(crate) fn solve_program(prog: &ConicProgram, settings: &SolverSettings) -> Result<SolveResult, LmiError> {
    if !prog.is_linear() {
        return Err(LmiError::Bilinear(prog.name.clone()));
    }
    let n = prog.n_coords();
    let theta = prog.theta();
    let sign = match prog.objective.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut c = vec![0.0; n];
    for (i, v) in &prog.objective.linear {
        c[*i] += sign * v;
    }
    let mut c0 = sign * prog.objective.constant;
    for (j, v) in &prog.objective.param_linear {
        c0 += sign * v * theta[*j];
    }

    let ne = prog.eqs.len();
    let mut e = Mat::zeros(ne, n);
    let mut e_rhs = Vec64::zeros(ne);
    for (r, eq) in prog.eqs.iter().enumerate() {
        for (i, a) in &eq.var_terms {
            e[(r, *i)] += a;
        }
        let mut k = eq.constant;
        for (j, a) in &eq.param_terms {
            k += a * theta[*j];
        }
        e_rhs[r] = -k;
    }
    let red = match eliminate_equalities(&e, &e_rhs, n, 1e-11) {
        Ok(r) => r,
        Err(msg) => return Ok(empty_result(prog, SolveStatus::Infeasible, msg)),
    };

    // Per-block constant and coefficient matrices in the reduced coordinates.
    let nb = prog.psd.len();
    let dims: Vec<usize> = prog.psd.iter().map(|c| c.map.dim).collect();
    let mut f0: Vec<Mat> = Vec::with_capacity(nb);
    for con in &prog.psd {
        let mut k = con.map.bound_constant(&theta) - Mat::identity(con.map.dim, con.map.dim) * con.margin;
        for (i, f) in &con.map.var_terms {
            if red.x_p[*i] != 0.0 {
                k += f * red.x_p[*i];
            }
        }
        f0.push(symmetrize(&k));
    }
    let mut free = red.t.ncols();
    let mut fk: Vec<Vec<Mat>> = (0..free)
        .map(|_| dims.iter().map(|&k| Mat::zeros(k, k)).collect())
        .collect();
    for (j, con) in prog.psd.iter().enumerate() {
        for (i, f) in &con.map.var_terms {
            for k in 0..free {
                let w = red.t[(*i, k)];
                if w != 0.0 {
                    fk[k][j] += f * w;
                }
            }
        }
    }
    let mut ck: Vec<f64> = (0..free)
        .map(|k| (0..n).map(|i| c[i] * red.t[(i, k)]).sum())
        .collect();
    let c0_red = c0 + (0..n).map(|i| c[i] * red.x_p[i]).sum::<f64>();
    let mut basis = red.t.clone();

    // Directions that move no block: null space of the Gram matrix of the
    // coefficient matrices.
    if free > 0 {
        let mut gram = Mat::zeros(free, free);
        for k in 0..free {
            for q in k..free {
                let v: f64 = (0..nb).map(|j| inner(&fk[k][j], &fk[q][j])).sum();
                gram[(k, q)] = v;
                gram[(q, k)] = v;
            }
        }
        let eig = sym_eig_unchecked(&gram);
        let top = eig.max().max(1e-300);
        let keep: Vec<usize> = (0..free).filter(|&i| eig.eigenvalues[i] > 1e-22 * top).collect();
        if keep.len() < free {
            let cvec = Vec64::from_column_slice(&ck);
            let cnorm = cvec.norm();
            for i in (0..free).filter(|i| !keep.contains(i)) {
                let along = eig.eigenvectors.column(i).dot(&cvec);
                if along.abs() > 1e-9 * (1.0 + cnorm) {
                    let mut out = empty_result(
                        prog,
                        SolveStatus::Unbounded,
                        "objective improves along a direction that leaves every constraint unchanged".into(),
                    );
                    out.objective = -sign * f64::INFINITY;
                    return Ok(out);
                }
            }
            let v: Mat = Mat::from_fn(free, keep.len(), |r, q| eig.eigenvectors[(r, keep[q])]);
            let new_fk: Vec<Vec<Mat>> = (0..keep.len())
                .map(|q| {
                    (0..nb)
                        .map(|j| {
                            let mut acc = Mat::zeros(dims[j], dims[j]);
                            for k in 0..free {
                                if v[(k, q)] != 0.0 {
                                    acc += &fk[k][j] * v[(k, q)];
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect();
            ck = (0..keep.len()).map(|q| (0..free).map(|k| ck[k] * v[(k, q)]).sum()).collect();
            basis = &basis * &v;
            fk = new_fk;
            free = keep.len();
        }
    }

    // Column scaling of the free coordinates and row scaling of the blocks.
    let col_scale: Vec<f64> = (0..free)
        .map(|k| {
            let nrm = fk[k].iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
            if nrm > 0.0 {
                1.0 / nrm
            } else {
                1.0
            }
        })
        .collect();
    let block_scale: Vec<f64> = (0..nb)
        .map(|j| {
            let mut s = f0[j].amax();
            for k in 0..free {
                s = s.max(fk[k][j].amax() * col_scale[k]);
            }
            if s > 0.0 {
                1.0 / s
            } else {
                1.0
            }
        })
        .collect();

    let core = Core {
        dims: dims.clone(),
        c: (0..nb).map(|j| &f0[j] * block_scale[j]).collect(),
        a: (0..free)
            .map(|k| {
                (0..nb)
                    .map(|j| {
                        let m = &fk[k][j] * (-col_scale[k] * block_scale[j]);
                        (m.amax() > 0.0).then_some(m)
                    })
                    .collect()
            })
            .collect(),
        b: (0..free).map(|k| -ck[k] * col_scale[k]).collect(),
    };

    let recover_x = |zs: &[f64]| -> Vec<f64> {
        let mut x = red.x_p.clone();
        for k in 0..free {
            let zk = zs[k] * col_scale[k];
            for i in 0..n {
                x[i] += basis[(i, k)] * zk;
            }
        }
        x
    };

    if free == 0 || nb == 0 {
        let x = recover_x(&vec![0.0; free]);
        let feasible = (0..nb).all(|j| sym_eig_unchecked(&f0[j]).min() >= -settings.tol * (1.0 + f0[j].amax()));
        let status = if feasible && free == 0 {
            SolveStatus::Optimal
        } else if feasible {
            // No constraint depends on the free coordinates.
            if ck.iter().all(|v| v.abs() <= 1e-12) {
                SolveStatus::Optimal
            } else {
                SolveStatus::Unbounded
            }
        } else {
            SolveStatus::Infeasible
        };
        let mut out = finish(prog, settings, &x, &dims, (0..nb).map(|j| Mat::zeros(dims[j], dims[j])).collect(), &e, &c, 0, status);
        out.message = "no free coordinates after elimination".into();
        return Ok(out);
    }

    let outcome = core.solve(settings);
    let duals: Vec<Mat> = (0..nb).map(|j| &outcome.x[j] * block_scale[j]).collect();
    let x = recover_x(&outcome.z);
    let (status, message) = match outcome.exit {
        CoreExit::Converged => (SolveStatus::Optimal, "converged".to_string()),
        CoreExit::InfeasibleCert => (SolveStatus::Infeasible, "infeasibility certificate".to_string()),
        CoreExit::UnboundedCert => (SolveStatus::Unbounded, "unboundedness certificate".to_string()),
        other => match core.phase_one(settings) {
            Some(t) if t > 1e3 * settings.tol => (
                SolveStatus::Infeasible,
                format!("{other:?}; phase-I optimum t* = {t:.3e} > 0"),
            ),
            Some(t) if t < -1e3 * settings.tol && outcome.dobj > 1e8 * (1.0 + c0_red.abs()) => (
                SolveStatus::Unbounded,
                format!("{other:?}; strictly feasible and objective diverging"),
            ),
            Some(t) => (
                SolveStatus::NumericalTrouble,
                format!(
                    "{other:?}{} after {} iterations (gap {:.2e}, primal {:.2e}, dual {:.2e}); phase-I t* = {t:.3e}",
                    reason_tag(outcome.reason), outcome.iterations, outcome.rel_gap, outcome.var_inf, outcome.mult_inf
                ),
            ),
            None => (
                SolveStatus::NumericalTrouble,
                format!(
                    "{other:?}{} after {} iterations (gap {:.2e}, primal {:.2e}, dual {:.2e}); phase I failed",
                    reason_tag(outcome.reason), outcome.iterations, outcome.rel_gap, outcome.var_inf, outcome.mult_inf
                ),
            ),
        },
    };
    let mut out = finish(prog, settings, &x, &dims, duals, &e, &c, outcome.iterations, status);
    out.residuals = Residuals {
        primal: outcome.var_inf,
        dual: outcome.mult_inf,
        gap: outcome.rel_gap,
    };
    out.message = message;
    if status == SolveStatus::Infeasible {
        out.objective = sign * f64::INFINITY;
    }
    Ok(out)
}

/// Packs primal blocks, duals, equality multipliers and objective values.
#[allow(clippy::too_many_arguments)]
fn finish(
    prog: &ConicProgram,
    _settings: &SolverSettings,
    x: &[f64],
    dims: &[usize],
    duals: Vec<Mat>,
    e: &Mat,
    c: &[f64],
    iterations: usize,
    status: SolveStatus,
) -> SolveResult {
    let n = prog.n_coords();
    let theta = prog.theta();
    let sign = match prog.objective.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    // Stationarity c − 𝒜*(Z) = Eᵀν determines ν in the least-squares sense.
    let mut grad = Vec64::from_column_slice(c);
    for (j, con) in prog.psd.iter().enumerate() {
        for (i, f) in &con.map.var_terms {
            grad[*i] -= inner(f, &duals[j]);
        }
    }
    let nu: Vec<f64> = if e.nrows() > 0 {
        let et = e.transpose();
        match et.clone().svd(true, true).solve(&grad, 1e-12) {
            Ok(v) => v.iter().copied().collect(),
            Err(_) => vec![f64::NAN; e.nrows()],
        }
    } else {
        Vec::new()
    };
    // Dual objective c0 − Σ⟨Z_j, F_j0 − ε_j I⟩ + νᵀe.
    let mut c0 = prog.objective.constant * sign;
    for (j, v) in &prog.objective.param_linear {
        c0 += sign * v * theta[*j];
    }
    let mut dual_obj = c0;
    for (j, con) in prog.psd.iter().enumerate() {
        let k = con.map.bound_constant(&theta) - Mat::identity(dims[j], dims[j]) * con.margin;
        dual_obj -= inner(&k, &duals[j]);
    }
    for (r, eq) in prog.eqs.iter().enumerate() {
        let mut k = eq.constant;
        for (j, a) in &eq.param_terms {
            k += a * theta[*j];
        }
        dual_obj += nu[r] * (-k);
    }
    let primal = prog
        .vars
        .iter()
        .map(|b| (b.name.clone(), b.kind.assemble(&x[b.coords()])))
        .collect();
    let named_duals = prog
        .psd
        .iter()
        .zip(duals)
        .map(|(con, z)| (con.name.clone(), z))
        .collect();
    let _ = n;
    SolveResult {
        status,
        x: x.to_vec(),
        primal,
        duals: named_duals,
        eq_duals: nu,
        objective: prog.objective_value(x),
        dual_objective: sign * dual_obj,
        residuals: Residuals {
            primal: 0.0,
            dual: 0.0,
            gap: 0.0,
        },
        iterations,
        message: String::new(),
    }
}
