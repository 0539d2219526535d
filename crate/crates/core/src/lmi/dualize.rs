//! Mechanical Lagrangian dual of a conic program.
//!
//! For `min c0 + cᵀx + dᵀθ` subject to `F_j(x, θ) ⪰ ε_j I` and
//! `a_eᵀx + p_eᵀθ + k_e = 0`, the dual is
//!
//! ```text
//! max  c0 + dᵀθ − Σ_j ⟨Z_j, F_j0(θ) − ε_j I⟩ − Σ_e ν_e (k_e + p_eᵀθ)
//! s.t. Σ_j ⟨Z_j, F_ji⟩ + Σ_e ν_e a_ei = c_i   for every coordinate i,
//!      Z_j ⪰ 0.
//! ```
//!
//! One parameter block may be promoted to a decision variable. Its products
//! with the dual blocks become bilinear objective terms; every other
//! parameter is bound to its current value.

use super::program::{AffineMatrix, Block, BlockKind, ConicProgram, EqConstraint, PsdConstraint, Sense};
use super::LmiError;
use crate::Mat;

/// Weight of entry `(a, b)`, `a ≤ b`, in `⟨Z, F⟩` for symmetric `Z, F`.
fn mult(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        2.0
    }
}

/// Dual of `prog`, with parameter `promote` (if any) turned into a variable.
/// A maximization primal is handled as the minimization of its negation and
/// the dual is returned as a minimization, so that optimal values agree.
pub fn dualize(prog: &ConicProgram, promote: Option<&str>) -> Result<ConicProgram, LmiError> {
    if !prog.is_linear() {
        return Err(LmiError::Bilinear(prog.name.clone()));
    }
    let promoted = match promote {
        Some(name) => Some(
            prog.param(name)
                .ok_or_else(|| LmiError::UnknownParam(name.to_string()))?
                .clone(),
        ),
        None => None,
    };
    let is_promoted = |j: usize| promoted.as_ref().is_some_and(|p| (p.offset..p.offset + p.kind.len()).contains(&j));
    let sign = match prog.objective.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let theta = prog.theta();

    let mut dual = ConicProgram::empty(&format!("dual({})", prog.name), Sense::Maximize);
    let mut offset = 0;
    let mut z_offsets = Vec::with_capacity(prog.psd.len());
    for c in &prog.psd {
        let kind = BlockKind::Sym(c.map.dim);
        dual.vars.push(Block {
            name: c.dual_name.clone(),
            kind,
            offset,
        });
        z_offsets.push(offset);
        offset += kind.len();
    }
    let nu_offset = offset;
    for e in &prog.eqs {
        dual.vars.push(Block {
            name: format!("nu:{}", e.name),
            kind: BlockKind::Scalar,
            offset,
        });
        offset += 1;
    }
    let promoted_offset = offset;
    if let Some(p) = &promoted {
        dual.vars.push(Block {
            name: p.name.clone(),
            kind: p.kind,
            offset,
        });
    }
    // Dual coordinate of primal parameter coordinate j (promoted only).
    let theta_coord = |j: usize| promoted_offset + (j - promoted.as_ref().map_or(0, |p| p.offset));

    // Z_j ⪰ 0.
    for (j, c) in prog.psd.iter().enumerate() {
        let kind = BlockKind::Sym(c.map.dim);
        let var_terms = (0..kind.len())
            .map(|idx| {
                let mut unit = vec![0.0; kind.len()];
                unit[idx] = 1.0;
                (z_offsets[j] + idx, kind.assemble(&unit))
            })
            .collect();
        dual.psd.push(PsdConstraint {
            name: format!("dual:{}", c.name),
            dual_name: format!("primal:{}", c.name),
            margin: 0.0,
            map: AffineMatrix {
                dim: c.map.dim,
                constant: Mat::zeros(c.map.dim, c.map.dim),
                var_terms,
                param_terms: Vec::new(),
            },
        });
    }

    // Stationarity in every primal coordinate.
    let n = prog.n_coords();
    let mut cost = vec![0.0; n];
    for (i, v) in &prog.objective.linear {
        cost[*i] += sign * v;
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (j, c) in prog.psd.iter().enumerate() {
        let kind = BlockKind::Sym(c.map.dim);
        for (i, f) in &c.map.var_terms {
            for idx in 0..kind.len() {
                let (a, b) = kind.entry(idx);
                let v = f[(a, b)] * mult(a, b);
                if v != 0.0 {
                    rows[*i].push((z_offsets[j] + idx, v));
                }
            }
        }
    }
    for (e_idx, e) in prog.eqs.iter().enumerate() {
        for (i, a) in &e.var_terms {
            rows[*i].push((nu_offset + e_idx, *a));
        }
    }
    for (i, terms) in rows.into_iter().enumerate() {
        dual.eqs.push(EqConstraint {
            name: format!("stationarity:{}", prog.coord_label(i)),
            var_terms: terms,
            param_terms: Vec::new(),
            constant: -cost[i],
        });
    }

    // Dual function.
    let obj = &mut dual.objective;
    obj.constant = sign * prog.objective.constant;
    for (j, v) in &prog.objective.param_linear {
        if is_promoted(*j) {
            obj.linear.push((theta_coord(*j), sign * v));
        } else {
            obj.constant += sign * v * theta[*j];
        }
    }
    for (j, c) in prog.psd.iter().enumerate() {
        let kind = BlockKind::Sym(c.map.dim);
        let mut bound = c.map.constant.clone() - Mat::identity(c.map.dim, c.map.dim) * c.margin;
        for (p, h) in &c.map.param_terms {
            if !is_promoted(*p) {
                bound += h * theta[*p];
            }
        }
        for idx in 0..kind.len() {
            let (a, b) = kind.entry(idx);
            let v = bound[(a, b)] * mult(a, b);
            if v != 0.0 {
                obj.linear.push((z_offsets[j] + idx, -v));
            }
        }
        for (p, h) in &c.map.param_terms {
            if !is_promoted(*p) {
                continue;
            }
            for idx in 0..kind.len() {
                let (a, b) = kind.entry(idx);
                let v = h[(a, b)] * mult(a, b);
                if v != 0.0 {
                    obj.bilinear.push((z_offsets[j] + idx, theta_coord(*p), -v));
                }
            }
        }
    }
    for (e_idx, e) in prog.eqs.iter().enumerate() {
        let mut k = e.constant;
        for (p, a) in &e.param_terms {
            if is_promoted(*p) {
                obj.bilinear.push((nu_offset + e_idx, theta_coord(*p), -a));
            } else {
                k += a * theta[*p];
            }
        }
        if k != 0.0 {
            obj.linear.push((nu_offset + e_idx, -k));
        }
    }
    if sign < 0.0 {
        dual.objective.sense = Sense::Minimize;
        let o = &mut dual.objective;
        o.constant = -o.constant;
        o.linear.iter_mut().for_each(|t| t.1 = -t.1);
        o.bilinear.iter_mut().for_each(|t| t.2 = -t.2);
    }
    Ok(dual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tolerances;
    use crate::lmi::builders::{build_relaxation4, DUAL_LAMBDA, DUAL_PHI, DUAL_Z, PARAM_R_INV};
    use crate::lmi::program::ProgramBuilder;
    use crate::lmi::{solve_default, SolveStatus};
    use crate::model::reference_example;
    use crate::numerics::spd_inverse;

    #[test]
    fn dual_of_lp_has_equal_value() {
        let mut b = ProgramBuilder::new("lp", Sense::Minimize);
        let x = b.var("x", BlockKind::Scalar);
        let y = b.var("y", BlockKind::Scalar);
        b.psd("x>=0", "zx", 0.0, |e| Mat::from_element(1, 1, e.scalar(x))).unwrap();
        b.psd("y>=1", "zy", 0.0, |e| Mat::from_element(1, 1, e.scalar(y) - 1.0)).unwrap();
        b.eq("sum", false, |e| Mat::from_element(1, 1, e.scalar(x) + e.scalar(y) - 3.0)).unwrap();
        b.objective(|e| 2.0 * e.scalar(x) + e.scalar(y)).unwrap();
        let prog = b.build();
        let tol = Tolerances::default();
        let primal = solve_default(&prog, &tol).unwrap();
        let dual = dualize(&prog, None).unwrap();
        assert_eq!(dual.eqs.len(), 2);
        let d = solve_default(&dual, &tol).unwrap();
        assert_eq!(d.status, SolveStatus::Optimal, "{}", d.message);
        assert!((primal.objective - 3.0).abs() < 1e-7);
        assert!((d.objective - 3.0).abs() < 1e-7);
    }

    #[test]
    fn maximization_primal_is_negated() {
        let mut b = ProgramBuilder::new("max", Sense::Maximize);
        let t = b.var("t", BlockKind::Scalar);
        b.psd("cap", "z", 0.0, |e| Mat::from_element(1, 1, 2.0 - e.scalar(t))).unwrap();
        b.objective(|e| e.scalar(t)).unwrap();
        let dual = dualize(&b.build(), None).unwrap();
        assert_eq!(dual.objective.sense, Sense::Minimize);
        let d = solve_default(&dual, &Tolerances::default()).unwrap();
        assert!((d.objective - 2.0).abs() < 1e-7);
    }

    #[test]
    fn degenerate_programs_swap_status() {
        let tol = Tolerances::default();
        // Primal unbounded: min −t s.t. t ≥ 1. The dual asks z = −1, z ≥ 0.
        let mut b = ProgramBuilder::new("ray", Sense::Minimize);
        let t = b.var("t", BlockKind::Scalar);
        b.psd("t>=1", "z", 0.0, |e| Mat::from_element(1, 1, e.scalar(t) - 1.0)).unwrap();
        b.objective(|e| -e.scalar(t)).unwrap();
        let d = solve_default(&dualize(&b.build(), None).unwrap(), &tol).unwrap();
        assert_eq!(d.status, SolveStatus::Infeasible);
        // Primal infeasible: t ≥ 1 and −t ≥ 0. The dual is unbounded.
        let mut b = ProgramBuilder::new("bad", Sense::Minimize);
        let t = b.var("t", BlockKind::Scalar);
        b.psd("t>=1", "z1", 0.0, |e| Mat::from_element(1, 1, e.scalar(t) - 1.0)).unwrap();
        b.psd("-t>=0", "z2", 0.0, |e| Mat::from_element(1, 1, -e.scalar(t))).unwrap();
        b.objective(|e| e.scalar(t)).unwrap();
        let d = solve_default(&dualize(&b.build(), None).unwrap(), &tol).unwrap();
        assert_eq!(d.status, SolveStatus::Unbounded);
    }

    #[test]
    fn relaxation4_dual_structure() {
        let p = reference_example(1.0, 4.6147);
        let tol = Tolerances::default();
        let r4 = build_relaxation4(&p, &p.q0, &spd_inverse(&p.r0).unwrap(), p.gamma0, &tol).unwrap();
        let dual = dualize(&r4.program, Some(PARAM_R_INV)).unwrap();
        let names: Vec<&str> = dual.vars.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(names, vec![DUAL_Z, DUAL_PHI, DUAL_LAMBDA, PARAM_R_INV]);
        assert_eq!(dual.var(DUAL_Z).unwrap().kind, BlockKind::Sym(p.l()));
        let groups = dual.bilinear_groups();
        assert_eq!(groups.len(), 1);
        assert!(groups.contains_key(&(DUAL_LAMBDA.to_string(), PARAM_R_INV.to_string())));
        let lam = dual.var(DUAL_LAMBDA).unwrap();
        let range = r4.lambda33();
        for &(i, _, _) in &dual.objective.bilinear {
            let (a, b) = lam.kind.entry(i - lam.offset);
            assert!(range.contains(&a) && range.contains(&b));
        }
        // Stationarity in X involves Φ and Λ only; in P, Z and Φ only.
        let z = dual.var(DUAL_Z).unwrap().coords();
        let phi = dual.var(DUAL_PHI).unwrap().coords();
        let lam = lam.coords();
        for e in &dual.eqs {
            let touches = |r: &std::ops::Range<usize>| e.var_terms.iter().any(|(i, _)| r.contains(i));
            if e.name.starts_with("stationarity:X") {
                assert!(!touches(&z) && touches(&phi) && touches(&lam), "{}", e.name);
            } else if e.name.starts_with("stationarity:P") {
                assert!(touches(&z) && touches(&phi) && !touches(&lam), "{}", e.name);
            }
        }
        // X(0,0): one Φ₁₁ entry plus Λ entries.
        let row = dual.eqs.iter().find(|e| e.name == "stationarity:X(0,0)").unwrap();
        let phi_terms: Vec<_> = row.var_terms.iter().filter(|(i, _)| phi.contains(i)).collect();
        assert_eq!(phi_terms.len(), 1);
        assert_eq!(*phi_terms[0], (phi.start, 1.0));
    }

    #[test]
    fn strong_duality_at_frozen_r_inv() {
        let p = reference_example(1.0, 4.6147);
        let tol = Tolerances::default();
        let r_inv = spd_inverse(&p.r0).unwrap();
        let r4 = build_relaxation4(&p, &p.q0, &r_inv, p.gamma0, &tol).unwrap();
        let primal = solve_default(&r4.program, &tol).unwrap();
        let dual = dualize(&r4.program, Some(PARAM_R_INV)).unwrap();
        let frozen = dual.freeze_block(PARAM_R_INV, &r_inv).unwrap();
        assert!(frozen.is_linear());
        let d = solve_default(&frozen, &tol).unwrap();
        assert_eq!(d.status, SolveStatus::Optimal, "{}", d.message);
        let rel = (d.objective - primal.objective).abs() / primal.objective.abs();
        assert!(rel < 1e-5, "primal {} dual {}", primal.objective, d.objective);
        // The unpromoted dual agrees as well.
        let plain = solve_default(&dualize(&r4.program, None).unwrap(), &tol).unwrap();
        assert!((plain.objective - d.objective).abs() < 1e-6 * d.objective.abs());
    }

    #[test]
    fn bilinear_program_is_rejected() {
        let mut prog = ConicProgram::empty("bl", Sense::Minimize);
        prog.vars.push(Block { name: "a".into(), kind: BlockKind::Scalar, offset: 0 });
        prog.objective.bilinear.push((0, 0, 1.0));
        assert!(matches!(dualize(&prog, None), Err(LmiError::Bilinear(_))));
        assert!(matches!(
            dualize(&ConicProgram::empty("e", Sense::Minimize), Some("nope")),
            Err(LmiError::UnknownParam(_))
        ));
    }
}
