//! Invariants of certificates and rollouts on random data.

mod common;

use std::sync::OnceLock;

use minmax_bounds::bounds::{domination_slack, max_offset};
use minmax_bounds::sim::{clipped_policy, rollout, RandomBoundaryAdversary};
use minmax_bounds::{basic_bound, certify, evaluate_bound, BoundCertificate, Mat, ProblemInstance, Tolerances, Vec64};
use proptest::prelude::*;

fn instance() -> &'static (ProblemInstance, BoundCertificate) {
    static CELL: OnceLock<(ProblemInstance, BoundCertificate)> = OnceLock::new();
    CELL.get_or_init(|| {
        let (mut v, _) = common::validated_random(1, 3, 2, 2, 5);
        let (_, p) = v.remove(0);
        let cert = basic_bound(&p, p.gamma0, &Tolerances::default()).unwrap();
        (p, cert)
    })
}

fn diag_r(scale: [f64; 2], rot: f64) -> Mat {
    let (c, s) = (rot.cos(), rot.sin());
    let q = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
    let d = Mat::from_diagonal(&Vec64::from_column_slice(&scale));
    &q * d * q.transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn offset_dominates_on_the_box(scale in prop::array::uniform2(0.05f64..4.0), rot in 0.0f64..3.2, seed in 0u64..1000) {
        let (p, _) = instance();
        let r = diag_r(scale, rot);
        let (s, _) = max_offset(&p.u, &p.r0, &r, &Tolerances::default()).unwrap();
        let (us, _) = common::domination_samples(p, 9, seed);
        for u in &us {
            let gap = (u.transpose() * (&p.r0 - &r) * u)[(0, 0)] - s;
            prop_assert!(gap >= -1e-7 * (1.0 + s.abs()), "gap {gap} at {u}");
        }
    }

    #[test]
    fn certified_stage_cost_is_dominated(scale in prop::array::uniform2(0.2f64..3.0), rot in 0.0f64..3.2, seed in 0u64..1000) {
        let (p, _) = instance();
        let r = diag_r(scale, rot);
        let tol = Tolerances::default();
        let Ok(cert) = certify(p, &r, f64::NEG_INFINITY, p.gamma0, &tol) else {
            // An R for which the game at γ0 is ill posed certifies nothing.
            return Ok(());
        };
        let (us, ws) = common::domination_samples(p, 7, seed);
        for (u, w) in us.iter().zip(&ws) {
            let slack = domination_slack(p, &cert, u, w);
            prop_assert!(slack >= -1e-7 * (1.0 + cert.s.abs()), "slack {slack}");
        }
    }

    #[test]
    fn certify_rejects_offsets_above_the_maximum(excess in 1e-3f64..10.0) {
        let (p, cert) = instance();
        let tol = Tolerances::default();
        let (s_max, _) = max_offset(&p.u, &p.r0, &cert.r, &tol).unwrap();
        prop_assert!(certify(p, &cert.r, s_max + excess, p.gamma0, &tol).is_err());
    }

    #[test]
    fn bound_is_quadratic_plus_offset(x in prop::array::uniform3(-3.0f64..3.0), c in -4.0f64..4.0) {
        let (_, cert) = instance();
        let x = Vec64::from_column_slice(&x);
        let base = evaluate_bound(cert, &x).unwrap() - cert.offset();
        let scaled = evaluate_bound(cert, &(&x * c)).unwrap() - cert.offset();
        prop_assert!((scaled - c * c * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
        prop_assert!(base >= -1e-12 * x.norm_squared());
    }

    #[test]
    fn clipped_rollouts_stay_admissible(x in prop::array::uniform3(-5.0f64..5.0), seed in 0u64..1000) {
        let (p, cert) = instance();
        let policy = clipped_policy(&cert.k, &p.u).unwrap();
        let mut adv = RandomBoundaryAdversary::new(&p.w.s, p.w.beta, seed).unwrap();
        let tr = rollout(p, &policy, &mut adv, &Vec64::from_column_slice(&x), 40).unwrap();
        prop_assert!(tr.inputs_admissible && tr.disturbances_admissible);
        for u in &tr.inputs {
            prop_assert!(p.u.contains(u, 1e-12));
        }
        let scale = tr.states.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        prop_assert!(tr.max_dynamics_residual <= 1e-12 * scale);
    }
}

#[test]
fn heavier_input_weight_pays_the_corner_offset() {
    let (p, basic) = instance();
    let cert = certify(p, &(&p.r0 * 1.2), f64::NEG_INFINITY, p.gamma0, &Tolerances::default()).unwrap();
    let minmax_bounds::InputConstraint::Box { u_max } = &p.u else { panic!("box instance") };
    let corner = [(1.0, 1.0), (1.0, -1.0)]
        .iter()
        .map(|&(a, b)| {
            let u = Vec64::from_column_slice(&[a * u_max[0], b * u_max[1]]);
            (u.transpose() * &p.r0 * &u)[(0, 0)]
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((cert.s + 0.2 * corner).abs() <= 1e-6 * corner, "s = {}, expected {}", cert.s, -0.2 * corner);
    assert!(cert.trace > basic.trace);
}
