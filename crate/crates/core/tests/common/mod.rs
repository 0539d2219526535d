//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use minmax_bounds::hinf::hinf_optimal_gamma;
use minmax_bounds::model::{random_instance, reference_example, validate, DisturbanceEllipsoid};
use minmax_bounds::numerics::symmetrize;
use minmax_bounds::{InputConstraint, Mat, ProblemInstance, Tolerances, Vec64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// The four-state example at `γ0 = 1.1·γ*`.
pub fn example(u_max: f64) -> ProblemInstance {
    let tol = Tolerances::default();
    let p = reference_example(u_max, 1.0);
    let g = hinf_optimal_gamma(&p, tol.gamma_rel_tol, &tol).expect("γ* of the example");
    p.with_gamma0(1.1 * g)
}

/// The first `count` validated random instances at `γ0 = 1.1·γ*`, with the
/// seeds that were skipped.
pub fn validated_random(count: usize, n: usize, m: usize, l: usize, p: usize) -> (Vec<(u64, ProblemInstance)>, Vec<u64>) {
    let tol = Tolerances::default();
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    let mut seed = 0u64;
    while out.len() < count {
        let inst = random_instance(n, m, l, p, seed).expect("random instance");
        let ok = validate(&inst, 1e-9).map(|r| r.failures().next().is_none()).unwrap_or(false);
        match (ok, hinf_optimal_gamma(&inst, tol.gamma_rel_tol, &tol)) {
            (true, Ok(g)) => out.push((seed, inst.with_gamma0(1.1 * g))),
            _ => skipped.push(seed),
        }
        seed += 1;
    }
    (out, skipped)
}

/// Discounted Isaacs value iteration on the original data, without the
/// discount transform:
/// `P̄ = P + PG(γ²/α·I − GᵀPG)⁻¹GᵀP`,
/// `P ← Q + αAᵀP̄A − α²AᵀP̄B(R + αBᵀP̄B)⁻¹BᵀP̄A`.
pub fn direct_discounted_isaacs(p: &ProblemInstance, gamma: f64, tol: f64, max_iter: usize) -> Option<Mat> {
    let (a, b, g, q, r, alpha) = (&p.a, &p.b, &p.g, &p.q0, &p.r0, p.alpha);
    let l = g.ncols();
    let mut pm = q.clone();
    for _ in 0..max_iter {
        let inner = Mat::identity(l, l) * (gamma * gamma / alpha) - g.transpose() * &pm * g;
        let inner_inv = inner.cholesky()?.inverse();
        let pbar = &pm + &pm * g * inner_inv * g.transpose() * &pm;
        let s = r + b.transpose() * &pbar * b * alpha;
        let s_inv = s.cholesky()?.inverse();
        let bpa = b.transpose() * &pbar * a;
        let next = symmetrize(&(q + a.transpose() * &pbar * a * alpha - bpa.transpose() * s_inv * &bpa * (alpha * alpha)));
        let change = (&next - &pm).norm() / next.norm().max(1e-300);
        pm = next;
        if change <= tol {
            return Some(pm);
        }
    }
    None
}

/// Seeded scalar instance with finite `U` of three points, `W = [−1, 1]`
/// and `α = 0.9`, at `γ0 = 1.2·γ*`.
pub fn scalar_finite(seed: u64) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
    let a = sign(&mut rng) * rng.random_range(0.3..0.85);
    let b = sign(&mut rng) * rng.random_range(0.5..1.5);
    let g = rng.random_range(0.2..0.8);
    let q = rng.random_range(0.5..2.0);
    let r = rng.random_range(0.2..2.0);
    let mut pts: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
    pts.sort_by(f64::total_cmp);
    let m1 = |v: f64| Mat::from_element(1, 1, v);
    let p = ProblemInstance {
        a: m1(a),
        b: m1(b),
        g: m1(g),
        q0: m1(q),
        r0: m1(r),
        gamma0: 1.0,
        alpha: 0.9,
        u: InputConstraint::Finite {
            points: pts.into_iter().map(|v| vec![v]).collect(),
        },
        w: DisturbanceEllipsoid::unit_ball(1),
    };
    let tol = Tolerances::default();
    let gs = hinf_optimal_gamma(&p, tol.gamma_rel_tol, &tol).expect("scalar γ*");
    p.with_gamma0(1.2 * gs)
}

/// `K_w A_clᵏ x0 ∈ W` for `k = 0..steps`; returns the first failing step.
pub fn first_exit(p: &ProblemInstance, a_cl: &Mat, kw: &Mat, x0: &Vec64, steps: usize) -> Option<usize> {
    let mut x = x0.clone();
    for k in 0..=steps {
        let w = kw * &x;
        if w.dot(&(&p.w.s * &w)) > p.w.beta {
            return Some(k);
        }
        x = a_cl * x;
    }
    None
}

/// `side²` points of `U` (a grid for planar boxes, cycling for finite sets)
/// and `side²` points of `W` on `side` radii including the boundary, seeded.
pub fn domination_samples(p: &ProblemInstance, side: usize, seed: u64) -> (Vec<Vec64>, Vec<Vec64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let us: Vec<Vec64> = match &p.u {
        InputConstraint::Box { u_max } if u_max.len() == 2 => {
            let t = |i: usize, b: f64| -b + 2.0 * b * i as f64 / (side - 1) as f64;
            (0..side)
                .flat_map(|i| (0..side).map(move |j| (i, j)))
                .map(|(i, j)| Vec64::from_vec(vec![t(i, u_max[0]), t(j, u_max[1])]))
                .collect()
        }
        InputConstraint::Box { u_max } => (0..side * side)
            .map(|_| Vec64::from_iterator(u_max.len(), u_max.iter().map(|b| rng.random_range(-b..=*b))))
            .collect(),
        InputConstraint::Finite { points } => {
            (0..side * side).map(|i| Vec64::from_column_slice(&points[i % points.len()])).collect()
        }
        InputConstraint::Quadratic { .. } => panic!("no sampler for quadratic sets"),
    };
    let l = p.l();
    let root = minmax_bounds::numerics::spd_inverse(&minmax_bounds::numerics::sym_sqrt(&p.w.s)).unwrap();
    let ws: Vec<Vec64> = (0..side * side)
        .map(|i| {
            let d = Vec64::from_fn(l, |_, _| StandardNormal.sample(&mut rng));
            let radius = ((i % side) as f64 / (side - 1) as f64) * p.w.beta.sqrt();
            let unit = &d / d.norm();
            &root * unit * radius
        })
        .collect();
    (us, ws)
}
