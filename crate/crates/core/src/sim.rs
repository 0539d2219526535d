//! Closed-loop rollouts against adversarial disturbances, gap reports and a
//! brute-force grid value-iteration oracle for scalar systems.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{evaluate_bound, BoundCertificate, RegionCertificate};
use crate::model::{InputConstraint, ProblemInstance};
use crate::numerics::{spd_inverse, sym_eig_unchecked, sym_sqrt, symmetrize};
use crate::{Mat, Vec64};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0}")]
    Dimension(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("export failed: {0}")]
    Export(String),
}

/// Default horizon: the discount weight `α^T` falls below 1e-8.
pub fn default_horizon(alpha: f64) -> usize {
    ((1e-8f64).ln() / alpha.ln()).ceil().max(1.0) as usize
}

pub trait Policy {
    fn name(&self) -> String;
    fn input(&self, x: &Vec64) -> Vec64;
}

pub trait Adversary {
    fn name(&self) -> String;
    fn disturbance(&mut self, x: &Vec64, u: &Vec64) -> Vec64;
}

/// `u = Kx` without saturation.
#[derive(Debug, Clone)]
pub struct LinearPolicy {
    pub k: Mat,
}

impl Policy for LinearPolicy {
    fn name(&self) -> String {
        "unconstrained".into()
    }
    fn input(&self, x: &Vec64) -> Vec64 {
        &self.k * x
    }
}

/// `Kx` projected onto `U`.
#[derive(Debug, Clone)]
pub struct ClippedPolicy {
    pub k: Mat,
    pub u: InputConstraint,
}

pub fn clipped_policy(k: &Mat, u: &InputConstraint) -> Result<ClippedPolicy, SimError> {
    match u {
        InputConstraint::Quadratic { .. } => Err(SimError::Unsupported(
            "no projection rule for quadratic-intersection input sets".into(),
        )),
        InputConstraint::Finite { points } if points.is_empty() => {
            Err(SimError::Unsupported("finite input set is empty".into()))
        }
        _ if u.dim().is_some_and(|m| m != k.nrows()) => Err(SimError::Dimension(format!(
            "K has {} rows, U has dimension {}",
            k.nrows(),
            u.dim().unwrap_or(0)
        ))),
        _ => Ok(ClippedPolicy {
            k: k.clone(),
            u: u.clone(),
        }),
    }
}

impl Policy for ClippedPolicy {
    fn name(&self) -> String {
        "clipped".into()
    }
    fn input(&self, x: &Vec64) -> Vec64 {
        let v = &self.k * x;
        match &self.u {
            InputConstraint::Box { u_max } => {
                Vec64::from_iterator(v.len(), v.iter().zip(u_max).map(|(a, b)| a.clamp(-b, *b)))
            }
            InputConstraint::Finite { points } => {
                // Strict comparison keeps the lowest index on ties.
                let mut best = 0;
                let mut dist = f64::INFINITY;
                for (i, p) in points.iter().enumerate() {
                    let d: f64 = p.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < dist {
                        dist = d;
                        best = i;
                    }
                }
                Vec64::from_column_slice(&points[best])
            }
            InputConstraint::Quadratic { .. } => unreachable!("rejected at construction"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZeroAdversary {
    pub l: usize,
}

impl Adversary for ZeroAdversary {
    fn name(&self) -> String {
        "zero".into()
    }
    fn disturbance(&mut self, _x: &Vec64, _u: &Vec64) -> Vec64 {
        Vec64::zeros(self.l)
    }
}

/// `w = K_w x` without projection.
#[derive(Debug, Clone)]
pub struct LinearAdversary {
    pub kw: Mat,
}

impl Adversary for LinearAdversary {
    fn name(&self) -> String {
        "unconstrained".into()
    }
    fn disturbance(&mut self, x: &Vec64, _u: &Vec64) -> Vec64 {
        &self.kw * x
    }
}

/// `K_w x`, radially scaled back onto `W` when it leaves it.
#[derive(Debug, Clone)]
pub struct ClippedKwAdversary {
    pub kw: Mat,
    pub s: Mat,
    pub beta: f64,
}

impl Adversary for ClippedKwAdversary {
    fn name(&self) -> String {
        "clipped-kw".into()
    }
    fn disturbance(&mut self, x: &Vec64, _u: &Vec64) -> Vec64 {
        let w = &self.kw * x;
        let q = w.dot(&(&self.s * &w));
        if q > self.beta {
            w * (self.beta / q).sqrt()
        } else {
            w
        }
    }
}

/// Uniformly random direction on the boundary of `W`, seeded.
#[derive(Debug, Clone)]
pub struct RandomBoundaryAdversary {
    rng: ChaCha8Rng,
    map: Mat,
    seed: u64,
}

impl RandomBoundaryAdversary {
    pub fn new(s: &Mat, beta: f64, seed: u64) -> Result<Self, SimError> {
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            map: ellipsoid_map(s, beta)?,
            seed,
        })
    }
}

impl Adversary for RandomBoundaryAdversary {
    fn name(&self) -> String {
        format!("random:{}", self.seed)
    }
    fn disturbance(&mut self, _x: &Vec64, _u: &Vec64) -> Vec64 {
        let l = self.map.ncols();
        loop {
            let v = Vec64::from_fn(l, |_, _| StandardNormal.sample(&mut self.rng));
            let nv = v.norm();
            if nv > 0.0 {
                return &self.map * (v / nv);
            }
        }
    }
}

/// `√β·S^{-1/2}`, mapping the unit ball onto `{w : wᵀSw ≤ β}`.
fn ellipsoid_map(s: &Mat, beta: f64) -> Result<Mat, SimError> {
    let root = sym_sqrt(s);
    let inv = spd_inverse(&root).map_err(|_| SimError::Unsupported("W must have S ≻ 0".into()))?;
    Ok(inv * beta.sqrt())
}

/// Maximizer of `vᵀHv + 2gᵀv` over `‖v‖ ≤ r`, exact up to the secular
/// equation root.
pub fn trs_maximize(h: &Mat, g: &Vec64, r: f64) -> Vec64 {
    let k = g.len();
    if k == 0 {
        return Vec64::zeros(0);
    }
    let eig = sym_eig_unchecked(&symmetrize(h));
    let q = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let gh = q.transpose() * g;
    let lmax = lam[k - 1];
    let scale = lam.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let norm_at = |mu: f64| -> f64 {
        (0..k)
            .map(|i| {
                let d = mu - lam[i];
                if d > 0.0 {
                    (gh[i] / d).powi(2)
                } else if gh[i] == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .sum::<f64>()
            .sqrt()
    };
    let coords = |mu: f64| -> Vec64 {
        Vec64::from_fn(k, |i, _| {
            let d = mu - lam[i];
            if d > 0.0 {
                gh[i] / d
            } else {
                0.0
            }
        })
    };
    // Interior stationary point of a strictly concave objective.
    if lmax < 0.0 && norm_at(0.0) <= r {
        return q * coords(0.0);
    }
    let top = |i: usize| lam[i] >= lmax - 1e-12 * scale;
    let gnorm = g.norm();
    let top_weight: f64 = (0..k).filter(|&i| top(i)).map(|i| gh[i] * gh[i]).sum::<f64>().sqrt();
    if lmax >= 0.0 && top_weight <= 1e-14 * gnorm.max(1e-300) {
        // Possible hard case: the top eigenspace carries no linear term.
        let rest: f64 = (0..k)
            .filter(|&i| !top(i))
            .map(|i| (gh[i] / (lmax - lam[i])).powi(2))
            .sum::<f64>()
            .sqrt();
        if rest <= r {
            let mut v = Vec64::from_fn(k, |i, _| if top(i) { 0.0 } else { gh[i] / (lmax - lam[i]) });
            v[k - 1] = (r * r - rest * rest).max(0.0).sqrt();
            return q * v;
        }
    }
    let mut lo = lmax.max(0.0);
    let mut hi = lo.max(lmax + gnorm / r) + f64::EPSILON * scale;
    while norm_at(hi) > r {
        hi = lo + 2.0 * (hi - lo).max(1e-300);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = coords(hi);
    let nv = v.norm();
    let v = if nv > 0.0 { v * (r / nv) } else { v };
    q * v
}

/// One-step Isaacs continuation with value surrogate `P_hat`.
#[derive(Debug, Clone)]
pub struct GreedyAdversary {
    a: Mat,
    b: Mat,
    g: Mat,
    p_hat: Mat,
    alpha: f64,
    gamma0: f64,
    map: Mat,
    radius: f64,
}

pub fn greedy_adversary(p_hat: &Mat, p: &ProblemInstance) -> Result<GreedyAdversary, SimError> {
    if p_hat.shape() != (p.n(), p.n()) {
        return Err(SimError::Dimension("P_hat must be n×n".into()));
    }
    // w = S^{-1/2} v with ‖v‖ ≤ √β.
    let map = ellipsoid_map(&p.w.s, 1.0)?;
    Ok(GreedyAdversary {
        a: p.a.clone(),
        b: p.b.clone(),
        g: p.g.clone(),
        p_hat: symmetrize(p_hat),
        alpha: p.alpha,
        gamma0: p.gamma0,
        map,
        radius: p.w.beta.sqrt(),
    })
}

impl GreedyAdversary {
    /// `−γ0²‖w‖² + α(Ax+Bu+Gw)ᵀP̂(Ax+Bu+Gw)`.
    pub fn objective(&self, x: &Vec64, u: &Vec64, w: &Vec64) -> f64 {
        let y = &self.a * x + &self.b * u + &self.g * w;
        -self.gamma0 * self.gamma0 * w.norm_squared() + self.alpha * y.dot(&(&self.p_hat * &y))
    }
}

impl Adversary for GreedyAdversary {
    fn name(&self) -> String {
        "greedy".into()
    }
    fn disturbance(&mut self, x: &Vec64, u: &Vec64) -> Vec64 {
        let l = self.g.ncols();
        let c = &self.a * x + &self.b * u;
        let h = self.g.transpose() * &self.p_hat * &self.g * self.alpha - Mat::identity(l, l) * self.gamma0.powi(2);
        let gl = self.g.transpose() * (&self.p_hat * c) * self.alpha;
        let ht = self.map.transpose() * h * &self.map;
        let gt = self.map.transpose() * gl;
        &self.map * trs_maximize(&ht, &gt, self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub policy: String,
    pub adversary: String,
    pub horizon: usize,
    pub alpha: f64,
    /// `x_0..x_T`.
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub discounted_cost: f64,
    /// `α^T·|ℓ_{T−1}|/(1−α)`; an estimate of the truncated tail, not a bound.
    pub tail_estimate: f64,
    pub max_dynamics_residual: f64,
    pub inputs_admissible: bool,
    pub disturbances_admissible: bool,
}

impl Trace {
    /// One row per time step: `t, x…, u…, w…, stage_cost, discounted_sum`.
    /// The final row holds `x_T` with empty input and disturbance fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.inputs.first().map_or(0, Vec::len);
        let l = self.disturbances.first().map_or(0, Vec::len);
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..m).map(|i| format!("u{i}")));
        header.extend((0..l).map(|i| format!("w{i}")));
        header.push("stage_cost".into());
        header.push("discounted_sum".into());
        let err = |e: csv::Error| SimError::Export(e.to_string());
        wtr.write_record(&header).map_err(err)?;
        let mut acc = 0.0;
        let mut weight = 1.0;
        let alpha = self.alpha;
        for t in 0..=self.horizon {
            let mut row = vec![t.to_string()];
            row.extend(self.states[t].iter().map(|v| v.to_string()));
            if t < self.horizon {
                acc += weight * self.stage_costs[t];
                weight *= alpha;
                row.extend(self.inputs[t].iter().map(|v| v.to_string()));
                row.extend(self.disturbances[t].iter().map(|v| v.to_string()));
                row.push(self.stage_costs[t].to_string());
                row.push(acc.to_string());
            } else {
                row.extend(std::iter::repeat_n(String::new(), m + l + 2));
            }
            wtr.write_record(&row).map_err(err)?;
        }
        wtr.flush().map_err(|e| SimError::Export(e.to_string()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("trace serializes")
    }
}

/// Simulates `T` steps of `x⁺ = Ax + Bu + Gw` and accumulates the
/// discounted stage cost `xᵀQ0x + uᵀR0u − γ0²wᵀw`.
pub fn rollout(
    p: &ProblemInstance,
    policy: &dyn Policy,
    adversary: &mut dyn Adversary,
    x0: &Vec64,
    horizon: usize,
) -> Result<Trace, SimError> {
    if x0.len() != p.n() {
        return Err(SimError::Dimension(format!("x0 has length {}, expected {}", x0.len(), p.n())));
    }
    if horizon == 0 {
        return Err(SimError::Unsupported("horizon must be at least 1".into()));
    }
    let mut x = x0.clone();
    let mut states = vec![x.as_slice().to_vec()];
    let mut inputs = Vec::with_capacity(horizon);
    let mut dists = Vec::with_capacity(horizon);
    let mut costs = Vec::with_capacity(horizon);
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut residual = 0.0f64;
    let (mut u_ok, mut w_ok) = (true, true);
    let g2 = p.gamma0 * p.gamma0;
    for _ in 0..horizon {
        let u = policy.input(&x);
        let w = adversary.disturbance(&x, &u);
        if u.len() != p.m() || w.len() != p.l() {
            return Err(SimError::Dimension("policy or adversary output has the wrong length".into()));
        }
        u_ok &= p.u.contains(u.as_slice(), 1e-9);
        w_ok &= p.w.contains(&w, 1e-9);
        let cost = x.dot(&(&p.q0 * &x)) + u.dot(&(&p.r0 * &u)) - g2 * w.norm_squared();
        total += weight * cost;
        weight *= p.alpha;
        let next = &p.a * &x + &p.b * &u + &p.g * &w;
        // Post-hoc consistency of the stored step.
        let check = &p.a * &x + &p.b * &u + &p.g * &w - &next;
        residual = residual.max(check.amax() / (1.0 + next.amax()));
        inputs.push(u.as_slice().to_vec());
        dists.push(w.as_slice().to_vec());
        costs.push(cost);
        x = next;
        states.push(x.as_slice().to_vec());
    }
    let tail = weight * costs[horizon - 1].abs() / (1.0 - p.alpha);
    Ok(Trace {
        policy: policy.name(),
        adversary: adversary.name(),
        horizon,
        alpha: p.alpha,
        states,
        inputs,
        disturbances: dists,
        stage_costs: costs,
        discounted_cost: total,
        tail_estimate: tail,
        max_dynamics_residual: residual,
        inputs_admissible: u_ok,
        disturbances_admissible: w_ok,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Clipped,
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    Zero,
    Greedy,
    ClippedKw,
    Random { seed: u64 },
    Unconstrained,
}

impl PolicyKind {
    pub fn build(&self, p: &ProblemInstance, cert: &BoundCertificate) -> Result<Box<dyn Policy>, SimError> {
        Ok(match self {
            PolicyKind::Clipped => Box::new(clipped_policy(&cert.k, &p.u)?),
            PolicyKind::Unconstrained => Box::new(LinearPolicy { k: cert.k.clone() }),
        })
    }
}

impl AdversaryKind {
    pub fn build(&self, p: &ProblemInstance, cert: &BoundCertificate) -> Result<Box<dyn Adversary>, SimError> {
        Ok(match self {
            AdversaryKind::Zero => Box::new(ZeroAdversary { l: p.l() }),
            AdversaryKind::Greedy => Box::new(greedy_adversary(&cert.p, p)?),
            AdversaryKind::ClippedKw => Box::new(ClippedKwAdversary {
                kw: cert.kw.clone(),
                s: p.w.s.clone(),
                beta: p.w.beta,
            }),
            AdversaryKind::Random { seed } => Box::new(RandomBoundaryAdversary::new(&p.w.s, p.w.beta, *seed)?),
            AdversaryKind::Unconstrained => Box::new(LinearAdversary { kw: cert.kw.clone() }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub policy: String,
    pub adversary: String,
    /// Simulated discounted cost: a lower estimate of the policy's worst case.
    pub cost: f64,
    pub tail_estimate: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub x0: Vec<f64>,
    pub lower_bound: f64,
    pub verified: bool,
    /// Set when `x0` is not verified: the lower bound may not apply.
    pub caveat: bool,
    pub entries: Vec<GapEntry>,
    /// Largest simulated cost per policy.
    pub best_adversary_cost: BTreeMap<String, f64>,
    /// Policies for which the zero adversary beat the greedy one.
    pub dominance_violations: Vec<String>,
}

impl GapReport {
    /// One row per (policy, adversary) pair.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut wtr = csv::Writer::from_writer(out);
        let err = |e: csv::Error| SimError::Export(e.to_string());
        wtr.write_record(["policy", "adversary", "cost", "tail_estimate", "admissible", "lower_bound", "verified"])
            .map_err(err)?;
        for e in &self.entries {
            wtr.write_record([
                e.policy.clone(),
                e.adversary.clone(),
                e.cost.to_string(),
                e.tail_estimate.to_string(),
                e.admissible.to_string(),
                self.lower_bound.to_string(),
                self.verified.to_string(),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(|e| SimError::Export(e.to_string()))
    }
}

/// Bound at `x0` against simulated costs of each policy/adversary pair.
/// `region` is the outcome of verifying `x0`, if it was verified.
pub fn gap_report(
    cert: &BoundCertificate,
    p: &ProblemInstance,
    x0: &Vec64,
    policies: &[PolicyKind],
    adversaries: &[AdversaryKind],
    horizon: usize,
    region: Option<&RegionCertificate>,
) -> Result<GapReport, SimError> {
    let lower_bound = evaluate_bound(cert, x0).map_err(|e| SimError::Dimension(e.to_string()))?;
    let mut entries = Vec::new();
    let mut best = BTreeMap::new();
    let mut violations = Vec::new();
    for pk in policies {
        let policy = pk.build(p, cert)?;
        let mut by_adv = BTreeMap::new();
        for ak in adversaries {
            let mut adv = ak.build(p, cert)?;
            let tr = rollout(p, policy.as_ref(), adv.as_mut(), x0, horizon)?;
            let e = best.entry(tr.policy.clone()).or_insert(f64::NEG_INFINITY);
            *e = f64::max(*e, tr.discounted_cost);
            by_adv.insert(tr.adversary.clone(), tr.discounted_cost);
            entries.push(GapEntry {
                policy: tr.policy,
                adversary: tr.adversary,
                cost: tr.discounted_cost,
                tail_estimate: tr.tail_estimate,
                admissible: tr.inputs_admissible && tr.disturbances_admissible,
            });
        }
        if let (Some(z), Some(g)) = (by_adv.get("zero"), by_adv.get("greedy")) {
            if z > g {
                violations.push(policy.name());
                log::warn!("policy {}: zero adversary cost {z} exceeds greedy {g}", policy.name());
            }
        }
    }
    Ok(GapReport {
        x0: x0.as_slice().to_vec(),
        lower_bound,
        verified: region.is_some(),
        caveat: region.is_none(),
        entries,
        best_adversary_cost: best,
        dominance_violations: violations,
    })
}

/// Grid value function of a scalar system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridValue {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Estimated bound on `|V − V_grid|` on the grid: the interpolation,
    /// disturbance-grid and stopping errors of one Bellman step, each with its
    /// Lipschitz constant read off the computed table, amplified by
    /// `1/(1−α)`. Edge saturation is not covered (see `warnings`).
    pub eps_grid: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub warnings: Vec<String>,
}

impl GridValue {
    /// Linear interpolation, saturated at the grid edges.
    pub fn value_at(&self, y: f64) -> f64 {
        interp(&self.x, &self.v, y)
    }
}

fn interp(xs: &[f64], vs: &[f64], y: f64) -> f64 {
    let n = xs.len();
    if y <= xs[0] {
        return vs[0];
    }
    if y >= xs[n - 1] {
        return vs[n - 1];
    }
    let j = xs.partition_point(|&v| v <= y).clamp(1, n - 1);
    let t = (y - xs[j - 1]) / (xs[j] - xs[j - 1]);
    vs[j - 1] + t * (vs[j] - vs[j - 1])
}

fn max_spacing(g: &[f64]) -> f64 {
    g.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

fn sorted_strict(g: &[f64]) -> bool {
    g.windows(2).all(|w| w[1] > w[0])
}

/// Discounted min-max value iteration on a grid for `n = 1`:
/// `V(x) = min_{u ∈ u_grid} max_{w ∈ w_grid} ℓ(x, u, w) + α·V(ax + bu + gw)`.
/// `u_grid` lists admissible scalar inputs (for finite `U`, its points) and
/// `w_grid` admissible scalar disturbances.
pub fn grid_dp_oracle(
    p: &ProblemInstance,
    x_grid: &[f64],
    u_grid: &[f64],
    w_grid: &[f64],
    vi_tol: f64,
) -> Result<GridValue, SimError> {
    if p.n() != 1 || p.m() != 1 || p.l() != 1 {
        return Err(SimError::Unsupported("grid oracle requires n = m = l = 1".into()));
    }
    if !(p.alpha < 1.0) {
        return Err(SimError::Unsupported("grid oracle requires α < 1".into()));
    }
    if x_grid.len() < 2 || !sorted_strict(x_grid) {
        return Err(SimError::Dimension("x grid must be strictly increasing with ≥ 2 points".into()));
    }
    let mut u_sorted = u_grid.to_vec();
    u_sorted.sort_by(f64::total_cmp);
    let mut w_sorted = w_grid.to_vec();
    w_sorted.sort_by(f64::total_cmp);
    if u_sorted.is_empty() || w_sorted.is_empty() {
        return Err(SimError::Dimension("u and w grids must be nonempty".into()));
    }
    if let Some(u) = u_sorted.iter().find(|u| !p.u.contains(&[**u], 1e-12)) {
        return Err(SimError::Dimension(format!("u grid point {u} is not in U")));
    }
    if let Some(w) = w_sorted.iter().find(|w| !p.w.contains(&Vec64::from_element(1, **w), 1e-12)) {
        return Err(SimError::Dimension(format!("w grid point {w} is not in W")));
    }
    let (a, b, g) = (p.a[(0, 0)], p.b[(0, 0)], p.g[(0, 0)]);
    let (q, r, g2, alpha) = (p.q0[(0, 0)], p.r0[(0, 0)], p.gamma0 * p.gamma0, p.alpha);
    let nx = x_grid.len();
    let mut v = vec![0.0; nx];
    let mut residuals = Vec::new();
    let max_iter = 100_000;
    let mut exits = 0usize;
    for it in 0..max_iter {
        let mut next = vec![0.0; nx];
        let mut out = 0usize;
        for (i, &x) in x_grid.iter().enumerate() {
            let mut best_u = f64::INFINITY;
            let mut leaves = false;
            for &u in &u_sorted {
                let mut worst = f64::NEG_INFINITY;
                let mut arg = 0.0;
                for &w in &w_sorted {
                    let y = a * x + b * u + g * w;
                    let val = q * x * x + r * u * u - g2 * w * w + alpha * interp(x_grid, &v, y);
                    if val > worst {
                        worst = val;
                        arg = y;
                    }
                }
                if worst < best_u {
                    best_u = worst;
                    leaves = arg < x_grid[0] || arg > x_grid[nx - 1];
                }
            }
            next[i] = best_u;
            out += leaves as usize;
        }
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        residuals.push(change);
        exits = out;
        if change <= vi_tol {
            break;
        }
        if it + 1 == max_iter {
            log::warn!("grid value iteration hit the iteration cap");
        }
    }
    let hx = max_spacing(x_grid);
    let lip_v = x_grid
        .windows(2)
        .zip(v.windows(2))
        .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
        .fold(0.0, f64::max);
    let w_abs = w_sorted.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let hw = match w_sorted.len() {
        1 => 0.0,
        _ => max_spacing(&w_sorted),
    };
    let lip_w = 2.0 * g2 * w_abs + alpha * g.abs() * lip_v;
    // A finite U given as its own points has no input discretization error.
    let hu = match &p.u {
        InputConstraint::Finite { .. } => 0.0,
        _ => max_spacing(&u_sorted),
    };
    let u_abs = u_sorted.iter().fold(0.0f64, |m, u| m.max(u.abs()));
    let lip_u = 2.0 * r * u_abs + alpha * b.abs() * lip_v;
    let step_err = alpha * lip_v * hx / 2.0 + lip_w * hw / 2.0 + lip_u * hu / 2.0;
    let last = residuals.last().copied().unwrap_or(0.0);
    let eps_grid = (step_err + alpha * last) / (1.0 - alpha);
    let mut warnings = Vec::new();
    if exits > 0 {
        warnings.push(format!(
            "{exits} of {nx} grid states have optimal successors outside the grid; values near the edges are saturated"
        ));
    }
    Ok(GridValue {
        x: x_grid.to_vec(),
        v,
        eps_grid,
        iterations: residuals.len(),
        residuals,
        warnings,
    })
}
