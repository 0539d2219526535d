//! Problem data for the constrained min-max problem: dynamics, stage cost,
//! discount, input set and disturbance ellipsoid.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::numerics::{self, matrix_rank, min_eig, sym_sqrt};
use crate::{Mat, Vec64};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in field {field}")]
    NonFinite { field: String },
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u64),
    #[error("invalid discount factor {0}; expected 0 < alpha <= 1")]
    InvalidDiscount(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Admissible input set `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputConstraint {
    /// `{u : |u_i| ≤ u_max_i}`.
    Box { u_max: Vec<f64> },
    /// A finite list of admissible inputs.
    Finite { points: Vec<Vec<f64>> },
    /// `{u : uᵀR_i u + s_i ≤ 0 for all i}`.
    Quadratic { r: Vec<Mat>, s: Vec<f64> },
}

impl InputConstraint {
    pub fn unit_box(m: usize) -> Self {
        InputConstraint::Box { u_max: vec![1.0; m] }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InputConstraint::Box { .. } => "box",
            InputConstraint::Finite { .. } => "finite",
            InputConstraint::Quadratic { .. } => "quadratic",
        }
    }

    /// Input dimension implied by the description, if it has any entries.
    pub fn dim(&self) -> Option<usize> {
        match self {
            InputConstraint::Box { u_max } => Some(u_max.len()),
            InputConstraint::Finite { points } => points.first().map(Vec::len),
            InputConstraint::Quadratic { r, .. } => r.first().map(|m| m.nrows()),
        }
    }

    /// Quadratic-inequality form. Boxes map to `R_i = e_i e_iᵀ`,
    /// `s_i = −u_max_i²`; finite sets have none.
    pub fn to_quadratic(&self) -> Option<(Vec<Mat>, Vec<f64>)> {
        match self {
            InputConstraint::Box { u_max } => {
                let m = u_max.len();
                let r = (0..m)
                    .map(|i| {
                        let mut e = Mat::zeros(m, m);
                        e[(i, i)] = 1.0;
                        e
                    })
                    .collect();
                let s = u_max.iter().map(|u| -u * u).collect();
                Some((r, s))
            }
            InputConstraint::Quadratic { r, s } => Some((r.clone(), s.clone())),
            InputConstraint::Finite { .. } => None,
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            InputConstraint::Box { u_max } => {
                u.len() == u_max.len() && u.iter().zip(u_max).all(|(v, b)| v.abs() <= b + tol)
            }
            InputConstraint::Finite { points } => points.iter().any(|p| {
                p.len() == u.len() && p.iter().zip(u).all(|(a, b)| (a - b).abs() <= tol)
            }),
            InputConstraint::Quadratic { r, s } => {
                let v = Vec64::from_column_slice(u);
                r.iter()
                    .zip(s)
                    .all(|(ri, si)| v.dot(&(ri * &v)) + si <= tol)
            }
        }
    }
}

/// `W = {w : wᵀSw ≤ β}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEllipsoid {
    pub s: Mat,
    pub beta: f64,
}

impl DisturbanceEllipsoid {
    pub fn unit_ball(l: usize) -> Self {
        Self {
            s: Mat::identity(l, l),
            beta: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn contains(&self, w: &Vec64, tol: f64) -> bool {
        w.dot(&(&self.s * w)) <= self.beta * (1.0 + tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub a: Mat,
    pub b: Mat,
    pub g: Mat,
    pub q0: Mat,
    pub r0: Mat,
    pub gamma0: f64,
    pub alpha: f64,
    pub u: InputConstraint,
    pub w: DisturbanceEllipsoid,
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn l(&self) -> usize {
        self.g.ncols()
    }

    pub fn with_gamma0(mut self, gamma0: f64) -> Self {
        self.gamma0 = gamma0;
        self
    }

    pub fn with_input_constraint(mut self, u: InputConstraint) -> Self {
        self.u = u;
        self
    }

    /// Structural consistency of all blocks.
    pub fn check_dimensions(&self) -> Result<(), ModelError> {
        let n = self.a.nrows();
        let dim = |what: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(ModelError::Dimension(format!(
                    "{what} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )))
            }
        };
        dim("A", self.a.shape(), (n, n))?;
        if n == 0 {
            return Err(ModelError::Dimension("state dimension is zero".into()));
        }
        let m = self.b.ncols();
        let l = self.g.ncols();
        if m == 0 || l == 0 {
            return Err(ModelError::Dimension("B and G need at least one column".into()));
        }
        dim("B", self.b.shape(), (n, m))?;
        dim("G", self.g.shape(), (n, l))?;
        dim("Q0", self.q0.shape(), (n, n))?;
        dim("R0", self.r0.shape(), (m, m))?;
        dim("W.S", self.w.s.shape(), (l, l))?;
        match &self.u {
            InputConstraint::Box { u_max } => {
                if u_max.len() != m {
                    return Err(ModelError::Dimension(format!(
                        "U.u_max has length {}, expected {m}",
                        u_max.len()
                    )));
                }
            }
            InputConstraint::Finite { points } => {
                if let Some(p) = points.iter().find(|p| p.len() != m) {
                    return Err(ModelError::Dimension(format!(
                        "U point has length {}, expected {m}",
                        p.len()
                    )));
                }
            }
            InputConstraint::Quadratic { r, s } => {
                if r.len() != s.len() {
                    return Err(ModelError::Dimension(format!(
                        "U has {} matrices but {} offsets",
                        r.len(),
                        s.len()
                    )));
                }
                for ri in r {
                    dim("U.R_i", ri.shape(), (m, m))?;
                }
            }
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        let mats = [
            ("A", &self.a),
            ("B", &self.b),
            ("G", &self.g),
            ("Q0", &self.q0),
            ("R0", &self.r0),
            ("W.S", &self.w.s),
        ];
        for (name, mat) in mats {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { field: name.into() });
            }
        }
        for (name, v) in [("gamma0", self.gamma0), ("alpha", self.alpha), ("W.beta", self.w.beta)] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite { field: name.into() });
            }
        }
        let u_ok = match &self.u {
            InputConstraint::Box { u_max } => u_max.iter().all(|v| v.is_finite()),
            InputConstraint::Finite { points } => points.iter().flatten().all(|v| v.is_finite()),
            InputConstraint::Quadratic { r, s } => {
                r.iter().all(|m| m.iter().all(|v| v.is_finite())) && s.iter().all(|v| v.is_finite())
            }
        };
        if !u_ok {
            return Err(ModelError::NonFinite { field: "U".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub check: String,
    pub status: CheckStatus,
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.status == CheckStatus::Fail)
    }

    pub fn finding(&self, check: &str) -> Option<&Finding> {
        self.findings.iter().find(|f| f.check == check)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            let tag = match finding.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
            };
            writeln!(f, "{tag:4}  {:<28} {:.6e}", finding.check, finding.measured)?;
        }
        write!(f, "{}", if self.passed { "passed" } else { "failed" })
    }
}

fn relative_asymmetry(a: &Mat) -> f64 {
    let scale = a.norm();
    if scale == 0.0 {
        0.0
    } else {
        0.5 * (a - a.transpose()).norm() / scale
    }
}

fn relative_min_eig(a: &Mat) -> f64 {
    let s = numerics::sym_norm(a);
    if s == 0.0 {
        0.0
    } else {
        min_eig(a) / s
    }
}

/// `[B AB … A^{n−1}B]`.
pub fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.columns_mut(k * m, m).copy_from(&block);
        block = a * block;
    }
    out
}

/// Checks the standing assumptions on `p`. Dimension and finiteness problems
/// are structural errors; everything else is reported as a finding.
/// `tol` is the relative rank and definiteness tolerance.
pub fn validate(p: &ProblemInstance, tol: f64) -> Result<ValidationReport, ModelError> {
    p.check_dimensions()?;
    p.check_finite()?;
    let n = p.n();
    let mut findings = Vec::new();
    let mut push = |check: &str, ok: bool, measured: f64| {
        findings.push(Finding {
            check: check.to_string(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            measured,
        });
    };
    let sym_tol = crate::config::Tolerances::default().symmetry_tol;
    for (name, mat) in [("Q0", &p.q0), ("R0", &p.r0), ("W.S", &p.w.s)] {
        let asym = relative_asymmetry(mat);
        push(&format!("{name} symmetric"), asym <= sym_tol, asym);
    }
    let q_eig = relative_min_eig(&p.q0);
    push("Q0 positive semidefinite", q_eig >= -tol, q_eig);
    push("Q0 positive definite", q_eig > tol, q_eig);
    let r_eig = relative_min_eig(&p.r0);
    push("R0 positive definite", r_eig > tol, r_eig);
    let s_eig = relative_min_eig(&p.w.s);
    push("W.S positive definite", s_eig > tol, s_eig);
    push("W.beta positive", p.w.beta > 0.0, p.w.beta);

    let ctrb = matrix_rank(&controllability_matrix(&p.a, &p.b), tol);
    push("(A,B) controllable", ctrb == n, ctrb as f64);
    let c = sym_sqrt(&numerics::symmetrize(&p.q0));
    let obsv = matrix_rank(
        &controllability_matrix(&p.a.transpose(), &c.transpose()),
        tol,
    );
    push("(A,Q0^1/2) observable", obsv == n, obsv as f64);

    push("alpha in (0,1)", p.alpha > 0.0 && p.alpha < 1.0, p.alpha);
    push("gamma0 positive", p.gamma0 > 0.0, p.gamma0);

    match &p.u {
        InputConstraint::Box { u_max } => {
            let lo = u_max.iter().copied().fold(f64::INFINITY, f64::min);
            push("U box half-widths positive", lo > 0.0, lo);
        }
        InputConstraint::Finite { points } => {
            push("U finite set nonempty", !points.is_empty(), points.len() as f64);
        }
        InputConstraint::Quadratic { r, s } => {
            let worst = r
                .iter()
                .map(|ri| relative_min_eig(&numerics::symmetrize(ri)))
                .fold(f64::INFINITY, f64::min);
            push("U quadratic R_i PSD", r.is_empty() || worst >= -tol, worst);
            // Compactness: the sum of the R_i must be definite.
            let total = r.iter().fold(Mat::zeros(p.m(), p.m()), |acc, ri| acc + ri);
            let t_eig = relative_min_eig(&total);
            push("U quadratic compact", t_eig > tol, t_eig);
            let _ = s;
        }
    }
    let passed = findings.iter().all(|f| f.status == CheckStatus::Pass);
    Ok(ValidationReport { passed, findings })
}

/// `(√α·A, √α·B, γ/√α)`.
pub fn discount_transform(
    a: &Mat,
    b: &Mat,
    gamma: f64,
    alpha: f64,
) -> Result<(Mat, Mat, f64), ModelError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ModelError::InvalidDiscount(alpha));
    }
    if !(gamma > 0.0) {
        return Err(ModelError::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if alpha == 1.0 {
        return Ok((a.clone(), b.clone(), gamma));
    }
    let r = alpha.sqrt();
    Ok((a * r, b * r, gamma / r))
}

/// Random instance with i.i.d. standard normal `A`, `B`, `G` and Cholesky
/// factors. `C` is a `(p−m)×n` upper-trapezoidal factor with `Q0 = CᵀC`,
/// `D` an `m×m` upper-triangular factor with `R0 = DᵀD`. The result has
/// `gamma0 = 1`, `alpha = 0.95`, the unit box and the unit ball; callers
/// normally reset `gamma0` from the H∞-optimal value.
pub fn random_instance(
    n: usize,
    m: usize,
    l: usize,
    p: usize,
    seed: u64,
) -> Result<ProblemInstance, ModelError> {
    if n == 0 || m == 0 || l == 0 {
        return Err(ModelError::InvalidParameter("dimensions must be positive".into()));
    }
    if p < m {
        return Err(ModelError::InvalidParameter(format!("need p >= m, got p={p}, m={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, cols: usize| {
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = StandardNormal.sample(&mut rng);
            }
        }
        out
    };
    let a = draw(n, n);
    let b = draw(n, m);
    let g = draw(n, l);
    let mut c = draw(p - m, n);
    let mut d = draw(m, m);
    for i in 0..c.nrows() {
        for j in 0..i.min(n) {
            c[(i, j)] = 0.0;
        }
    }
    for i in 0..m {
        for j in 0..i {
            d[(i, j)] = 0.0;
        }
    }
    Ok(ProblemInstance {
        a,
        b,
        g,
        q0: numerics::symmetrize(&(c.transpose() * &c)),
        r0: numerics::symmetrize(&(d.transpose() * &d)),
        gamma0: 1.0,
        alpha: 0.95,
        u: InputConstraint::unit_box(m),
        w: DisturbanceEllipsoid::unit_ball(l),
    })
}

/// The four-state, two-input example system with box inputs of half-width
/// `u_max` and the unit-ball disturbance set. Lower triangles of `Q0` and
/// `R0` are filled by symmetry.
pub fn reference_example(u_max: f64, gamma0: f64) -> ProblemInstance {
    let a = Mat::from_row_slice(
        4,
        4,
        &[
            0.434, 0.050, 0.212, 0.007, //
            0.264, 0.001, 0.092, 0.419, //
            0.307, 0.255, 0.371, 0.359, //
            0.364, 0.003, 0.291, 0.427,
        ],
    );
    let b = Mat::from_row_slice(
        4,
        2,
        &[0.739, 0.550, 0.371, 0.748, 0.323, 0.760, 0.491, 0.472],
    );
    let g = Mat::from_row_slice(
        4,
        4,
        &[
            0.802, 0.666, 0.737, 0.629, //
            0.471, 0.677, 0.866, 0.793, //
            0.203, 0.9425, 0.991, 0.449, //
            0.576, 0.7701, 0.504, 0.524,
        ],
    );
    let r0 = fill_symmetric(2, &[0.262, 0.560, 1.33]);
    let q0 = fill_symmetric(
        4,
        &[0.105, 0.286, 0.221, 0.271, 0.929, 0.618, 0.687, 1.22, 0.854, 0.873],
    );
    ProblemInstance {
        a,
        b,
        g,
        q0,
        r0,
        gamma0,
        alpha: 0.95,
        u: InputConstraint::Box {
            u_max: vec![u_max; 2],
        },
        w: DisturbanceEllipsoid::unit_ball(4),
    }
}

/// Symmetric matrix from its upper triangle listed row by row.
fn fill_symmetric(k: usize, upper: &[f64]) -> Mat {
    debug_assert_eq!(upper.len(), k * (k + 1) / 2);
    let mut out = Mat::zeros(k, k);
    let mut it = upper.iter();
    for i in 0..k {
        for j in i..k {
            let v = *it.next().expect("upper triangle length");
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

// JSON document format.

pub(crate) fn matrix_to_json(m: &Mat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| num_to_json(m[(i, j)])).collect()))
            .collect(),
    )
}

pub(crate) fn vector_to_json(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| num_to_json(*x)).collect())
}

fn num_to_json(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("NaN")
    } else if x > 0.0 {
        json!("Infinity")
    } else {
        json!("-Infinity")
    }
}

pub fn to_json(p: &ProblemInstance) -> Value {
    let u = match &p.u {
        InputConstraint::Box { u_max } => json!({"type": "box", "u_max": vector_to_json(u_max)}),
        InputConstraint::Finite { points } => json!({
            "type": "finite",
            "points": points.iter().map(|pt| vector_to_json(pt)).collect::<Vec<_>>(),
        }),
        InputConstraint::Quadratic { r, s } => json!({
            "type": "quadratic",
            "R": r.iter().map(matrix_to_json).collect::<Vec<_>>(),
            "s": vector_to_json(s),
        }),
    };
    json!({
        "schema_version": SCHEMA_VERSION,
        "A": matrix_to_json(&p.a),
        "B": matrix_to_json(&p.b),
        "G": matrix_to_json(&p.g),
        "Q0": matrix_to_json(&p.q0),
        "R0": matrix_to_json(&p.r0),
        "gamma0": num_to_json(p.gamma0),
        "alpha": num_to_json(p.alpha),
        "U": u,
        "W": {"S": matrix_to_json(&p.w.s), "beta": num_to_json(p.w.beta)},
    })
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, ModelError> {
    obj.get(name)
        .ok_or_else(|| ModelError::Malformed(format!("missing field {name:?}")))
}

pub(crate) fn json_number(v: &Value, name: &str) -> Result<f64, ModelError> {
    match v {
        Value::Number(x) => x
            .as_f64()
            .ok_or_else(|| ModelError::Malformed(format!("{name}: number out of range"))),
        Value::String(s) => match s.as_str() {
            "NaN" | "nan" | "Infinity" | "-Infinity" | "inf" | "-inf" => {
                Err(ModelError::NonFinite { field: name.into() })
            }
            _ => Err(ModelError::Malformed(format!("{name}: expected a number, got {s:?}"))),
        },
        Value::Null => Err(ModelError::NonFinite { field: name.into() }),
        _ => Err(ModelError::Malformed(format!("{name}: expected a number"))),
    }
}

pub(crate) fn json_vector(v: &Value, name: &str) -> Result<Vec<f64>, ModelError> {
    let arr = v
        .as_array()
        .ok_or_else(|| ModelError::Malformed(format!("{name}: expected an array")))?;
    arr.iter().map(|x| json_number(x, name)).collect()
}

pub(crate) fn json_matrix(v: &Value, name: &str) -> Result<Mat, ModelError> {
    let rows = v
        .as_array()
        .ok_or_else(|| ModelError::Malformed(format!("{name}: expected an array of rows")))?;
    let parsed: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| json_vector(r, name))
        .collect::<Result<_, _>>()?;
    let ncols = parsed.first().map_or(0, Vec::len);
    if parsed.iter().any(|r| r.len() != ncols) {
        return Err(ModelError::Dimension(format!("{name}: ragged rows")));
    }
    let flat: Vec<f64> = parsed.into_iter().flatten().collect();
    Ok(Mat::from_row_slice(rows.len(), ncols, &flat))
}

pub fn from_json(doc: &Value) -> Result<ProblemInstance, ModelError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| ModelError::Malformed("top level must be an object".into()))?;
    let version = field(obj, "schema_version")?
        .as_u64()
        .ok_or_else(|| ModelError::Malformed("schema_version must be an integer".into()))?;
    if version != SCHEMA_VERSION {
        return Err(ModelError::SchemaVersion(version));
    }
    let mat = |name: &str| json_matrix(field(obj, name)?, name);
    let u_obj = field(obj, "U")?
        .as_object()
        .ok_or_else(|| ModelError::Malformed("U must be an object".into()))?;
    let u_type = field(u_obj, "type")?
        .as_str()
        .ok_or_else(|| ModelError::Malformed("U.type must be a string".into()))?;
    let u = match u_type {
        "box" => InputConstraint::Box {
            u_max: json_vector(field(u_obj, "u_max")?, "U.u_max")?,
        },
        "finite" => {
            let pts = field(u_obj, "points")?
                .as_array()
                .ok_or_else(|| ModelError::Malformed("U.points must be an array".into()))?;
            InputConstraint::Finite {
                points: pts
                    .iter()
                    .map(|p| json_vector(p, "U.points"))
                    .collect::<Result<_, _>>()?,
            }
        }
        "quadratic" => {
            let rs = field(u_obj, "R")?
                .as_array()
                .ok_or_else(|| ModelError::Malformed("U.R must be an array".into()))?;
            InputConstraint::Quadratic {
                r: rs
                    .iter()
                    .map(|r| json_matrix(r, "U.R"))
                    .collect::<Result<_, _>>()?,
                s: json_vector(field(u_obj, "s")?, "U.s")?,
            }
        }
        other => return Err(ModelError::Malformed(format!("unknown U.type {other:?}"))),
    };
    let w_obj = field(obj, "W")?
        .as_object()
        .ok_or_else(|| ModelError::Malformed("W must be an object".into()))?;
    let p = ProblemInstance {
        a: mat("A")?,
        b: mat("B")?,
        g: mat("G")?,
        q0: mat("Q0")?,
        r0: mat("R0")?,
        gamma0: json_number(field(obj, "gamma0")?, "gamma0")?,
        alpha: json_number(field(obj, "alpha")?, "alpha")?,
        u,
        w: DisturbanceEllipsoid {
            s: json_matrix(field(w_obj, "S")?, "W.S")?,
            beta: json_number(field(w_obj, "beta")?, "W.beta")?,
        },
    };
    p.check_dimensions()?;
    p.check_finite()?;
    Ok(p)
}

pub fn from_json_str(text: &str) -> Result<ProblemInstance, ModelError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
    from_json(&doc)
}

pub fn load(path: impl AsRef<Path>) -> Result<ProblemInstance, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    from_json_str(&text)
}

pub fn save(p: &ProblemInstance, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&to_json(p))
        .map_err(|e| ModelError::Malformed(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}
