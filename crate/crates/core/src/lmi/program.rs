//! Conic programs with symmetric-matrix and scalar decision blocks.
//!
//! A program is `min/max c0 + cᵀx + dᵀθ + xᵀBx` subject to affine
//! matrix inequalities `F_j(x, θ) ⪰ ε_j I` and scalar equalities, where `x`
//! collects the coordinates of all variable blocks and `θ` those of the
//! named parameter blocks. Bilinear objective terms only arise from
//! dualization with a promoted parameter and must be frozen away before a
//! solve.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LmiError;
use crate::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Scalar,
    /// Symmetric `k×k`; coordinates are the entries `(i, j)`, `i ≤ j`,
    /// row by row.
    Sym(usize),
    /// General `r×c`; coordinates are the entries in row-major order.
    Full(usize, usize),
}

impl BlockKind {
    pub fn len(&self) -> usize {
        match *self {
            BlockKind::Scalar => 1,
            BlockKind::Sym(k) => k * (k + 1) / 2,
            BlockKind::Full(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            BlockKind::Scalar => (1, 1),
            BlockKind::Sym(k) => (k, k),
            BlockKind::Full(r, c) => (r, c),
        }
    }

    /// Matrix position of local coordinate `idx`.
    pub fn entry(&self, idx: usize) -> (usize, usize) {
        match *self {
            BlockKind::Scalar => (0, 0),
            BlockKind::Sym(k) => {
                let mut rem = idx;
                for i in 0..k {
                    let row_len = k - i;
                    if rem < row_len {
                        return (i, i + rem);
                    }
                    rem -= row_len;
                }
                panic!("coordinate {idx} out of range for Sym({k})")
            }
            BlockKind::Full(_, c) => (idx / c, idx % c),
        }
    }

    /// Local coordinate of matrix entry `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        match *self {
            BlockKind::Scalar => 0,
            BlockKind::Sym(k) => {
                let (i, j) = if i <= j { (i, j) } else { (j, i) };
                // Row i starts after Σ_{r<i} (k − r) entries.
                i * k - i * i.saturating_sub(1) / 2 + (j - i)
            }
            BlockKind::Full(_, c) => i * c + j,
        }
    }

    pub fn assemble(&self, coords: &[f64]) -> Mat {
        let (r, c) = self.shape();
        let mut m = Mat::zeros(r, c);
        for (idx, v) in coords.iter().enumerate() {
            let (i, j) = self.entry(idx);
            m[(i, j)] = *v;
            if matches!(self, BlockKind::Sym(_)) {
                m[(j, i)] = *v;
            }
        }
        m
    }

    pub fn flatten(&self, m: &Mat) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let (i, j) = self.entry(idx);
                match self {
                    BlockKind::Sym(_) => 0.5 * (m[(i, j)] + m[(j, i)]),
                    _ => m[(i, j)],
                }
            })
            .collect()
    }

    fn label(&self, idx: usize) -> String {
        match self {
            BlockKind::Scalar => String::new(),
            _ => {
                let (i, j) = self.entry(idx);
                format!("({i},{j})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
}

impl Block {
    pub fn coords(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.kind.len()
    }

    pub fn coord_of(&self, i: usize, j: usize) -> usize {
        self.offset + self.kind.index(i, j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
    pub value: Vec<f64>,
}

/// `F(x, θ) = F0 + Σ x_i F_i + Σ θ_j H_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMatrix {
    pub dim: usize,
    pub constant: Mat,
    pub var_terms: Vec<(usize, Mat)>,
    pub param_terms: Vec<(usize, Mat)>,
}

impl AffineMatrix {
    pub fn eval(&self, x: &[f64], theta: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (i, f) in &self.var_terms {
            out += f * x[*i];
        }
        for (j, h) in &self.param_terms {
            out += h * theta[*j];
        }
        out
    }

    /// Constant part with parameters bound to `theta`.
    pub fn bound_constant(&self, theta: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (j, h) in &self.param_terms {
            out += h * theta[*j];
        }
        out
    }
}

/// `F(x, θ) ⪰ margin·I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdConstraint {
    pub name: String,
    pub dual_name: String,
    pub margin: f64,
    pub map: AffineMatrix,
}

/// `Σ a_i x_i + Σ p_j θ_j + constant = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqConstraint {
    pub name: String,
    pub var_terms: Vec<(usize, f64)>,
    pub param_terms: Vec<(usize, f64)>,
    pub constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub sense: Sense,
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    pub param_linear: Vec<(usize, f64)>,
    /// `coef · x_i · x_k`.
    pub bilinear: Vec<(usize, usize, f64)>,
}

impl Objective {
    fn zero(sense: Sense) -> Self {
        Self {
            sense,
            constant: 0.0,
            linear: Vec::new(),
            param_linear: Vec::new(),
            bilinear: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub name: String,
    pub vars: Vec<Block>,
    pub params: Vec<Param>,
    pub psd: Vec<PsdConstraint>,
    pub eqs: Vec<EqConstraint>,
    pub objective: Objective,
}

impl ConicProgram {
    pub fn empty(name: &str, sense: Sense) -> Self {
        Self {
            name: name.to_string(),
            vars: Vec::new(),
            params: Vec::new(),
            psd: Vec::new(),
            eqs: Vec::new(),
            objective: Objective::zero(sense),
        }
    }

    pub fn n_coords(&self) -> usize {
        self.vars.last().map_or(0, |b| b.offset + b.kind.len())
    }

    pub fn n_param_coords(&self) -> usize {
        self.params.last().map_or(0, |b| b.offset + b.kind.len())
    }

    pub fn var(&self, name: &str) -> Option<&Block> {
        self.vars.iter().find(|b| b.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|b| b.name == name)
    }

    pub fn constraint(&self, name: &str) -> Option<&PsdConstraint> {
        self.psd.iter().find(|c| c.name == name)
    }

    pub fn theta(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn set_param(&mut self, name: &str, value: &Mat) -> Result<(), LmiError> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| LmiError::UnknownParam(name.to_string()))?;
        if value.shape() != p.kind.shape() {
            return Err(LmiError::Dimension(format!("parameter {name} has the wrong shape")));
        }
        p.value = p.kind.flatten(value);
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.objective.bilinear.iter().all(|(_, _, c)| *c == 0.0)
    }

    /// Human-readable name of a global coordinate.
    pub fn coord_label(&self, coord: usize) -> String {
        for b in &self.vars {
            if b.coords().contains(&coord) {
                return format!("{}{}", b.name, b.kind.label(coord - b.offset));
            }
        }
        format!("x{coord}")
    }

    pub fn block_value(&self, name: &str, x: &[f64]) -> Option<Mat> {
        let b = self.var(name)?;
        Some(b.kind.assemble(&x[b.coords()]))
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let theta = self.theta();
        let o = &self.objective;
        o.constant
            + o.linear.iter().map(|(i, c)| c * x[*i]).sum::<f64>()
            + o.param_linear.iter().map(|(j, c)| c * theta[*j]).sum::<f64>()
            + o.bilinear.iter().map(|(i, k, c)| c * x[*i] * x[*k]).sum::<f64>()
    }

    /// `F_j(x)` without the margin.
    pub fn eval_constraint(&self, j: usize, x: &[f64]) -> Mat {
        self.psd[j].map.eval(x, &self.theta())
    }

    pub fn eq_residual(&self, x: &[f64]) -> f64 {
        let theta = self.theta();
        self.eqs
            .iter()
            .map(|e| {
                (e.constant
                    + e.var_terms.iter().map(|(i, a)| a * x[*i]).sum::<f64>()
                    + e.param_terms.iter().map(|(j, a)| a * theta[*j]).sum::<f64>())
                .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Fixes the given coordinates through equality constraints and turns
    /// every bilinear term touching them into a linear or constant term.
    pub fn freeze(&self, fixed: &[(usize, f64)]) -> ConicProgram {
        let mut out = self.clone();
        let values: BTreeMap<usize, f64> = fixed.iter().copied().collect();
        for (&coord, &v) in &values {
            out.eqs.push(EqConstraint {
                name: format!("freeze:{}", self.coord_label(coord)),
                var_terms: vec![(coord, 1.0)],
                param_terms: Vec::new(),
                constant: -v,
            });
        }
        let mut bilinear = Vec::new();
        for &(i, k, c) in &self.objective.bilinear {
            match (values.get(&i), values.get(&k)) {
                (Some(vi), Some(vk)) => out.objective.constant += c * vi * vk,
                (Some(vi), None) => out.objective.linear.push((k, c * vi)),
                (None, Some(vk)) => out.objective.linear.push((i, c * vk)),
                (None, None) => bilinear.push((i, k, c)),
            }
        }
        out.objective.bilinear = bilinear;
        out
    }

    /// Freezes a whole variable block at `value`.
    pub fn freeze_block(&self, name: &str, value: &Mat) -> Result<ConicProgram, LmiError> {
        self.freeze_entries(name, value, |_, _| true)
    }

    /// Freezes the entries `(i, j)` of block `name` selected by `pick`.
    pub fn freeze_entries(
        &self,
        name: &str,
        value: &Mat,
        pick: impl Fn(usize, usize) -> bool,
    ) -> Result<ConicProgram, LmiError> {
        let b = self
            .var(name)
            .ok_or_else(|| LmiError::UnknownVar(name.to_string()))?;
        if value.shape() != b.kind.shape() {
            return Err(LmiError::Dimension(format!("frozen value for {name} has the wrong shape")));
        }
        let flat = b.kind.flatten(value);
        let fixed: Vec<(usize, f64)> = (0..b.kind.len())
            .filter(|&idx| {
                let (i, j) = b.kind.entry(idx);
                pick(i, j)
            })
            .map(|idx| (b.offset + idx, flat[idx]))
            .collect();
        Ok(self.freeze(&fixed))
    }

    /// Union of two programs; variable and parameter blocks with the same
    /// name are shared. Objectives are added; the senses must agree unless
    /// `other`'s objective is identically zero.
    pub fn merge(&self, other: &ConicProgram) -> Result<ConicProgram, LmiError> {
        let mut out = self.clone();
        let mut var_map = vec![0usize; other.n_coords()];
        for b in &other.vars {
            let target = match out.var(&b.name) {
                Some(existing) => {
                    if existing.kind != b.kind {
                        return Err(LmiError::Dimension(format!(
                            "variable {} declared with two shapes",
                            b.name
                        )));
                    }
                    existing.offset
                }
                None => {
                    let offset = out.n_coords();
                    out.vars.push(Block {
                        name: b.name.clone(),
                        kind: b.kind,
                        offset,
                    });
                    offset
                }
            };
            for (local, c) in b.coords().enumerate() {
                var_map[c] = target + local;
            }
        }
        let mut param_map = vec![0usize; other.n_param_coords()];
        for p in &other.params {
            let target = match out.param(&p.name) {
                Some(existing) => {
                    if existing.kind != p.kind || existing.value != p.value {
                        return Err(LmiError::Dimension(format!(
                            "parameter {} bound to two different values",
                            p.name
                        )));
                    }
                    existing.offset
                }
                None => {
                    let offset = out.n_param_coords();
                    out.params.push(Param {
                        name: p.name.clone(),
                        kind: p.kind,
                        offset,
                        value: p.value.clone(),
                    });
                    offset
                }
            };
            for local in 0..p.kind.len() {
                param_map[p.offset + local] = target + local;
            }
        }
        for c in &other.psd {
            let mut c = c.clone();
            for t in &mut c.map.var_terms {
                t.0 = var_map[t.0];
            }
            for t in &mut c.map.param_terms {
                t.0 = param_map[t.0];
            }
            out.psd.push(c);
        }
        for e in &other.eqs {
            let mut e = e.clone();
            for t in &mut e.var_terms {
                t.0 = var_map[t.0];
            }
            for t in &mut e.param_terms {
                t.0 = param_map[t.0];
            }
            out.eqs.push(e);
        }
        let o = &other.objective;
        let trivial = o.constant == 0.0
            && o.linear.is_empty()
            && o.param_linear.is_empty()
            && o.bilinear.is_empty();
        if !trivial {
            let sign = if o.sense == out.objective.sense { 1.0 } else { -1.0 };
            out.objective.constant += sign * o.constant;
            out.objective
                .linear
                .extend(o.linear.iter().map(|(i, c)| (var_map[*i], sign * c)));
            out.objective
                .param_linear
                .extend(o.param_linear.iter().map(|(j, c)| (param_map[*j], sign * c)));
            out.objective
                .bilinear
                .extend(o.bilinear.iter().map(|(i, k, c)| (var_map[*i], var_map[*k], sign * c)));
        }
        Ok(out)
    }

    /// Adds `coef · x_coord` to the objective.
    pub fn add_objective_term(&mut self, coord: usize, coef: f64) {
        self.objective.linear.push((coord, coef));
    }

    /// Bilinear objective terms grouped by the pair of blocks involved.
    pub fn bilinear_groups(&self) -> BTreeMap<(String, String), usize> {
        let mut out = BTreeMap::new();
        let block_of = |c: usize| {
            self.vars
                .iter()
                .find(|b| b.coords().contains(&c))
                .map(|b| b.name.clone())
                .unwrap_or_default()
        };
        for &(i, k, c) in &self.objective.bilinear {
            if c != 0.0 {
                *out.entry((block_of(i), block_of(k))).or_insert(0) += 1;
            }
        }
        out
    }

    /// Structural fingerprint used to check builder determinism.
    pub fn structure(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .vars
            .iter()
            .map(|b| format!("var {} {:?}", b.name, b.kind))
            .collect();
        out.extend(
            self.psd
                .iter()
                .map(|c| format!("psd {} {} dim={} eps={:e}", c.name, c.dual_name, c.map.dim, c.margin)),
        );
        out.extend(self.eqs.iter().map(|e| format!("eq {}", e.name)));
        out
    }
}

impl fmt::Display for ConicProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "program {} ({:?})", self.name, self.objective.sense)?;
        for line in self.structure() {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Values handed to builder closures.
pub struct Env<'a> {
    vars: &'a [Mat],
    params: &'a [Mat],
}

impl Env<'_> {
    pub fn var(&self, id: VarId) -> &Mat {
        &self.vars[id.0]
    }

    pub fn param(&self, id: ParamId) -> &Mat {
        &self.params[id.0]
    }

    /// Scalar variable value.
    pub fn scalar(&self, id: VarId) -> f64 {
        self.vars[id.0][(0, 0)]
    }
}

/// Builds programs from closures that evaluate each constraint as an
/// ordinary matrix expression. Coefficient matrices are recovered by
/// evaluating at the origin and at every unit coordinate, and affinity is
/// checked at a pseudo-random point.
pub struct ProgramBuilder {
    prog: ConicProgram,
}

impl ProgramBuilder {
    pub fn new(name: &str, sense: Sense) -> Self {
        Self {
            prog: ConicProgram::empty(name, sense),
        }
    }

    pub fn var(&mut self, name: &str, kind: BlockKind) -> VarId {
        let offset = self.prog.n_coords();
        self.prog.vars.push(Block {
            name: name.to_string(),
            kind,
            offset,
        });
        VarId(self.prog.vars.len() - 1)
    }

    pub fn param(&mut self, name: &str, kind: BlockKind, value: &Mat) -> ParamId {
        let offset = self.prog.n_param_coords();
        self.prog.params.push(Param {
            name: name.to_string(),
            kind,
            offset,
            value: kind.flatten(value),
        });
        ParamId(self.prog.params.len() - 1)
    }

    fn zero_env(&self) -> (Vec<Mat>, Vec<Mat>) {
        let vars = self
            .prog
            .vars
            .iter()
            .map(|b| {
                let (r, c) = b.kind.shape();
                Mat::zeros(r, c)
            })
            .collect();
        let params = self
            .prog
            .params
            .iter()
            .map(|p| {
                let (r, c) = p.kind.shape();
                Mat::zeros(r, c)
            })
            .collect();
        (vars, params)
    }

    /// Coefficients of a matrix-valued affine expression.
    fn linearize(
        &self,
        what: &str,
        f: &dyn Fn(&Env) -> Mat,
    ) -> Result<(Mat, Vec<(usize, Mat)>, Vec<(usize, Mat)>), LmiError> {
        let (mut vars, mut params) = self.zero_env();
        let f0 = f(&Env {
            vars: &vars,
            params: &params,
        });
        let mut var_terms = Vec::new();
        for (bi, b) in self.prog.vars.iter().enumerate() {
            for local in 0..b.kind.len() {
                let mut unit = vec![0.0; b.kind.len()];
                unit[local] = 1.0;
                vars[bi] = b.kind.assemble(&unit);
                let fi = f(&Env {
                    vars: &vars,
                    params: &params,
                }) - &f0;
                if fi.amax() != 0.0 {
                    var_terms.push((b.offset + local, fi));
                }
                let (r, c) = b.kind.shape();
                vars[bi] = Mat::zeros(r, c);
            }
        }
        let mut param_terms = Vec::new();
        for (pi, p) in self.prog.params.iter().enumerate() {
            for local in 0..p.kind.len() {
                let mut unit = vec![0.0; p.kind.len()];
                unit[local] = 1.0;
                params[pi] = p.kind.assemble(&unit);
                let hj = f(&Env {
                    vars: &vars,
                    params: &params,
                }) - &f0;
                if hj.amax() != 0.0 {
                    param_terms.push((p.offset + local, hj));
                }
                let (r, c) = p.kind.shape();
                params[pi] = Mat::zeros(r, c);
            }
        }
        // Affinity check at a reproducible pseudo-random point.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let x: Vec<f64> = (0..self.prog.n_coords()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let theta: Vec<f64> = (0..self.prog.n_param_coords())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let vars: Vec<Mat> = self
            .prog
            .vars
            .iter()
            .map(|b| b.kind.assemble(&x[b.coords()]))
            .collect();
        let params: Vec<Mat> = self
            .prog
            .params
            .iter()
            .map(|p| p.kind.assemble(&theta[p.offset..p.offset + p.kind.len()]))
            .collect();
        let direct = f(&Env {
            vars: &vars,
            params: &params,
        });
        let mut predicted = f0.clone();
        let mut scale = f0.amax();
        for (i, fi) in &var_terms {
            predicted += fi * x[*i];
            scale = scale.max(fi.amax());
        }
        for (j, hj) in &param_terms {
            predicted += hj * theta[*j];
            scale = scale.max(hj.amax());
        }
        if (direct - predicted).amax() > 1e-9 * (1.0 + scale) {
            return Err(LmiError::NotAffine(what.to_string()));
        }
        Ok((f0, var_terms, param_terms))
    }

    /// Adds `f(x) ⪰ margin·I`. `f` must return a symmetric matrix.
    pub fn psd(
        &mut self,
        name: &str,
        dual_name: &str,
        margin: f64,
        f: impl Fn(&Env) -> Mat,
    ) -> Result<(), LmiError> {
        let (f0, var_terms, param_terms) = self.linearize(name, &f)?;
        let dim = f0.nrows();
        if f0.ncols() != dim {
            return Err(LmiError::Dimension(format!("constraint {name} is not square")));
        }
        let check = |m: &Mat| (m - m.transpose()).amax() <= 1e-12 * (1.0 + m.amax());
        if !check(&f0)
            || !var_terms.iter().all(|(_, m)| check(m))
            || !param_terms.iter().all(|(_, m)| check(m))
        {
            return Err(LmiError::NotSymmetric(name.to_string()));
        }
        let sym = |m: Mat| (&m + m.transpose()) * 0.5;
        self.prog.psd.push(PsdConstraint {
            name: name.to_string(),
            dual_name: dual_name.to_string(),
            margin,
            map: AffineMatrix {
                dim,
                constant: sym(f0),
                var_terms: var_terms.into_iter().map(|(i, m)| (i, sym(m))).collect(),
                param_terms: param_terms.into_iter().map(|(i, m)| (i, sym(m))).collect(),
            },
        });
        Ok(())
    }

    /// Adds `f(x) = 0` entrywise (upper triangle only when `symmetric`).
    pub fn eq(&mut self, name: &str, symmetric: bool, f: impl Fn(&Env) -> Mat) -> Result<(), LmiError> {
        let (f0, var_terms, param_terms) = self.linearize(name, &f)?;
        let (r, c) = f0.shape();
        for i in 0..r {
            for j in 0..c {
                if symmetric && j < i {
                    continue;
                }
                let label = if r * c == 1 {
                    name.to_string()
                } else {
                    format!("{name}({i},{j})")
                };
                self.prog.eqs.push(EqConstraint {
                    name: label,
                    var_terms: var_terms
                        .iter()
                        .filter(|(_, m)| m[(i, j)] != 0.0)
                        .map(|(k, m)| (*k, m[(i, j)]))
                        .collect(),
                    param_terms: param_terms
                        .iter()
                        .filter(|(_, m)| m[(i, j)] != 0.0)
                        .map(|(k, m)| (*k, m[(i, j)]))
                        .collect(),
                    constant: f0[(i, j)],
                });
            }
        }
        Ok(())
    }

    /// Sets the objective to the affine scalar expression `f`.
    pub fn objective(&mut self, f: impl Fn(&Env) -> f64) -> Result<(), LmiError> {
        let (f0, var_terms, param_terms) =
            self.linearize("objective", &|env: &Env| Mat::from_element(1, 1, f(env)))?;
        self.prog.objective.constant = f0[(0, 0)];
        self.prog.objective.linear = var_terms.into_iter().map(|(i, m)| (i, m[(0, 0)])).collect();
        self.prog.objective.param_linear =
            param_terms.into_iter().map(|(i, m)| (i, m[(0, 0)])).collect();
        Ok(())
    }

    pub fn build(self) -> ConicProgram {
        self.prog
    }
}
