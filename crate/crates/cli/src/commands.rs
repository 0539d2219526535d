use std::path::Path;

use minmax_bounds::bounds::{optimize_bound, AlternationLog};
use minmax_bounds::hinf::hinf_optimal_gamma;
use minmax_bounds::model::{self, random_instance, reference_example};
use minmax_bounds::sim::{default_horizon, gap_report, rollout, AdversaryKind, PolicyKind};
use minmax_bounds::{
    basic_bound, evaluate_bound, verify_initial_state, BoundCertificate, ProblemInstance, Provenance, RegionCertificate,
    Tolerances, Vec64,
};
use serde_json::{json, Value};

use crate::{AdversaryArg, BoundArgs, Command, Failure, OptimizeArgs, PolicyArg};

/// Reference values of the four-state example at the published data.
const REFERENCE_BASIC: f64 = 3.526;
const REFERENCE_OPTIMIZED: f64 = 6.42;

pub struct Report {
    pub command: &'static str,
    pub ok: bool,
    pub result: Value,
    pub text: String,
    /// CSV payload used instead of key,value rows.
    pub table: Option<Vec<u8>>,
}

impl Report {
    fn new(command: &'static str, result: Value, text: String) -> Self {
        Self {
            command,
            ok: true,
            result,
            text,
            table: None,
        }
    }

    pub fn exit_code(&self) -> u8 {
        if self.ok {
            0
        } else {
            1
        }
    }
}

pub fn execute(cmd: &Command, tol: &Tolerances) -> Result<Report, Failure> {
    let name = cmd.name();
    match cmd {
        Command::Validate { file } => validate(name, file),
        Command::HinfGamma { file } => hinf_gamma(name, file, tol),
        Command::Bound { file, bound, x0 } => {
            let p = load(file)?;
            bound_cmd(name, &p, bound, x0.as_deref(), tol)
        }
        Command::Optimize { file, bound, opt } => {
            let p = load(file)?;
            let (cert, log) = optimized(&p, bound, opt, tol)?;
            let text = format!("{}\n{}", cert_text(&cert), log_text(&log));
            let result = json!({ "certificate": cert.to_json(), "log": log_json(&log) });
            Ok(Report::new(name, result, text))
        }
        Command::Verify {
            file,
            x0,
            prefix_t,
            optimized: opt_flag,
            bound,
            opt,
        } => {
            let p = load(file)?;
            let x = state(&p, x0)?;
            let mut cert = if *opt_flag {
                optimized(&p, bound, opt, tol)?.0
            } else {
                basic_bound(&p, gamma_of(&p, bound), tol)?
            };
            let region = verify_initial_state(&p, &cert, &x, *prefix_t, tol)?;
            let value = evaluate_bound(&cert, &x)?;
            let text = format!(
                "verified: x0 (prefix {} steps, tail level {:.6e} <= {})\nbound at x0: {:.6}",
                region.prefix_t, region.level, p.w.beta, value
            );
            cert.region = Some(region);
            let result = json!({ "verified": true, "x0": x.as_slice(), "bound_at_x0": value, "certificate": cert.to_json() });
            Ok(Report::new(name, result, text))
        }
        Command::Simulate {
            file,
            x0,
            policy,
            adversary,
            all_adversaries,
            seed,
            horizon,
            prefix_t,
            bound,
        } => {
            let p = load(file)?;
            simulate(name, &p, x0, *policy, *adversary, *all_adversaries, *seed, *horizon, *prefix_t, bound, tol)
        }
        Command::GenRandom {
            n,
            m,
            l,
            p,
            seed,
            gamma_factor,
        } => gen_random(name, *n, *m, *l, *p, *seed, *gamma_factor, tol),
        Command::ReferenceExample { u_max, opt, x0 } => reference(name, *u_max, opt, x0.as_deref(), tol),
    }
}

fn load(file: &Path) -> Result<ProblemInstance, Failure> {
    let p = model::load(file)?;
    p.check_dimensions()?;
    p.check_finite()?;
    Ok(p)
}

fn state(p: &ProblemInstance, x0: &[f64]) -> Result<Vec64, Failure> {
    if x0.len() != p.n() {
        return Err(Failure::user("usage", format!("--x0 has {} entries, the instance has n = {}", x0.len(), p.n())));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Failure::user("usage", "--x0 entries must be finite"));
    }
    Ok(Vec64::from_column_slice(x0))
}

fn gamma_of(p: &ProblemInstance, b: &BoundArgs) -> f64 {
    b.gamma.unwrap_or(p.gamma0)
}

fn optimized(
    p: &ProblemInstance,
    b: &BoundArgs,
    opt: &OptimizeArgs,
    tol: &Tolerances,
) -> Result<(BoundCertificate, AlternationLog), Failure> {
    Ok(optimize_bound(p, gamma_of(p, b), opt.rounds, opt.inner_tol, tol)?)
}

fn validate(name: &'static str, file: &Path) -> Result<Report, Failure> {
    let p = model::load(file)?;
    let report = model::validate(&p, 1e-9)?;
    let text = report.to_string();
    let result = serde_json::to_value(&report).map_err(|e| Failure::user("internal", e.to_string()))?;
    let mut r = Report::new(name, result, text);
    r.ok = report.passed;
    Ok(r)
}

fn hinf_gamma(name: &'static str, file: &Path, tol: &Tolerances) -> Result<Report, Failure> {
    let p = load(file)?;
    let g = hinf_optimal_gamma(&p, tol.gamma_rel_tol, tol)?;
    let text = format!("gamma* = {g:.6}\ngamma0 = {:.6} ({})", p.gamma0, if p.gamma0 > g { "above gamma*" } else { "NOT above gamma*" });
    let result = json!({ "gamma_star": g, "gamma0": p.gamma0, "rel_tol": tol.gamma_rel_tol, "gamma0_feasible": p.gamma0 > g });
    Ok(Report::new(name, result, text))
}

fn bound_cmd(
    name: &'static str,
    p: &ProblemInstance,
    b: &BoundArgs,
    x0: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<Report, Failure> {
    let x = x0.map(|x0| state(p, x0)).transpose()?;
    let mut cert = basic_bound(p, gamma_of(p, b), tol)?;
    let mut text = cert_text(&cert);
    let mut result = json!({ "certificate": Value::Null });
    if let Some(x) = x {
        let value = evaluate_bound(&cert, &x)?;
        let verified = match verify_initial_state(p, &cert, &x, 50, tol) {
            Ok(region) => {
                cert.region = Some(region);
                true
            }
            Err(e) => {
                log::warn!("x0 not verified: {e}");
                false
            }
        };
        text.push_str(&format!(
            "\nbound at x0: {value:.6}{}",
            if verified { " (verified)" } else { " (NOT verified: the bound may not apply at x0)" }
        ));
        result["x0"] = json!(x.as_slice());
        result["bound_at_x0"] = json!(value);
        result["verified"] = json!(verified);
    }
    result["certificate"] = cert.to_json();
    Ok(Report::new(name, result, text))
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    name: &'static str,
    p: &ProblemInstance,
    x0: &[f64],
    policy: PolicyArg,
    adversary: AdversaryArg,
    all: bool,
    seed: u64,
    horizon: Option<usize>,
    prefix_t: usize,
    b: &BoundArgs,
    tol: &Tolerances,
) -> Result<Report, Failure> {
    let x = state(p, x0)?;
    let cert = basic_bound(p, gamma_of(p, b), tol)?;
    let horizon = horizon.unwrap_or_else(|| default_horizon(p.alpha));
    let region = match verify_initial_state(p, &cert, &x, prefix_t, tol) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("x0 not verified, the lower bound may not apply: {e}");
            None
        }
    };
    let pk = match policy {
        PolicyArg::Clipped => PolicyKind::Clipped,
        PolicyArg::Unconstrained => PolicyKind::Unconstrained,
    };
    let adv = |a: AdversaryArg| match a {
        AdversaryArg::Greedy => AdversaryKind::Greedy,
        AdversaryArg::ClippedKw => AdversaryKind::ClippedKw,
        AdversaryArg::Random => AdversaryKind::Random { seed },
        AdversaryArg::Zero => AdversaryKind::Zero,
        AdversaryArg::Unconstrained => AdversaryKind::Unconstrained,
    };
    if all {
        let kinds: Vec<AdversaryKind> = [
            AdversaryArg::Zero,
            AdversaryArg::Greedy,
            AdversaryArg::ClippedKw,
            AdversaryArg::Random,
            AdversaryArg::Unconstrained,
        ]
        .into_iter()
        .map(adv)
        .collect();
        let gap = gap_report(&cert, p, &x, &[pk], &kinds, horizon, region.as_ref())?;
        let mut text = format!(
            "lower bound at x0: {:.6}{}\n",
            gap.lower_bound,
            if gap.caveat { " (x0 NOT verified)" } else { " (verified)" }
        );
        for e in &gap.entries {
            text.push_str(&format!(
                "{:<14} vs {:<14} cost {:>12.6}  tail {:.2e}{}\n",
                e.policy,
                e.adversary,
                e.cost,
                e.tail_estimate,
                if e.admissible { "" } else { "  (inadmissible)" }
            ));
        }
        let mut buf = Vec::new();
        gap.write_csv(&mut buf)?;
        let result = serde_json::to_value(&gap).map_err(|e| Failure::user("internal", e.to_string()))?;
        let mut r = Report::new(name, result, text.trim_end().to_string());
        r.table = Some(buf);
        return Ok(r);
    }
    let pol = pk.build(p, &cert)?;
    let mut ad = adv(adversary).build(p, &cert)?;
    let tr = rollout(p, pol.as_ref(), ad.as_mut(), &x, horizon)?;
    let lb = evaluate_bound(&cert, &x)?;
    let text = format!(
        "policy {} vs adversary {}, {} steps\ndiscounted cost: {:.6} (tail estimate {:.2e})\nlower bound at x0: {:.6}{}\nadmissible: inputs {}, disturbances {}",
        tr.policy,
        tr.adversary,
        tr.horizon,
        tr.discounted_cost,
        tr.tail_estimate,
        lb,
        if region.is_some() { " (verified)" } else { " (x0 NOT verified)" },
        tr.inputs_admissible,
        tr.disturbances_admissible
    );
    let mut buf = Vec::new();
    tr.write_csv(&mut buf)?;
    let result = json!({
        "lower_bound": lb,
        "verified": region.is_some(),
        "trace": tr.to_json(),
    });
    let mut r = Report::new(name, result, text);
    r.table = Some(buf);
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
fn gen_random(
    name: &'static str,
    n: usize,
    m: usize,
    l: usize,
    p: usize,
    seed: u64,
    factor: f64,
    tol: &Tolerances,
) -> Result<Report, Failure> {
    if !(factor == 0.0 || factor > 1.0) || !factor.is_finite() {
        return Err(Failure::user("usage", format!("--gamma-factor must be 0 or above 1, got {factor}")));
    }
    let mut inst = random_instance(n, m, l, p, seed)?;
    let mut gamma_star = Value::Null;
    if factor > 0.0 {
        let g = hinf_optimal_gamma(&inst, tol.gamma_rel_tol, tol)?;
        inst = inst.with_gamma0(factor * g);
        gamma_star = json!(g);
    }
    let doc = model::to_json(&inst);
    let text = serde_json::to_string_pretty(&doc).expect("instance document");
    let result = json!({ "seed": seed, "gamma_star": gamma_star, "instance": doc });
    Ok(Report::new(name, result, text))
}

fn reference(
    name: &'static str,
    u_max: f64,
    opt: &OptimizeArgs,
    x0: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<Report, Failure> {
    let base = reference_example(u_max, 1.0);
    let g = hinf_optimal_gamma(&base, tol.gamma_rel_tol, tol)?;
    let p = base.with_gamma0(1.1 * g);
    let basic = basic_bound(&p, p.gamma0, tol)?;
    let (cert, log) = optimize_bound(&p, p.gamma0, opt.rounds, opt.inner_tol, tol)?;
    let rel = |v: f64, r: f64| (v - r) / r;
    let mut text = format!(
        "u_max = {u_max}\ngamma* = {g:.6}, gamma0 = {:.6}\nbasic bound:     {:.6} (reference {REFERENCE_BASIC}, {:+.2}%)\noptimized bound: {:.6} (reference {REFERENCE_OPTIMIZED}, {:+.2}%)\n{}",
        p.gamma0,
        basic.value(),
        100.0 * rel(basic.value(), REFERENCE_BASIC),
        cert.value(),
        100.0 * rel(cert.value(), REFERENCE_OPTIMIZED),
        log_text(&log)
    );
    let mut result = json!({
        "u_max": u_max,
        "gamma_star": g,
        "gamma0": p.gamma0,
        "basic": { "value": basic.value(), "sdp_value": basic.sdp_value(), "reference": REFERENCE_BASIC, "certificate": basic.to_json() },
        "optimized": { "value": cert.value(), "sdp_value": cert.sdp_value(), "reference": REFERENCE_OPTIMIZED, "certificate": cert.to_json() },
        "log": log_json(&log),
    });
    if let Some(x0) = x0 {
        let x = state(&p, x0)?;
        let verified: Option<RegionCertificate> = verify_initial_state(&p, &cert, &x, 50, tol).ok();
        let value = evaluate_bound(&cert, &x)?;
        text.push_str(&format!(
            "\noptimized bound at x0: {value:.6} ({})",
            if verified.is_some() { "verified" } else { "NOT verified" }
        ));
        result["x0"] = json!(x0);
        result["bound_at_x0"] = json!(value);
        result["verified"] = json!(verified.is_some());
    }
    Ok(Report::new(name, result, text))
}

fn cert_text(c: &BoundCertificate) -> String {
    let sdp = c.sdp_value().map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into());
    format!(
        "bound ({}): {:.6}\n  Tr P = {:.6}, s = {:.6e}, s/(1-alpha) = {:.6e}\n  SDP value = {sdp}\n  gamma = {:.6}, alpha = {}",
        provenance(c),
        c.value(),
        c.trace,
        c.s,
        c.offset(),
        c.gamma,
        c.alpha
    )
}

fn log_text(log: &AlternationLog) -> String {
    let mut out = String::from("round  frozen    sdp_objective   certified       accepted");
    for r in &log.records {
        let cert = r.certified.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "\n{:>5}  {:<8}  {:>14.6}  {:>14}  {}{}",
            r.round,
            format!("{:?}", r.frozen),
            r.sdp_objective,
            cert,
            r.accepted,
            if r.note.is_empty() { String::new() } else { format!("  ({})", r.note) }
        ));
    }
    for w in &log.warnings {
        out.push_str(&format!("\nwarning: {w}"));
    }
    out
}

fn log_json(log: &AlternationLog) -> Value {
    json!({
        "records": log.records.iter().map(|r| json!({
            "round": r.round,
            "frozen": format!("{:?}", r.frozen),
            "sdp_objective": finite_or_null(r.sdp_objective),
            "certified": r.certified,
            "status": format!("{:?}", r.status),
            "accepted": r.accepted,
            "note": r.note,
        })).collect::<Vec<_>>(),
        "accepted_values": log.accepted_values(),
        "warnings": log.warnings,
    })
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn provenance(c: &BoundCertificate) -> &'static str {
    match c.provenance {
        Provenance::Basic => "basic",
        Provenance::Optimized => "optimized",
        Provenance::External => "external",
    }
}
