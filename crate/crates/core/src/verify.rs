//! Numerical checks of the optimality inequalities and equations, the
//! ordering chain of the average-cost estimates, and evidence for the
//! continuity and integrability assumptions on the relative-value family.
//!
//! Continuity-type assumptions cannot be proven on a finite grid; those
//! checks are of kind [`CheckKind::Evidence`] and say at which resolution the
//! evidence was gathered.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::discounted::{best_action, finite_horizon_values, Decision};
use crate::error::{Error, Result};
use crate::model::{effective_action_set, MdpModel, Policy};
use crate::numfmt::fmt17;
use crate::vanish::VanishDiagnostics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Exact,
    Residual,
    Evidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    #[serde(with = "crate::numfmt::opt")]
    pub residual: Option<f64>,
    #[serde(with = "crate::numfmt::opt")]
    pub tol: Option<f64>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failing_states: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Check {
    /// Residual-style check: passes iff `residual ≤ tol`. NaN fails.
    pub fn measured(name: impl Into<String>, kind: CheckKind, residual: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            kind,
            residual: Some(residual),
            tol: Some(tol),
            verdict: if residual <= tol {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            failing_states: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn evidence(name: impl Into<String>, passed: bool) -> Self {
        Check {
            name: name.into(),
            kind: CheckKind::Evidence,
            residual: None,
            tol: None,
            verdict: if passed { Verdict::Pass } else { Verdict::Fail },
            failing_states: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn skipped(name: impl Into<String>, kind: CheckKind, why: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            kind,
            residual: None,
            tol: None,
            verdict: Verdict::Skipped,
            failing_states: Vec::new(),
            notes: vec![why.into()],
        }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn failing(mut self, states: Vec<usize>) -> Self {
        self.failing_states = states;
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// True iff no exact or residual check failed.
    pub fn non_evidence_pass(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.kind == CheckKind::Evidence || c.verdict != Verdict::Fail)
    }

    pub fn to_table(&self) -> String {
        let cells: Vec<[String; 5]> = self
            .checks
            .iter()
            .map(|c| {
                [
                    c.name.clone(),
                    format!("{:?}", c.kind).to_lowercase(),
                    c.residual.map_or("n/a".into(), fmt17),
                    c.tol.map_or("n/a".into(), fmt17),
                    format!("{:?}", c.verdict).to_lowercase(),
                ]
            })
            .collect();
        let header = ["check", "kind", "residual", "tol", "verdict"];
        let mut width = header.map(str::len);
        for row in &cells {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: [&str; 5]| {
            for (i, (cell, w)) in row.iter().zip(width).enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                let _ = write!(out, "{cell:<w$}");
            }
            out.truncate(out.trim_end().len());
            out.push('\n');
        };
        line(&mut out, header);
        for (row, c) in cells.iter().zip(&self.checks) {
            line(&mut out, [&row[0], &row[1], &row[2], &row[3], &row[4]]);
            if !c.failing_states.is_empty() {
                let _ = writeln!(out, "    failing states: {:?}", c.failing_states);
            }
            for n in &c.notes {
                let _ = writeln!(out, "    note: {n}");
            }
        }
        out
    }
}

fn require_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{what} has {} entries, model has {n} states",
            v.len()
        )));
    }
    Ok(())
}

/// Largest `c(x,φ(x)) + Σ_y u(y)q(y|x,φ(x)) − w_ref − u(x)` and where it occurs.
pub fn inequality_residual(model: &MdpModel, policy: &Policy, u: &[f64], w_ref: f64) -> (f64, usize) {
    (0..model.n_states())
        .map(|x| {
            let a = policy.action(x);
            (model.finite_cost(x, a) + model.expect(x, a, u) - w_ref - u[x], x)
        })
        .fold(
            (f64::NEG_INFINITY, 0),
            |best, r| if r.0 > best.0 { r } else { best },
        )
}

fn optimality_inequality(
    name: &str,
    model: &MdpModel,
    policy: &Policy,
    u: &[f64],
    w_ref: f64,
    tol: f64,
) -> Result<Check> {
    require_len("u", u, model.n_states())?;
    policy.check(model)?;
    let (r, x) = inequality_residual(model, policy, u, w_ref);
    let check = Check::measured(name, CheckKind::Residual, r, tol).note(format!("w_ref = {}", fmt17(w_ref)));
    Ok(if check.passed() {
        check
    } else {
        check.failing(vec![x])
    })
}

/// WACOI residual `max_x [c(x,φ(x)) + Σ u q − w_ref − u(x)]`.
pub fn check_wacoi(model: &MdpModel, policy: &Policy, u: &[f64], w_ref: f64, tol: f64) -> Result<Check> {
    optimality_inequality("wacoi", model, policy, u, w_ref, tol)
}

/// The same residual read as the ACOI, with `w_ref` a lower estimate.
pub fn check_acoi(model: &MdpModel, policy: &Policy, u: &[f64], w_ref: f64, tol: f64) -> Result<Check> {
    optimality_inequality("acoi", model, policy, u, w_ref, tol)
}

/// ACOE residual `max_x |w_ref + u(x) − min_a [c(x,a) + Σ u q]|` and the
/// minimizing policy.
pub fn check_acoe(model: &MdpModel, u: &[f64], w_ref: f64, tol: f64) -> Result<(Check, Policy)> {
    require_len("u", u, model.n_states())?;
    let mut worst = (0.0f64, 0usize);
    let mut action_of = Vec::with_capacity(model.n_states());
    for x in 0..model.n_states() {
        let (a, q) = best_action(model, x, u, 1.0);
        action_of.push(a);
        let r = (w_ref + u[x] - q).abs();
        if !(r <= worst.0) {
            worst = (r, x);
        }
    }
    let check =
        Check::measured("acoe", CheckKind::Residual, worst.0, tol).note(format!("w_ref = {}", fmt17(w_ref)));
    let check = if check.passed() {
        check
    } else {
        check.failing(vec![worst.1])
    };
    Ok((check, Policy::new(action_of)))
}

/// Orders `lower ≤ w̲ ≤ w̲_{αn} ≤ w̄_{αn} ≤ w̄ ≤ w* < +∞` on the estimates.
///
/// `lower` is `0` for nonnegative costs and the (negative) minimum cost
/// otherwise. Links through `w̲`, `w̄` are skipped unless the diagnostics
/// carry multi-schedule estimates.
pub fn check_chain(model: &MdpModel, diag: &VanishDiagnostics, w_star: f64, slack: f64) -> Vec<Check> {
    let c_min = model.min_finite_cost().unwrap_or(0.0);
    let lower = c_min.min(0.0);
    let lower_name = if lower == 0.0 { "0" } else { "c_min" };
    let mut named: Vec<(&str, f64)> = vec![(lower_name, lower)];
    let mut skipped = Vec::new();
    match (diag.w_lower, diag.w_upper) {
        (Some(lo), Some(hi)) => {
            named.push(("w_lower", lo));
            named.push(("w_lower_seq", diag.w_lower_seq));
            named.push(("w_upper_seq", diag.w_upper_seq));
            named.push(("w_upper", hi));
        }
        _ => {
            named.push(("w_lower_seq", diag.w_lower_seq));
            named.push(("w_upper_seq", diag.w_upper_seq));
            skipped.push(Check::skipped(
                "chain: w_lower/w_upper links",
                CheckKind::Exact,
                "no multi-schedule estimates of w_lower, w_upper",
            ));
        }
    }
    named.push(("w_star", w_star));
    let mut checks: Vec<Check> = named
        .windows(2)
        .map(|p| {
            let ((a, va), (b, vb)) = (p[0], p[1]);
            Check::measured(format!("chain: {a} <= {b}"), CheckKind::Exact, va - vb, slack)
        })
        .collect();
    if lower != 0.0 {
        checks[0] = checks[0]
            .clone()
            .note("costs take negative values; lower end of the chain is min cost");
    }
    checks.push(Check {
        kind: CheckKind::Exact,
        ..Check::evidence("chain: w_star < inf", w_star.is_finite())
    });
    checks.extend(skipped);
    checks
}

/// Conclusions of the sufficiency theorem: the iterated bound
/// `v^φ_{N,1}(x) ≤ N·w̄_{αn} + u(x) + tol` for `N ≤ horizon`, and evidence
/// that `|(1−α_n)v_{α_n}(x) − w*|` shrinks over the tail window.
pub fn check_theorem1_conclusions(
    model: &MdpModel,
    policy: &Policy,
    u: &[f64],
    diag: &VanishDiagnostics,
    w_star: f64,
    horizon: usize,
    tol: f64,
) -> Result<Vec<Check>> {
    require_len("u", u, model.n_states())?;
    let values = finite_horizon_values(model, Decision::Fixed(policy), horizon, 1.0)?;
    let w = diag.w_upper_seq;
    let mut worst = (f64::NEG_INFINITY, 0usize, 0usize);
    for (k, v) in values.iter().enumerate() {
        let n = (k + 1) as f64;
        for x in 0..model.n_states() {
            let r = v[x] - n * w - u[x];
            if r > worst.0 {
                worst = (r, k + 1, x);
            }
        }
    }
    let bound = Check::measured("theorem: iterated bound", CheckKind::Residual, worst.0, tol)
        .note(format!("N = 1..={horizon}, w_ref = w_upper_seq = {}", fmt17(w)))
        .note(format!("largest residual at N = {}, x = {}", worst.1, worst.2));

    let tail = diag.tail();
    let n = model.n_states();
    let gap =
        |e: &crate::vanish::TraceEntry, x: usize| (e.scaled_m + (1.0 - e.alpha) * e.u[x] - w_star).abs();
    let first = tail.first().expect("tail window is nonempty");
    let last = tail.last().expect("tail window is nonempty");
    let mut growing = Vec::new();
    let mut final_gap: f64 = 0.0;
    let mut monotone = true;
    for x in 0..n {
        let (g0, g1) = (gap(first, x), gap(last, x));
        final_gap = final_gap.max(g1);
        if g1 > g0 + 1e-12 {
            growing.push(x);
        }
        monotone &= tail.windows(2).all(|p| gap(&p[1], x) <= gap(&p[0], x) + 1e-12);
    }
    let mut equality = Check::evidence("theorem: (1-alpha)v_alpha -> w_star", growing.is_empty())
        .failing(growing)
        .note(format!(
            "largest |(1-alpha)v_alpha(x) - w_star| at n_max = {}",
            fmt17(final_gap)
        ))
        .note(format!("w_star = {}", fmt17(w_star)));
    equality.residual = Some(final_gap);
    if !monotone {
        equality = equality.note("gap is not monotone over the tail window");
    }
    Ok(vec![bound, equality])
}

/// Slope above which the tail of `ln(1+u_{α_n}(x))` against `−ln(1−α_n)`
/// counts as growing.
pub const GROWTH_SLOPE: f64 = 0.05;

fn least_squares_slope(t: &[f64], y: &[f64]) -> f64 {
    let k = t.len() as f64;
    let (mt, my) = (t.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    /// `max_n u_{α_n}(x)`.
    #[serde(with = "crate::numfmt::vec")]
    pub max: Vec<f64>,
    /// Tail slope of `ln(1+u)` against `−ln(1−α)`.
    #[serde(with = "crate::numfmt::vec")]
    pub slope: Vec<f64>,
}

pub fn growth_profile(diag: &VanishDiagnostics) -> GrowthProfile {
    let n = diag.n_states();
    let t: Vec<f64> = diag.tail().iter().map(|e| -(1.0 - e.alpha).ln()).collect();
    let max = (0..n)
        .map(|x| {
            diag.trace
                .iter()
                .map(|e| e.u[x])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let slope = (0..n)
        .map(|x| {
            let y: Vec<f64> = diag.tail().iter().map(|e| e.u[x].ln_1p()).collect();
            least_squares_slope(&t, &y)
        })
        .collect();
    GrowthProfile { max, slope }
}

/// Evidence for `sup_α u_α(x) < ∞`, together with `w* < ∞`.
pub fn check_assumption_b(diag: &VanishDiagnostics) -> Check {
    let p = growth_profile(diag);
    let growing: Vec<usize> = (0..p.max.len())
        .filter(|&x| !p.max[x].is_finite() || p.slope[x] > GROWTH_SLOPE)
        .collect();
    let w_finite = diag.w_star_estimate.is_some_and(f64::is_finite);
    let sup = p.max.iter().copied().fold(0.0, f64::max);
    let steepest = p.slope.iter().copied().fold(0.0, f64::max);
    let mut c = Check::evidence("assumption B", growing.is_empty() && w_finite)
        .failing(growing)
        .note(format!("max over trace of u_alpha = {}", fmt17(sup)))
        .note(format!(
            "largest tail slope of ln(1+u) vs -ln(1-alpha) = {} (growing above {GROWTH_SLOPE})",
            fmt17(steepest)
        ))
        .note(format!("evidence on the truncated schedule {}", diag.schedule));
    c = c.note(match diag.w_star_estimate {
        Some(w) => format!("B(i): w_star estimate = {}", fmt17(w)),
        None => "B(i): no w_star estimate available".into(),
    });
    c
}

/// Evidence for `liminf_n u_{α_n}(x) < ∞`: the tail-window minimum.
pub fn check_assumption_b_underline_seq(diag: &VanishDiagnostics) -> Check {
    let n = diag.n_states();
    let mins: Vec<f64> = (0..n)
        .map(|x| diag.tail().iter().map(|e| e.u[x]).fold(f64::INFINITY, f64::min))
        .collect();
    let infinite: Vec<usize> = (0..n).filter(|&x| !mins[x].is_finite()).collect();
    let sup = mins.iter().copied().fold(0.0, f64::max);
    Check::evidence("assumption B_seq", infinite.is_empty())
        .failing(infinite)
        .note(format!(
            "max over states of the tail minimum of u = {}",
            fmt17(sup)
        ))
        .note(format!("evidence on the truncated schedule {}", diag.schedule))
}

/// Per-state outcome of the lower semi-equicontinuity search for one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateModulus {
    /// Largest distance-set `δ` with no violator in `B_δ(s)`; `+∞` when no
    /// state ever violates.
    #[serde(with = "crate::numfmt")]
    pub delta: f64,
    /// Every nearest neighbor of `s` violates.
    pub fails: bool,
}

/// For each state, whether some `n` and `s'` have `f_n(s') ≤ f_n(s) − ε`.
fn violators<'a>(family: &'a [&'a [f64]], s: usize, eps: f64) -> impl Fn(usize) -> bool + 'a {
    move |y| family.iter().any(|f| !(f[y] > f[s] - eps))
}

/// Distance-set modulus search behind the lower semi-equicontinuity check.
///
/// A state fails when all of its nearest neighbors violate; a single
/// violating neighbor in the nearest shell alone is not counted, since a
/// grid cannot tell which side of a jump a limit point sits on.
pub fn lower_semi_equicontinuity_profile(family: &[&[f64]], model: &MdpModel, eps: f64) -> Vec<StateModulus> {
    let n = model.n_states();
    (0..n)
        .map(|s| {
            let bad = violators(family, s, eps);
            let mut delta = f64::INFINITY;
            let mut nearest = f64::INFINITY;
            for y in (0..n).filter(|&y| y != s) {
                let d = model.distance(s, y);
                if d > 0.0 {
                    nearest = nearest.min(d);
                }
                if bad(y) {
                    delta = delta.min(d);
                }
            }
            let shell: Vec<usize> = (0..n)
                .filter(|&y| y != s && model.distance(s, y) == nearest)
                .collect();
            let fails = !shell.is_empty() && shell.iter().all(|&y| bad(y));
            StateModulus { delta, fails }
        })
        .collect()
}

fn grid_resolution(model: &MdpModel) -> f64 {
    model.distinct_distances().first().copied().unwrap_or(0.0)
}

fn check_family(family: &[&[f64]], model: &MdpModel) -> Result<()> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("function family is empty".into()));
    }
    for f in family {
        require_len("family member", f, model.n_states())?;
    }
    Ok(())
}

pub fn check_lower_semi_equicontinuity(
    family: &[&[f64]],
    model: &MdpModel,
    eps_list: &[f64],
) -> Result<Check> {
    lse_named("lower semi-equicontinuity", family, model, eps_list)
}

fn lse_named(name: &str, family: &[&[f64]], model: &MdpModel, eps_list: &[f64]) -> Result<Check> {
    check_family(family, model)?;
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument(
            "eps list must be nonempty and positive".into(),
        ));
    }
    let mut failing = Vec::new();
    let mut notes = Vec::new();
    for &eps in eps_list {
        let profile = lower_semi_equicontinuity_profile(family, model, eps);
        let bad: Vec<usize> = (0..profile.len()).filter(|&s| profile[s].fails).collect();
        let delta = profile
            .iter()
            .filter(|p| !p.fails)
            .map(|p| p.delta)
            .fold(f64::INFINITY, f64::min);
        notes.push(format!(
            "eps = {}: {} failing state(s), smallest delta among passing states = {}",
            fmt17(eps),
            bad.len(),
            fmt17(delta)
        ));
        failing.extend(bad);
    }
    failing.sort_unstable();
    failing.dedup();
    let mut c = Check::evidence(name, failing.is_empty()).failing(failing);
    c.notes = notes;
    Ok(c.note(format!(
        "evidence at grid resolution h = {}",
        fmt17(grid_resolution(model))
    )))
}

/// Lower semi-equicontinuity of the family and of its negation.
pub fn check_equicontinuity(family: &[&[f64]], model: &MdpModel, eps_list: &[f64]) -> Result<Check> {
    check_family(family, model)?;
    let negated: Vec<Vec<f64>> = family.iter().map(|f| f.iter().map(|v| -v).collect()).collect();
    let neg: Vec<&[f64]> = negated.iter().map(Vec::as_slice).collect();
    let lower = lse_named("lower side", family, model, eps_list)?;
    let upper = lse_named("upper side", &neg, model, eps_list)?;
    let mut failing: Vec<usize> = lower
        .failing_states
        .iter()
        .chain(&upper.failing_states)
        .copied()
        .collect();
    failing.sort_unstable();
    failing.dedup();
    let mut c = Check::evidence("equicontinuity", lower.passed() && upper.passed()).failing(failing);
    c.notes
        .push(format!("lower side: {:?}", lower.verdict).to_lowercase());
    c.notes
        .push(format!("upper side: {:?}", upper.verdict).to_lowercase());
    if !upper.failing_states.is_empty() {
        c.notes
            .push(format!("upper side fails at {:?}", upper.failing_states));
    }
    c.notes.extend(lower.notes.last().cloned());
    Ok(c)
}

/// `U ≥ f_n` pointwise for every member, and `U` finite on the support of
/// every available kernel row.
pub fn check_ec_majorant(family: &[&[f64]], model: &MdpModel, majorant: &[f64]) -> Result<Check> {
    check_family(family, model)?;
    require_len("majorant", majorant, model.n_states())?;
    let mut worst = (f64::NEG_INFINITY, 0usize, 0usize);
    for (k, f) in family.iter().enumerate() {
        for x in 0..f.len() {
            let r = f[x] - majorant[x];
            if r > worst.0 {
                worst = (r, k, x);
            }
        }
    }
    let neg = majorant.iter().any(|v| *v < 0.0);
    let unbounded: Vec<usize> = (0..model.n_states())
        .filter(|&x| {
            effective_action_set(model, x)
                .into_iter()
                .any(|a| model.row(x, a).iter().any(|&(y, _)| !majorant[y].is_finite()))
        })
        .collect();
    let mut c = Check::measured("EC majorant", CheckKind::Exact, worst.0, 0.0);
    if c.passed() && (neg || !unbounded.is_empty()) {
        c.verdict = Verdict::Fail;
    }
    if !(worst.0 <= 0.0) {
        c = c
            .note(format!("witness: n = {}, x = {}", worst.1, worst.2))
            .failing(vec![worst.2]);
    }
    if neg {
        c = c.note("majorant takes negative values");
    }
    if !unbounded.is_empty() {
        c = c
            .note("majorant infinite on the kernel support of these states")
            .failing(unbounded);
    }
    Ok(c)
}

/// `T(K) = max_n Σ_y f_n(y)·1{f_n(y) ≥ K}·q(y|x,a)`, the largest over `(x,a)`.
pub fn ui_tail(family: &[&[f64]], model: &MdpModel, k: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for x in 0..model.n_states() {
        for a in effective_action_set(model, x) {
            for f in family {
                let t: f64 = model
                    .row(x, a)
                    .iter()
                    .filter(|&&(y, _)| f[y] >= k)
                    .fold(0.0, |s, &(y, q)| s + f[y] * q);
                worst = worst.max(t);
            }
        }
    }
    worst
}

/// Asymptotic uniform integrability along the family (taken as the tail
/// window by callers): `T(K)` must reach `tol` at the largest `K`.
pub fn check_asymptotic_ui(family: &[&[f64]], model: &MdpModel, k_list: &[f64], tol: f64) -> Result<Check> {
    check_family(family, model)?;
    if k_list.is_empty() || k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "K list must be nonempty and increasing".into(),
        ));
    }
    let t: Vec<f64> = k_list.iter().map(|&k| ui_tail(family, model, k)).collect();
    let last = *t.last().expect("nonempty");
    let mut c = Check::measured("asymptotic UI", CheckKind::Evidence, last, tol);
    let increasing = t.windows(2).any(|w| w[1] > w[0]);
    if increasing {
        c.verdict = Verdict::Fail;
        c = c.note("T(K) increases along the K list");
    }
    let listing: Vec<String> = k_list
        .iter()
        .zip(&t)
        .map(|(k, v)| format!("T({}) = {}", fmt17(*k), fmt17(*v)))
        .collect();
    Ok(c.note(listing.join(", "))
        .note("limsup over n estimated by the max over the supplied family"))
}

/// Powers of two from 1 up to the first one above the family maximum.
pub fn default_k_list(family: &[&[f64]]) -> Vec<f64> {
    let top = family.iter().flat_map(|f| f.iter().copied()).fold(0.0, f64::max);
    let mut ks = vec![1.0];
    while *ks.last().unwrap() <= top && ks.len() < 1100 {
        ks.push(ks.last().unwrap() * 2.0);
    }
    ks
}

/// Convergence evidence for `(1−α_n)m_{α_n}`: tail oscillation
/// `w_upper_seq − w_lower_seq ≤ tol`.
pub fn check_corollary_conditions(diag: &VanishDiagnostics, tol: f64) -> Check {
    let osc = diag.w_upper_seq - diag.w_lower_seq;
    let tail: Vec<f64> = diag.tail().iter().map(|e| e.scaled_m).collect();
    let steps: Vec<f64> = tail.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let shrinking = steps.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    let mut c = Check::measured(
        "corollary: (1-alpha)m_alpha converges",
        CheckKind::Evidence,
        osc,
        tol,
    )
    .note(format!(
        "tail oscillation of (1-alpha)m_alpha = {} (w_lower_seq = {}, w_upper_seq = {})",
        fmt17(osc),
        fmt17(diag.w_lower_seq),
        fmt17(diag.w_upper_seq)
    ));
    c = c.note(if shrinking {
        "successive tail differences are nonincreasing"
    } else {
        "successive tail differences are not monotone"
    });
    c
}

/// `max_{n in tail, x, a} [(1−α_n)m_{α_n} + u_{α_n}(x) − c(x,a) − Σ u_{α_n} q]`.
pub fn check_transform_dcoe(model: &MdpModel, diag: &VanishDiagnostics, tol: f64) -> Check {
    let mut worst = (f64::NEG_INFINITY, 0usize, 0usize);
    for e in diag.tail() {
        for x in 0..model.n_states() {
            for a in effective_action_set(model, x) {
                let r = e.scaled_m + e.u[x] - model.finite_cost(x, a) - model.expect(x, a, &e.u);
                if r > worst.0 {
                    worst = (r, e.index, x);
                }
            }
        }
    }
    let c = Check::measured("transformed DCOE", CheckKind::Residual, worst.0, tol)
        .note(format!("largest residual at n = {}, x = {}", worst.1, worst.2));
    if c.passed() {
        c
    } else {
        c.failing(vec![worst.2])
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// Tolerance for the optimality residuals; the `A*` tolerance of the
    /// diagnostics when absent.
    pub tol: Option<f64>,
    pub bound_horizon: usize,
    pub bound_tol: f64,
    pub chain_slack: f64,
    /// Transformed-DCOE tolerance as a multiple of the solver tolerance.
    pub transform_factor: f64,
    pub corollary_tol: f64,
    pub eps_list: Vec<f64>,
    pub k_list: Option<Vec<f64>>,
    pub ui_tol: f64,
    pub majorant: Option<Vec<f64>>,
    /// Restrict to checks whose group name is listed.
    pub only: Option<Vec<String>>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            tol: None,
            bound_horizon: 100,
            bound_tol: 1e-7,
            chain_slack: 1e-9,
            transform_factor: 10.0,
            corollary_tol: 1e-6,
            eps_list: vec![0.5, 0.1, 0.01],
            k_list: None,
            ui_tol: 1e-12,
            majorant: None,
            only: None,
        }
    }
}

/// Check groups understood by [`run_suite`].
pub const CHECK_GROUPS: [&str; 10] = [
    "wacoi",
    "acoe",
    "chain",
    "theorem",
    "assumption-b",
    "lec",
    "ec",
    "ui",
    "corollary",
    "transform",
];

/// Runs the selected check groups on solved diagnostics.
pub fn run_suite(
    model: &MdpModel,
    diag: &VanishDiagnostics,
    opts: &SuiteOptions,
) -> Result<VerificationReport> {
    if let Some(only) = &opts.only {
        if let Some(bad) = only.iter().find(|g| !CHECK_GROUPS.contains(&g.as_str())) {
            return Err(Error::InvalidArgument(format!(
                "unknown check {bad:?}; known: {}",
                CHECK_GROUPS.join(", ")
            )));
        }
    }
    let want = |g: &str| opts.only.as_ref().is_none_or(|o| o.iter().any(|x| x == g));
    let mut report = VerificationReport::default();
    let u = diag
        .u
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("diagnostics carry no limit u".into()))?;
    let u = &u.values;
    let w_upper = diag.w_upper_seq;
    let tol = opts
        .tol
        .or(diag.a_star_tol)
        .unwrap_or_else(|| crate::vanish::default_a_star_tol(w_upper, u));
    let w_star = diag.w_star_estimate.unwrap_or(f64::NAN);
    let family = diag.family();
    let tail = diag.tail_family();

    let mut wacoi_pass = false;
    if want("wacoi") || want("theorem") {
        match &diag.policy {
            Some(p) => {
                let c = check_wacoi(model, p, u, w_upper, tol)?;
                wacoi_pass = c.passed();
                if want("wacoi") {
                    report.push(c);
                }
            }
            None => report.push(Check::skipped(
                "wacoi",
                CheckKind::Residual,
                "no extracted policy (some A*(x) is empty)",
            )),
        }
    }
    let mut acoe_policy = None;
    if want("acoe") {
        let (c, p) = check_acoe(model, u, w_upper, tol)?;
        report.push(c);
        acoe_policy = Some(p);
    }
    if want("chain") {
        for c in check_chain(model, diag, w_star, opts.chain_slack) {
            report.push(c);
        }
    }
    if want("theorem") {
        match (&diag.policy, wacoi_pass) {
            (Some(p), true) => {
                for c in
                    check_theorem1_conclusions(model, p, u, diag, w_star, opts.bound_horizon, opts.bound_tol)?
                {
                    report.push(c);
                }
            }
            _ => report.push(Check::skipped(
                "theorem: iterated bound",
                CheckKind::Residual,
                "requires a policy passing the WACOI",
            )),
        }
    }
    if want("assumption-b") {
        report.push(check_assumption_b(diag));
        report.push(check_assumption_b_underline_seq(diag));
    }
    if want("lec") {
        report.push(check_lower_semi_equicontinuity(&family, model, &opts.eps_list)?);
    }
    if want("ec") {
        report.push(check_equicontinuity(&family, model, &opts.eps_list)?);
        let (majorant, note) = match &opts.majorant {
            Some(m) => (m.clone(), "caller-supplied majorant"),
            None => (
                (0..model.n_states())
                    .map(|x| family.iter().map(|f| f[x]).fold(0.0, f64::max))
                    .collect(),
                "majorant = pointwise max of the trace",
            ),
        };
        report.push(check_ec_majorant(&family, model, &majorant)?.note(note));
    }
    if want("ui") {
        let ks = opts.k_list.clone().unwrap_or_else(|| default_k_list(&tail));
        report.push(check_asymptotic_ui(&tail, model, &ks, opts.ui_tol)?);
    }
    if want("corollary") {
        let c = check_corollary_conditions(diag, opts.corollary_tol);
        let pass = c.passed();
        report.push(c);
        if pass {
            let w_lo = diag.w_lower_seq;
            if let Some(p) = &diag.policy {
                let c = check_acoi(model, p, u, w_lo, tol)?;
                report.push(Check {
                    name: "corollary: acoi with w_lower_seq".into(),
                    ..c
                });
            }
            let (c, _) = check_acoe(model, u, w_lo, tol)?;
            report.push(Check {
                name: "corollary: acoe with w_lower_seq".into(),
                ..c
            });
        }
    }
    if want("transform") {
        report.push(
            check_transform_dcoe(model, diag, opts.transform_factor * diag.tol)
                .note(format!("tol = {} x solver tol", opts.transform_factor)),
        );
    }
    if let (Some(p), Some(q)) = (&diag.policy, &acoe_policy) {
        if p != q {
            if let Some(c) = report.checks.iter_mut().find(|c| c.name == "acoe") {
                c.notes
                    .push("argmin policy differs from the extracted policy".into());
            }
        }
    }
    report.push(
        Check::skipped(
            "assumptions W*/S*",
            CheckKind::Evidence,
            format!("declared continuity class: {}", model.continuity_class()),
        )
        .note("K-inf-compactness is automatic on finite models"),
    );
    Ok(report)
}
