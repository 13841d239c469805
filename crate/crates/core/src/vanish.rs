//! Vanishing-discount limit objects: tail-window estimates of
//! `liminf/limsup (1−α_n)m_{α_n}`, the two liminf constructions of the limit
//! relative value `u`, the sets `A*(x)` and policy extraction.
//!
//! Every limit over `n` is estimated on a truncated schedule by a min or max
//! over the tail window; the results are estimates, not limits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain;
use crate::discounted::{greedy_policy, relative_value, RelativeValue};
use crate::error::{Error, Result};
use crate::model::{
    effective_action_set, validate_model, Construction, ContinuityClass, MdpModel, Policy, ValueFunction,
    ValueKind,
};
use crate::schedule::DiscountSchedule;

/// Solver tolerance used when none is given.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Relative scale of the default `A*` membership tolerance.
pub const A_STAR_TOL_SCALE: f64 = 1e-7;

/// One solved schedule entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub index: usize,
    #[serde(with = "crate::numfmt")]
    pub alpha: f64,
    #[serde(with = "crate::numfmt")]
    pub m: f64,
    /// `(1−α_n)m_{α_n}`.
    #[serde(with = "crate::numfmt")]
    pub scaled_m: f64,
    #[serde(with = "crate::numfmt::vec")]
    pub u: Vec<f64>,
    pub iterations: usize,
    #[serde(with = "crate::numfmt")]
    pub residual: f64,
}

impl TraceEntry {
    fn from_solution(index: usize, rv: RelativeValue) -> Self {
        TraceEntry {
            index,
            alpha: rv.alpha,
            m: rv.m,
            scaled_m: rv.scaled_m,
            u: rv.u.values,
            iterations: rv.iterations,
            residual: rv.residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishDiagnostics {
    pub schedule: DiscountSchedule,
    #[serde(with = "crate::numfmt")]
    pub tol: f64,
    /// First index of the tail window; the window runs to `n_max`.
    pub tail_start: usize,
    pub trace: Vec<TraceEntry>,
    /// Tail-window min of `(1−α_n)m_{α_n}`.
    #[serde(with = "crate::numfmt")]
    pub w_lower_seq: f64,
    /// Tail-window max of `(1−α_n)m_{α_n}`.
    #[serde(with = "crate::numfmt")]
    pub w_upper_seq: f64,
    /// Estimates of `w̲`, `w̄` over this schedule and its refinements.
    #[serde(with = "crate::numfmt::opt", default)]
    pub w_lower: Option<f64>,
    #[serde(with = "crate::numfmt::opt", default)]
    pub w_upper: Option<f64>,
    #[serde(default)]
    pub refinement: Vec<DiscountSchedule>,
    #[serde(default)]
    pub u: Option<ValueFunction>,
    #[serde(rename = "U_m", with = "crate::numfmt::vec2", default)]
    pub u_m: Vec<Vec<f64>>,
    #[serde(with = "crate::numfmt::vec2", default)]
    pub u_lower_m: Vec<Vec<f64>>,
    #[serde(with = "crate::numfmt::vec", default)]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub a_star: Vec<Vec<usize>>,
    #[serde(with = "crate::numfmt::opt", default)]
    pub a_star_w_ref: Option<f64>,
    #[serde(with = "crate::numfmt::opt", default)]
    pub a_star_tol: Option<f64>,
    #[serde(default)]
    pub policy: Option<Policy>,
    #[serde(with = "crate::numfmt::opt", default)]
    pub w_star_estimate: Option<f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl VanishDiagnostics {
    pub fn tail(&self) -> &[TraceEntry] {
        &self.trace[self.tail_start..]
    }

    /// `u_{α_n}` for all `n`, in schedule order.
    pub fn family(&self) -> Vec<&[f64]> {
        self.trace.iter().map(|e| e.u.as_slice()).collect()
    }

    pub fn tail_family(&self) -> Vec<&[f64]> {
        self.tail().iter().map(|e| e.u.as_slice()).collect()
    }

    pub fn n_states(&self) -> usize {
        self.trace.first().map_or(0, |e| e.u.len())
    }

    /// States whose `A*(x)` is empty.
    pub fn empty_action_states(&self) -> Vec<usize> {
        self.a_star
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_empty())
            .map(|(x, _)| x)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceOptions {
    pub tol: f64,
    /// Tail-window length; `⌈n_max/3⌉` when absent.
    pub tail_window: Option<usize>,
    pub parallel: bool,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            tol: DEFAULT_TOL,
            tail_window: None,
            parallel: true,
        }
    }
}

fn require_valid(model: &MdpModel) -> Result<()> {
    validate_model(model).into_result()
}

fn solve_all(model: &MdpModel, alphas: &[f64], tol: f64, parallel: bool) -> Result<Vec<TraceEntry>> {
    let one = |(i, &a): (usize, &f64)| {
        relative_value(model, a, tol)
            .map(|rv| TraceEntry::from_solution(i, rv))
            .map_err(|e| Error::ScheduleEntry {
                index: i,
                source: Box::new(e),
            })
    };
    if parallel {
        let results: Vec<Result<TraceEntry>> = alphas.par_iter().enumerate().map(one).collect();
        results.into_iter().collect()
    } else {
        alphas.iter().enumerate().map(one).collect()
    }
}

/// Solves every `α_n` and records the trace with the tail-window estimates
/// of `w̲_{αn}` and `w̄_{αn}`.
pub fn sequence_diagnostics(
    model: &MdpModel,
    schedule: &DiscountSchedule,
    opts: &SequenceOptions,
) -> Result<VanishDiagnostics> {
    require_valid(model)?;
    let n_max = schedule.n_max();
    if n_max < 2 {
        return Err(Error::InvalidArgument(format!(
            "schedule needs n_max >= 2, got {n_max}"
        )));
    }
    let window = opts.tail_window.unwrap_or_else(|| schedule.default_tail_window());
    if window == 0 || window > n_max + 1 {
        return Err(Error::InvalidArgument(format!(
            "tail window {window} outside 1..={}",
            n_max + 1
        )));
    }
    let trace = solve_all(model, schedule.values(), opts.tol, opts.parallel)?;
    let tail_start = n_max + 1 - window;
    let (w_lower_seq, w_upper_seq) = min_max(trace[tail_start..].iter().map(|e| e.scaled_m));
    Ok(VanishDiagnostics {
        schedule: schedule.clone(),
        tol: opts.tol,
        tail_start,
        trace,
        w_lower_seq,
        w_upper_seq,
        w_lower: None,
        w_upper: None,
        refinement: Vec::new(),
        u: None,
        u_m: Vec::new(),
        u_lower_m: Vec::new(),
        radii: Vec::new(),
        a_star: Vec::new(),
        a_star_w_ref: None,
        a_star_tol: None,
        policy: None,
        w_star_estimate: None,
        notes: vec![format!(
            "limits over n estimated on indices {tail_start}..={n_max} of {schedule}"
        )],
    })
}

fn min_max(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Aggregates `w̲`, `w̄` estimates over `diag`'s schedule and `others`.
pub fn refine_w_bounds(
    model: &MdpModel,
    diag: &mut VanishDiagnostics,
    others: &[DiscountSchedule],
    opts: &SequenceOptions,
) -> Result<()> {
    let (mut lo, mut hi) = (diag.w_lower_seq, diag.w_upper_seq);
    for s in others {
        let d = sequence_diagnostics(
            model,
            s,
            &SequenceOptions {
                tail_window: None,
                ..*opts
            },
        )?;
        lo = lo.min(d.w_lower_seq);
        hi = hi.max(d.w_upper_seq);
    }
    diag.w_lower = Some(lo);
    diag.w_upper = Some(hi);
    diag.refinement = others.to_vec();
    diag.notes.push(format!(
        "w_lower/w_upper aggregate {} schedule(s); estimates, not limits over all alpha",
        others.len() + 1
    ));
    Ok(())
}

/// Pointwise minimum of a family.
pub fn pointwise_liminf(family: &[&[f64]]) -> Vec<f64> {
    let n = family.first().map_or(0, |f| f.len());
    (0..n)
        .map(|x| family.iter().map(|f| f[x]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// `u(x) = min over the tail window of u_{α_n}(x)`.
pub fn limit_relative_value_pointwise(diag: &VanishDiagnostics) -> ValueFunction {
    ValueFunction::new(
        pointwise_liminf(&diag.tail_family()),
        ValueKind::Limit {
            construction: Construction::Pointwise,
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakLimit {
    pub u: ValueFunction,
    /// `U_m` for `m = 0..=m_max`.
    pub u_m: Vec<Vec<f64>>,
    /// `u̲_m` for `m = 0..=m_max`.
    pub u_lower_m: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

/// A radius above the diameter followed by the distinct pairwise distances
/// in descending order. The last ball is `{x}` plus nothing else.
pub fn default_radii(model: &MdpModel) -> Vec<f64> {
    let d = model.distinct_distances();
    let top = d.last().map_or(1.0, |diam| 2.0 * diam);
    std::iter::once(top).chain(d.into_iter().rev()).collect()
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("radius schedule is empty".into()));
    }
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    if radii.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidArgument("radii must be strictly decreasing".into()));
    }
    Ok(())
}

/// `U_m = min_{n≥m} f_n`, `u̲_m(x) = max_R min_{B_R(x)} U_m` and
/// `u = max_m u̲_m`, for `m = 0..=m_max`.
pub fn weak_liminf(family: &[&[f64]], m_max: usize, model: &MdpModel, radii: &[f64]) -> Result<WeakLimit> {
    check_radii(radii)?;
    if m_max >= family.len() {
        return Err(Error::InvalidArgument(format!(
            "m_max {m_max} beyond family of length {}",
            family.len()
        )));
    }
    let n = model.n_states();
    if family.iter().any(|f| f.len() != n) {
        return Err(Error::InvalidArgument(
            "family does not match the state count".into(),
        ));
    }
    // Suffix minima over n give every U_m in one backward pass.
    let mut suffix = vec![vec![f64::INFINITY; n]; family.len() + 1];
    for k in (0..family.len()).rev() {
        for x in 0..n {
            suffix[k][x] = suffix[k + 1][x].min(family[k][x]);
        }
    }
    let u_m: Vec<Vec<f64>> = suffix.into_iter().take(m_max + 1).collect();
    // Balls are nested in R, so the max over R of the ball minimum is
    // attained at the smallest radius.
    let r_min = *radii.last().expect("nonempty");
    let balls: Vec<Vec<usize>> = (0..n)
        .map(|x| crate::model::ball(model, x, r_min))
        .collect::<Result<_>>()?;
    let u_lower_m: Vec<Vec<f64>> = u_m
        .iter()
        .map(|um| {
            balls
                .iter()
                .map(|b| b.iter().map(|&y| um[y]).fold(f64::INFINITY, f64::min))
                .collect()
        })
        .collect();
    let u = (0..n)
        .map(|x| u_lower_m.iter().map(|l| l[x]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(WeakLimit {
        u: ValueFunction::new(
            u,
            ValueKind::Limit {
                construction: Construction::Weak,
            },
        ),
        u_m,
        u_lower_m,
        radii: radii.to_vec(),
    })
}

/// Weak construction on the trace, with `m` running up to the tail-window
/// start so that it never exceeds the pointwise construction.
pub fn limit_relative_value_weak(
    diag: &VanishDiagnostics,
    model: &MdpModel,
    radii: Option<&[f64]>,
) -> Result<WeakLimit> {
    let owned;
    let radii = match radii {
        Some(r) => r,
        None => {
            owned = default_radii(model);
            &owned
        }
    };
    weak_liminf(&diag.family(), diag.tail_start, model, radii)
}

/// `1e−7·(1 + |w_ref| + max u)`.
pub fn default_a_star_tol(w_ref: f64, u: &[f64]) -> f64 {
    let u_max = u.iter().copied().fold(0.0, f64::max);
    A_STAR_TOL_SCALE * (1.0 + w_ref.abs() + u_max)
}

/// `A*(x) = {a ∈ A(x) : c(x,a) + Σ_y u(y)q(y|x,a) ≤ w_ref + u(x) + tol}`.
pub fn optimal_action_set(model: &MdpModel, u: &[f64], w_ref: f64, tol: f64) -> Result<Vec<Vec<usize>>> {
    if u.len() != model.n_states() {
        return Err(Error::InvalidArgument("u does not match the state count".into()));
    }
    if !u.iter().all(|v| v.is_finite()) || !w_ref.is_finite() {
        return Err(Error::InvalidArgument("u and w_ref must be finite".into()));
    }
    Ok((0..model.n_states())
        .map(|x| {
            effective_action_set(model, x)
                .into_iter()
                .filter(|&a| model.finite_cost(x, a) + model.expect(x, a, u) <= w_ref + u[x] + tol)
                .collect()
        })
        .collect())
}

/// Lowest-index selector of `A*(x)`.
pub fn extract_policy(a_star: &[Vec<usize>]) -> Result<Policy> {
    a_star
        .iter()
        .enumerate()
        .map(|(x, s)| s.first().copied().ok_or(Error::EmptyActionSet { state: x }))
        .collect::<Result<Vec<_>>>()
        .map(Policy::new)
}

/// Weak for `W*` models, pointwise otherwise.
pub fn default_construction(class: ContinuityClass) -> Construction {
    match class {
        ContinuityClass::Weak => Construction::Weak,
        _ => Construction::Pointwise,
    }
}

#[derive(Debug, Clone, Default)]
pub struct VanishOptions {
    pub sequence: SequenceOptions,
    pub construction: Option<Construction>,
    pub radii: Option<Vec<f64>>,
    /// Reference level for `A*`; `w_upper_seq` when absent.
    pub w_ref: Option<f64>,
    pub a_star_tol: Option<f64>,
    pub refinement: Vec<DiscountSchedule>,
}

/// Full pipeline: trace, limit `u`, `A*`, extracted policy and the exact
/// average cost of that policy as the `w*` estimate.
///
/// An empty `A*(x)` is not an error here: the diagnostics come back with
/// `policy = None` and the `w*` estimate taken from the greedy policy of the
/// last solve. Callers inspect [`VanishDiagnostics::empty_action_states`].
pub fn run(model: &MdpModel, schedule: &DiscountSchedule, opts: &VanishOptions) -> Result<VanishDiagnostics> {
    let mut diag = sequence_diagnostics(model, schedule, &opts.sequence)?;
    if !opts.refinement.is_empty() {
        refine_w_bounds(model, &mut diag, &opts.refinement, &opts.sequence)?;
    }
    let construction = opts
        .construction
        .unwrap_or_else(|| default_construction(model.continuity_class()));
    let u = match construction {
        Construction::Pointwise => limit_relative_value_pointwise(&diag),
        Construction::Weak => {
            let weak = limit_relative_value_weak(&diag, model, opts.radii.as_deref())?;
            diag.u_m = weak.u_m;
            diag.u_lower_m = weak.u_lower_m;
            diag.radii = weak.radii;
            weak.u
        }
    };
    let w_ref = opts.w_ref.unwrap_or(diag.w_upper_seq);
    let tol = opts
        .a_star_tol
        .unwrap_or_else(|| default_a_star_tol(w_ref, &u.values));
    diag.a_star = optimal_action_set(model, &u.values, w_ref, tol)?;
    diag.a_star_w_ref = Some(w_ref);
    diag.a_star_tol = Some(tol);
    diag.u = Some(u);
    let policy = match extract_policy(&diag.a_star) {
        Ok(p) => {
            diag.policy = Some(p.clone());
            p
        }
        Err(_) => {
            let last = diag.trace.last().expect("nonempty trace");
            diag.notes.push(format!(
                "A*(x) empty at states {:?}; w* estimate uses the greedy policy at alpha = {}",
                diag.empty_action_states(),
                last.alpha
            ));
            greedy_policy(model, &last.u, last.alpha)
        }
    };
    let avg = chain::average_cost(model, &policy);
    if !avg.is_unichain() {
        diag.notes.push(format!(
            "policy chain has {} recurrent classes; w* estimate is the minimum class gain",
            avg.recurrent_classes.len()
        ));
    }
    diag.w_star_estimate = Some(avg.min());
    Ok(diag)
}
