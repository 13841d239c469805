//! Finite-horizon and discounted solvers, and the relative values
//! `(m_α, u_α)` they feed into.
//!
//! Value iteration is carried out on the relative iterate `h_k = v_k − min v_k`
//! rather than on `v_k` itself. Both describe the same sequence
//! `v_{k+1} = T v_k` started from the constant `c_min/(1−α)`, but `v_k` grows
//! like `1/(1−α)` while `h_k` stays of the order of the cost range, so
//! `(1−α)m_α` and `u_α` never suffer cancellation as α approaches one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MdpModel, Policy, ValueFunction, ValueKind};

/// Hard ceiling on value-iteration sweeps, whatever the predicted cap.
pub const MAX_ITERATIONS: usize = 10_000_000;

/// Extra sweeps on top of the contraction estimate.
const CAP_MARGIN: usize = 100;

/// Residual target used when evaluating a fixed policy.
pub const POLICY_TOL: f64 = 1e-12;

/// Which action a backup uses at each state.
#[derive(Debug, Clone, Copy)]
pub enum Decision<'a> {
    /// Minimize over `A(x)`, lowest action index on ties.
    Optimal,
    Fixed(&'a Policy),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeValue {
    #[serde(with = "crate::numfmt")]
    pub alpha: f64,
    /// `v_α`, formed as `m + u` for display; large when α is close to one.
    pub v: ValueFunction,
    /// `m_α = min_x v_α(x)`.
    #[serde(with = "crate::numfmt")]
    pub m: f64,
    /// `(1−α)m_α`, computed without forming `m_α`.
    #[serde(with = "crate::numfmt")]
    pub scaled_m: f64,
    /// `u_α = v_α − m_α`, with `min u_α = 0` exactly.
    pub u: ValueFunction,
    pub iterations: usize,
    /// Sup-norm Bellman residual bound of the returned solution.
    #[serde(with = "crate::numfmt")]
    pub residual: f64,
}

/// `c(x,a) + α Σ_y f(y) q(y|x,a)`.
#[inline]
pub fn q_value(model: &MdpModel, x: usize, a: usize, f: &[f64], alpha: f64) -> f64 {
    model.finite_cost(x, a) + alpha * model.expect(x, a, f)
}

/// Minimizing action and its value at `x`; lowest index wins ties.
pub fn best_action(model: &MdpModel, x: usize, f: &[f64], alpha: f64) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for a in 0..model.n_actions() {
        if !model.cost(x, a).is_finite() {
            continue;
        }
        let q = q_value(model, x, a, f, alpha);
        if q < best.1 || best.0 == usize::MAX {
            best = (a, q);
        }
    }
    best
}

fn backup(model: &MdpModel, decision: Decision<'_>, f: &[f64], alpha: f64, out: &mut [f64]) {
    for (x, o) in out.iter_mut().enumerate() {
        *o = match decision {
            Decision::Optimal => best_action(model, x, f, alpha).1,
            Decision::Fixed(p) => q_value(model, x, p.action(x), f, alpha),
        };
    }
}

/// The Bellman operator `(T v)(x) = min_{a∈A(x)} [c(x,a) + α Σ_y v(y) q(y|x,a)]`.
pub fn bellman_operator(model: &MdpModel, v: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = vec![0.0; model.n_states()];
    backup(model, Decision::Optimal, v, alpha, &mut out);
    out
}

/// Greedy policy with respect to `f`; lowest index on ties.
pub fn greedy_policy(model: &MdpModel, f: &[f64], alpha: f64) -> Policy {
    Policy::new(
        (0..model.n_states())
            .map(|x| best_action(model, x, f, alpha).0)
            .collect(),
    )
}

fn check_alpha(alpha: f64, closed: bool) -> Result<()> {
    let ok = if closed {
        (0.0..=1.0).contains(&alpha)
    } else {
        (0.0..1.0).contains(&alpha)
    };
    if ok {
        Ok(())
    } else {
        let range = if closed { "[0,1]" } else { "[0,1)" };
        Err(Error::InvalidArgument(format!(
            "discount factor {alpha} outside {range}"
        )))
    }
}

/// `v_{n,α}` for every horizon `n = 1..=horizon` by backward induction.
pub fn finite_horizon_values(
    model: &MdpModel,
    decision: Decision<'_>,
    horizon: usize,
    alpha: f64,
) -> Result<Vec<ValueFunction>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    check_alpha(alpha, true)?;
    if let Decision::Fixed(p) = decision {
        p.check(model)?;
    }
    let mut prev = vec![0.0; model.n_states()];
    let mut next = prev.clone();
    let mut out = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        backup(model, decision, &prev, alpha, &mut next);
        std::mem::swap(&mut prev, &mut next);
        out.push(ValueFunction::new(
            prev.clone(),
            ValueKind::FiniteHorizon {
                horizon: n,
                alpha,
                policy: matches!(decision, Decision::Fixed(_)),
            },
        ));
    }
    Ok(out)
}

/// `v_{N,α}`: expected total discounted cost over `N` stages.
pub fn finite_horizon_value(
    model: &MdpModel,
    decision: Decision<'_>,
    horizon: usize,
    alpha: f64,
) -> Result<ValueFunction> {
    Ok(finite_horizon_values(model, decision, horizon, alpha)?
        .pop()
        .expect("horizon >= 1"))
}

/// `ceil(log(tol(1−α)/range) / log α) + margin`, clamped to [`MAX_ITERATIONS`].
pub fn iteration_cap(alpha: f64, tol: f64, range: f64) -> usize {
    if alpha <= 0.0 || range <= 0.0 {
        return CAP_MARGIN + 1;
    }
    let ratio = tol * (1.0 - alpha) / range;
    let predicted = (ratio.ln() / alpha.ln()).ceil();
    if !predicted.is_finite() || predicted >= MAX_ITERATIONS as f64 {
        return MAX_ITERATIONS;
    }
    (predicted.max(0.0) as usize + CAP_MARGIN).min(MAX_ITERATIONS)
}

fn span_bounds(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Relative value iteration with the midpoint constant correction.
///
/// Stops when the Bellman residual bound `α·span(T v − v)/2` reaches
/// `tol(1−α)/α`, or, when that target is below the rounding floor of the
/// backups, as soon as the residual sits at the floor and below `tol`.
fn solve(model: &MdpModel, alpha: f64, tol: f64, decision: Decision<'_>) -> Result<RelativeValue> {
    check_alpha(alpha, false)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if let Decision::Fixed(p) = decision {
        p.check(model)?;
    }
    let n = model.n_states();
    let c_lo = model.min_finite_cost().unwrap_or(0.0);
    let c_hi = model.max_finite_cost().unwrap_or(0.0);
    let c_abs = c_lo.abs().max(c_hi.abs());
    let target = if alpha == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - alpha) / alpha
    };
    let cap = iteration_cap(alpha, tol, c_hi - c_lo);

    let mut h = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=cap {
        backup(model, decision, &h, alpha, &mut g);
        let (d_lo, d_hi) = g
            .iter()
            .zip(&h)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a - b), hi.max(a - b))
            });
        residual = 0.5 * alpha * (d_hi - d_lo);
        let (g_lo, g_hi) = span_bounds(&g);
        let floor = 16.0 * f64::EPSILON * (1.0 + c_abs + g_hi.abs().max(g_lo.abs()));
        let done = residual <= target || (residual <= floor && residual <= tol);
        for (hx, gx) in h.iter_mut().zip(&g) {
            *hx = gx - g_lo;
        }
        if done {
            let scaled_m = (1.0 - alpha) * g_lo + alpha * 0.5 * (d_lo + d_hi);
            let m = scaled_m / (1.0 - alpha);
            let kind = match decision {
                Decision::Optimal => ValueKind::Discounted { alpha },
                Decision::Fixed(_) => ValueKind::PolicyDiscounted { alpha },
            };
            return Ok(RelativeValue {
                alpha,
                v: ValueFunction::new(h.iter().map(|u| m + u).collect(), kind),
                m,
                scaled_m,
                u: ValueFunction::new(h, ValueKind::Relative { alpha }),
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::NotConverged {
        alpha,
        iterations: cap,
        residual,
    })
}

/// `v_α` by value iteration.
pub fn discounted_value_iteration(model: &MdpModel, alpha: f64, tol: f64) -> Result<ValueFunction> {
    Ok(solve(model, alpha, tol, Decision::Optimal)?.v)
}

/// `(m_α, u_α)` together with `v_α`.
pub fn relative_value(model: &MdpModel, alpha: f64, tol: f64) -> Result<RelativeValue> {
    solve(model, alpha, tol, Decision::Optimal)
}

/// `v_α^φ`, the fixed point of `v = c_φ + α P_φ v`, iterated to a
/// residual of [`POLICY_TOL`].
pub fn policy_discounted_value(model: &MdpModel, policy: &Policy, alpha: f64) -> Result<ValueFunction> {
    Ok(solve(model, alpha, POLICY_TOL, Decision::Fixed(policy))?.v)
}

/// Relative form of [`policy_discounted_value`]; `scaled_m + (1−α)u(x)` gives
/// `(1−α)v_α^φ(x)` without cancellation.
pub fn policy_relative_value(
    model: &MdpModel,
    policy: &Policy,
    alpha: f64,
    tol: f64,
) -> Result<RelativeValue> {
    solve(model, alpha, tol, Decision::Fixed(policy))
}
