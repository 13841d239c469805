//! Monte Carlo estimates of the average cost per unit time of a stationary
//! policy, and the Tauberian cross-check against discounted values.
//!
//! Streams come from ChaCha8; replication `i` is seeded with
//! `seed ⊕ splitmix64(i)`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discounted::policy_relative_value;
use crate::error::{Error, Result};
use crate::model::{MdpModel, Policy};
use crate::numfmt::fmt17;
use crate::schedule::DiscountSchedule;
use crate::verify::{Check, CheckKind};

/// Solver tolerance for the discounted side of the Tauberian check.
pub const TAUBERIAN_SOLVER_TOL: f64 = 1e-10;

/// Absolute slack added to three standard errors.
pub const TAUBERIAN_SLACK: f64 = 1e-6;

pub fn splitmix64(i: u64) -> u64 {
    let mut z = i.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replication_seed(seed: u64, i: usize) -> u64 {
    seed ^ splitmix64(i as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    #[serde(with = "crate::numfmt")]
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub x0: usize,
    pub seed: u64,
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// One `step state action cost` line per step.
    pub fn write_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# x0 = {} seed = {}", self.x0, self.seed)?;
        for (t, s) in self.steps.iter().enumerate() {
            writeln!(w, "{t} {} {} {}", s.state, s.action, fmt17(s.cost))?;
        }
        Ok(())
    }
}

fn sample_next(rng: &mut ChaCha8Rng, row: &[(usize, f64)]) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for &(y, p) in row {
        acc += p;
        if r < acc {
            return y;
        }
    }
    row.last().expect("kernel rows are nonempty").0
}

fn check_inputs(model: &MdpModel, policy: &Policy, x0: usize, horizon: usize) -> Result<()> {
    policy.check(model)?;
    if x0 >= model.n_states() {
        return Err(Error::InvalidArgument(format!("initial state {x0} out of range")));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    Ok(())
}

/// Walks `horizon` steps from `x0`, calling `visit(t, state, action, cost)`.
fn walk(
    model: &MdpModel,
    policy: &Policy,
    x0: usize,
    horizon: usize,
    seed: u64,
    mut visit: impl FnMut(usize, usize, usize, f64),
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0;
    for t in 0..horizon {
        let a = policy.action(x);
        visit(t, x, a, model.finite_cost(x, a));
        x = sample_next(&mut rng, model.row(x, a));
    }
}

pub fn simulate_trajectory(
    model: &MdpModel,
    policy: &Policy,
    x0: usize,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    check_inputs(model, policy, x0, horizon)?;
    let mut steps = Vec::with_capacity(horizon);
    walk(model, policy, x0, horizon, seed, |_, state, action, cost| {
        steps.push(Step { state, action, cost })
    });
    Ok(Trajectory { x0, seed, steps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageCostEstimate {
    pub x0: usize,
    pub horizon: usize,
    pub replications: usize,
    pub seed: u64,
    /// `(1/N) Σ_{t<N} c(x_t, a_t)` per replication.
    #[serde(with = "crate::numfmt::vec")]
    pub per_replication: Vec<f64>,
    /// Max of the Cesàro averages over the final 10% of checkpoints.
    #[serde(with = "crate::numfmt::vec")]
    pub limsup_proxy: Vec<f64>,
    #[serde(with = "crate::numfmt")]
    pub mean: f64,
    /// Standard error of `mean`; zero for a single replication.
    #[serde(with = "crate::numfmt")]
    pub std_error: f64,
    #[serde(with = "crate::numfmt")]
    pub limsup_mean: f64,
}

/// Checkpoints every `horizon/100` steps (at least one), always ending at
/// `horizon`.
fn checkpoints(horizon: usize) -> Vec<usize> {
    let stride = (horizon / 100).max(1);
    let mut cps: Vec<usize> = (1..).map(|k| k * stride).take_while(|&t| t <= horizon).collect();
    if cps.last() != Some(&horizon) {
        cps.push(horizon);
    }
    cps
}

fn one_replication(model: &MdpModel, policy: &Policy, x0: usize, horizon: usize, seed: u64) -> (f64, f64) {
    let cps = checkpoints(horizon);
    let tail_from = cps.len() - cps.len().div_ceil(10);
    let mut next = 0;
    let mut total = 0.0;
    let mut proxy = f64::NEG_INFINITY;
    walk(model, policy, x0, horizon, seed, |t, _, _, c| {
        total += c;
        if t + 1 == cps[next] {
            if next >= tail_from {
                proxy = proxy.max(total / (t + 1) as f64);
            }
            next += 1;
        }
    });
    (total / horizon as f64, proxy)
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

pub fn simulate_average_cost(
    model: &MdpModel,
    policy: &Policy,
    x0: usize,
    horizon: usize,
    replications: usize,
    seed: u64,
) -> Result<AverageCostEstimate> {
    check_inputs(model, policy, x0, horizon)?;
    if replications == 0 {
        return Err(Error::InvalidArgument("replications must be at least 1".into()));
    }
    let runs: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map(|i| one_replication(model, policy, x0, horizon, replication_seed(seed, i)))
        .collect();
    let per_replication: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let limsup_proxy: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (mean, std_error) = mean_and_se(&per_replication);
    let limsup_mean = limsup_proxy.iter().sum::<f64>() / replications as f64;
    Ok(AverageCostEstimate {
        x0,
        horizon,
        replications,
        seed,
        per_replication,
        limsup_proxy,
        mean,
        std_error,
        limsup_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauberianResult {
    pub check: Check,
    pub estimate: AverageCostEstimate,
    /// `(1−α_n)v^π_{α_n}(x0)` over the tail window.
    #[serde(with = "crate::numfmt::vec")]
    pub scaled_values: Vec<f64>,
}

/// `(1−α_n)v^π_{α_n}(x0) ≤ ŵ^π(x0) + 3·se + 1e−6` over the tail window of
/// `schedule`.
pub fn tauberian_check(
    model: &MdpModel,
    policy: &Policy,
    x0: usize,
    schedule: &DiscountSchedule,
    horizon: usize,
    replications: usize,
    seed: u64,
) -> Result<TauberianResult> {
    let estimate = simulate_average_cost(model, policy, x0, horizon, replications, seed)?;
    let alphas = schedule.values();
    let start = alphas.len() - schedule.default_tail_window();
    let scaled_values: Vec<f64> = alphas[start..]
        .par_iter()
        .map(|&a| {
            policy_relative_value(model, policy, a, TAUBERIAN_SOLVER_TOL)
                .map(|rv| rv.scaled_m + (1.0 - a) * rv.u[x0])
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let tol = 3.0 * estimate.std_error + TAUBERIAN_SLACK;
    let worst = scaled_values
        .iter()
        .map(|v| v - estimate.mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let check = Check::measured("tauberian", CheckKind::Residual, worst, tol)
        .note(format!(
            "simulated w = {} +- {} (N = {horizon}, {replications} replications, seed {seed})",
            fmt17(estimate.mean),
            fmt17(estimate.std_error)
        ))
        .note(format!(
            "alpha over indices {start}..={} of {schedule}",
            alphas.len() - 1
        ));
    Ok(TauberianResult {
        check,
        estimate,
        scaled_values,
    })
}
