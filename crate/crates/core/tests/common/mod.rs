//! Dense linear-algebra oracles, independent of the library's solvers.
#![allow(dead_code)]

use avgcost::{effective_action_set, MdpModel, Policy};
use nalgebra::{DMatrix, DVector};

/// Every deterministic stationary policy over the available actions.
pub fn all_policies(model: &MdpModel) -> Vec<Policy> {
    let sets: Vec<Vec<usize>> = (0..model.n_states())
        .map(|x| effective_action_set(model, x))
        .collect();
    let mut out = vec![vec![]];
    for s in &sets {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                s.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(Policy::new).collect()
}

pub fn transition(model: &MdpModel, policy: &Policy) -> DMatrix<f64> {
    let n = model.n_states();
    let mut p = DMatrix::zeros(n, n);
    for x in 0..n {
        for &(y, q) in model.row(x, policy.action(x)) {
            p[(x, y)] += q;
        }
    }
    p
}

pub fn cost(model: &MdpModel, policy: &Policy) -> DVector<f64> {
    DVector::from_iterator(
        model.n_states(),
        (0..model.n_states()).map(|x| model.finite_cost(x, policy.action(x))),
    )
}

/// `(I − αP_φ)^{-1} c_φ`.
pub fn policy_value(model: &MdpModel, policy: &Policy, alpha: f64) -> DVector<f64> {
    let n = model.n_states();
    let a = DMatrix::identity(n, n) - transition(model, policy) * alpha;
    a.lu()
        .solve(&cost(model, policy))
        .expect("I - alpha P is invertible")
}

/// `v_α(x) = min_φ v_α^φ(x)` by enumeration.
pub fn discounted_optimum(model: &MdpModel, alpha: f64) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; model.n_states()];
    for p in all_policies(model) {
        let v = policy_value(model, &p, alpha);
        for x in 0..best.len() {
            best[x] = best[x].min(v[x]);
        }
    }
    best
}

/// Stationary distribution of a unichain `P`.
pub fn stationary(p: &DMatrix<f64>) -> DVector<f64> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    a.lu().solve(&b).expect("unichain")
}

pub struct AverageOracle {
    pub w_star: f64,
    pub policy: Policy,
    /// Relative value `h − min h` of the optimal policy.
    pub u: Vec<f64>,
}

/// Enumerates policies, averages each against its stationary distribution.
pub fn average_optimum(model: &MdpModel) -> AverageOracle {
    let mut best: Option<(f64, Policy)> = None;
    for p in all_policies(model) {
        let w = stationary(&transition(model, &p)).dot(&cost(model, &p));
        if best.as_ref().is_none_or(|b| w < b.0 - 1e-13) {
            best = Some((w, p));
        }
    }
    let (w_star, policy) = best.unwrap();
    // h = c − w + P h with h(0) = 0.
    let n = model.n_states();
    let mut a = DMatrix::identity(n, n) - transition(model, &policy);
    let mut b = cost(model, &policy).add_scalar(-w_star);
    for j in 0..n {
        a[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
    }
    b[0] = 0.0;
    let h = a.lu().solve(&b).expect("bias system");
    let lo = h.min();
    AverageOracle {
        w_star,
        policy,
        u: h.iter().map(|v| v - lo).collect(),
    }
}

/// Long-run relative value iteration on the undiscounted operator with
/// aperiodicity damping `h ← (h + T h)/2`.
pub fn relative_value_iteration(model: &MdpModel, sweeps: usize) -> (f64, Vec<f64>) {
    let n = model.n_states();
    let mut h = vec![0.0; n];
    let mut gain = 0.0;
    for _ in 0..sweeps {
        let t: Vec<f64> = (0..n)
            .map(|x| {
                effective_action_set(model, x)
                    .into_iter()
                    .map(|a| {
                        model.finite_cost(x, a) + model.row(x, a).iter().map(|&(y, q)| q * h[y]).sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        gain = t[0] - h[0];
        let next: Vec<f64> = (0..n).map(|x| 0.5 * (h[x] + t[x] - gain)).collect();
        let lo = next.iter().copied().fold(f64::INFINITY, f64::min);
        h = next.iter().map(|v| v - lo).collect();
    }
    (gain, h)
}

/// `v_{N,α}^φ(x)` by summing over every sample path.
pub fn path_sum(model: &MdpModel, policy: &Policy, x: usize, horizon: usize, alpha: f64) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    let a = policy.action(x);
    model.finite_cost(x, a)
        + alpha
            * model
                .row(x, a)
                .iter()
                .map(|&(y, q)| q * path_sum(model, policy, y, horizon - 1, alpha))
                .sum::<f64>()
}

/// `max over (m, R) in the radius list of min_{ρ(x,y)<R} min_{n≥m} f_n(y)`,
/// with every ball and every radius evaluated separately.
pub fn brute_weak(model: &MdpModel, family: &[Vec<f64>], m_max: usize, radii: &[f64]) -> Vec<f64> {
    let n = model.n_states();
    (0..n)
        .map(|x| {
            let mut best = f64::NEG_INFINITY;
            for m in 0..=m_max {
                for &r in radii {
                    let mut lo = f64::INFINITY;
                    for y in 0..n {
                        if model.distance(x, y) < r || y == x {
                            for f in &family[m..] {
                                lo = lo.min(f[y]);
                            }
                        }
                    }
                    best = best.max(lo);
                }
            }
            best
        })
        .collect()
}
