//! Model constructors: the two single-action counterexample families on
//! `[0,1]` grids, seeded random models with strictly positive kernels, and a
//! few small fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ext_real::ExtReal;
use crate::model::{ContinuityClass, MdpModel, Metric, StateRecord};

pub const RATIONAL: &str = "rational";
pub const IRRATIONAL: &str = "irrational";

fn grid_state(i: usize, n: usize) -> StateRecord {
    StateRecord::at(vec![i as f64 / (n - 1) as f64])
}

/// Uniform grid on `[0,1]` with one action; every state jumps to `0`, and the
/// cost is `1` everywhere except at `0`.
pub fn example_indicator(grid_size: usize) -> MdpModel {
    assert!(grid_size >= 2, "grid_size must be at least 2");
    let n = grid_size;
    MdpModel::new(
        (0..n).map(|i| grid_state(i, n)).collect(),
        Metric::EuclideanOnCoord,
        vec!["a1".into()],
        (0..n)
            .map(|i| vec![ExtReal::Finite(if i == 0 { 0.0 } else { 1.0 })])
            .collect(),
        vec![vec![Some(vec![(0, 1.0)])]; n],
        ContinuityClass::Weak,
    )
}

/// `2·n_pairs + 1` grid points on `[0,1]` labeled alternately rational and
/// irrational, starting with rational at `0`. The cost is `1` on irrational
/// labels and `0` otherwise; every state jumps to `0`.
///
/// Labels decide the cost. The distance matrix is built from grid indices
/// so that the neighbor structure does not depend on float geometry.
pub fn example_dirichlet(n_pairs: usize) -> MdpModel {
    assert!(n_pairs >= 1, "n_pairs must be at least 1");
    let n = 2 * n_pairs + 1;
    let span = (n - 1) as f64;
    let states = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { RATIONAL } else { IRRATIONAL };
            grid_state(i, n).with_label(label)
        })
        .collect();
    let dist = (0..n)
        .map(|i| (0..n).map(|j| i.abs_diff(j) as f64 / span).collect())
        .collect();
    MdpModel::new(
        states,
        Metric::Matrix(dist),
        vec!["a1".into()],
        (0..n)
            .map(|i| vec![ExtReal::Finite(if i % 2 == 1 { 1.0 } else { 0.0 })])
            .collect(),
        vec![vec![Some(vec![(0, 1.0)])]; n],
        ContinuityClass::Setwise,
    )
}

/// Seeded random model: costs uniform on `[0,1]`, kernel rows with every
/// entry positive, Euclidean metric on random coordinates in `[0,1]`.
///
/// `sparsity` is the probability that a pair `(x, a)` with `a ≥ 1` is made
/// unavailable (cost `+∞`); action `0` is always available.
pub fn random_finite(n_states: usize, n_actions: usize, seed: u64, sparsity: f64) -> MdpModel {
    assert!(
        n_states >= 1 && n_actions >= 1,
        "model needs a state and an action"
    );
    assert!((0.0..1.0).contains(&sparsity), "sparsity must lie in [0,1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = (0..n_states)
        .map(|_| StateRecord::at(vec![rng.gen::<f64>()]))
        .collect();
    let mut cost = vec![vec![ExtReal::Infinite; n_actions]; n_states];
    let mut kernel = vec![vec![None; n_actions]; n_states];
    for x in 0..n_states {
        for a in 0..n_actions {
            let c: f64 = rng.gen();
            let weights: Vec<f64> = (0..n_states).map(|_| 0.05 + rng.gen::<f64>()).collect();
            let drop = a > 0 && rng.gen::<f64>() < sparsity;
            if drop {
                continue;
            }
            let total: f64 = weights.iter().sum();
            cost[x][a] = ExtReal::Finite(c);
            kernel[x][a] = Some(weights.iter().enumerate().map(|(y, w)| (y, w / total)).collect());
        }
    }
    MdpModel::new(
        states,
        Metric::EuclideanOnCoord,
        (0..n_actions).map(|a| format!("a{a}")).collect(),
        cost,
        kernel,
        ContinuityClass::Weak,
    )
}

/// Every available pair costs `value`; the kernel is a seeded positive one.
pub fn constant_cost(n_states: usize, n_actions: usize, value: f64, seed: u64) -> MdpModel {
    let base = random_finite(n_states, n_actions, seed, 0.0);
    MdpModel::new(
        base.states().to_vec(),
        base.metric().clone(),
        base.actions().to_vec(),
        vec![vec![ExtReal::Finite(value); n_actions]; n_states],
        (0..n_states)
            .map(|x| {
                (0..n_actions)
                    .map(|a| base.kernel_row(x, a).map(<[_]>::to_vec))
                    .collect()
            })
            .collect(),
        ContinuityClass::Weak,
    )
}

/// One-action chain on `{0, 1}` with `P = [[p, 1−p], [q, 1−q]]` and costs
/// `(c0, c1)`. Zero-probability entries are omitted.
pub fn two_state(p: f64, q: f64, c0: f64, c1: f64) -> MdpModel {
    let row = |stay0: f64| -> Vec<(usize, f64)> {
        [(0, stay0), (1, 1.0 - stay0)]
            .into_iter()
            .filter(|e| e.1 > 0.0)
            .collect()
    };
    MdpModel::new(
        vec![StateRecord::at(vec![0.0]), StateRecord::at(vec![1.0])],
        Metric::EuclideanOnCoord,
        vec!["a1".into()],
        vec![vec![ExtReal::Finite(c0)], vec![ExtReal::Finite(c1)]],
        vec![vec![Some(row(p))], vec![Some(row(q))]],
        ContinuityClass::Weak,
    )
}
