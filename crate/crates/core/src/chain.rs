//! Exact long-run average cost of a deterministic stationary policy on a
//! finite model, via the recurrent-class structure of its Markov chain.

use serde::{Deserialize, Serialize};

use crate::model::{MdpModel, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageCost {
    /// `w^φ(x)` for every state.
    #[serde(with = "crate::numfmt::vec")]
    pub per_state: Vec<f64>,
    pub recurrent_classes: Vec<Vec<usize>>,
}

impl AverageCost {
    pub fn is_unichain(&self) -> bool {
        self.recurrent_classes.len() == 1
    }

    /// `min_x w^φ(x)`.
    pub fn min(&self) -> f64 {
        self.per_state.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Dense transition matrix of the chain induced by `policy`.
pub fn policy_matrix(model: &MdpModel, policy: &Policy) -> Vec<Vec<f64>> {
    let n = model.n_states();
    let mut p = vec![vec![0.0; n]; n];
    for (x, row) in p.iter_mut().enumerate() {
        for &(y, q) in model.row(x, policy.action(x)) {
            row[y] += q;
        }
    }
    p
}

fn reachable(p: &[Vec<f64>], from: usize) -> Vec<bool> {
    let n = p.len();
    let mut seen = vec![false; n];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(x) = stack.pop() {
        for y in 0..n {
            if p[x][y] > 0.0 && !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen
}

/// Closed communicating classes, each sorted, ordered by smallest member.
pub fn recurrent_classes(p: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = p.len();
    let reach: Vec<Vec<bool>> = (0..n).map(|x| reachable(p, x)).collect();
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for x in 0..n {
        if assigned[x] {
            continue;
        }
        let closed = (0..n).all(|y| !reach[x][y] || reach[y][x]);
        if closed {
            let class: Vec<usize> = (0..n).filter(|&y| reach[x][y]).collect();
            for &y in &class {
                assigned[y] = true;
            }
            classes.push(class);
        }
    }
    classes
}

/// Gaussian elimination with partial pivoting. `None` if singular.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Stationary distribution of `p` restricted to a closed class.
pub fn stationary_on_class(p: &[Vec<f64>], class: &[usize]) -> Vec<f64> {
    let k = class.len();
    if k == 1 {
        return vec![1.0];
    }
    // π (P_C − I) = 0 transposed, last equation replaced by Σπ = 1.
    let mut a = vec![vec![0.0; k]; k];
    for (i, &yi) in class.iter().enumerate() {
        for (j, &xj) in class.iter().enumerate() {
            a[i][j] = p[xj][yi] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[k - 1] = vec![1.0; k];
    let mut b = vec![0.0; k];
    b[k - 1] = 1.0;
    solve_dense(a, b).expect("a closed class has a unique stationary distribution")
}

/// Exact `w^φ(x)` for all states: stationary averages on recurrent classes,
/// absorption-weighted averages on transient states.
pub fn average_cost(model: &MdpModel, policy: &Policy) -> AverageCost {
    let n = model.n_states();
    let p = policy_matrix(model, policy);
    let cost: Vec<f64> = (0..n).map(|x| model.finite_cost(x, policy.action(x))).collect();
    let classes = recurrent_classes(&p);
    let mut w = vec![f64::NAN; n];
    let mut recurrent = vec![false; n];
    for class in &classes {
        let pi = stationary_on_class(&p, class);
        let gain: f64 = class.iter().zip(&pi).map(|(&x, q)| q * cost[x]).sum();
        for &x in class {
            w[x] = gain;
            recurrent[x] = true;
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&x| !recurrent[x]).collect();
    if !transient.is_empty() {
        // (I − Q) w_T = P_{T,R} w_R.
        let k = transient.len();
        let mut a = vec![vec![0.0; k]; k];
        let mut b = vec![0.0; k];
        for (i, &t) in transient.iter().enumerate() {
            for (j, &s) in transient.iter().enumerate() {
                a[i][j] = if i == j { 1.0 } else { 0.0 } - p[t][s];
            }
            b[i] = (0..n).filter(|&y| recurrent[y]).map(|y| p[t][y] * w[y]).sum();
        }
        let wt = solve_dense(a, b).expect("transient block is invertible");
        for (&t, v) in transient.iter().zip(wt) {
            w[t] = v;
        }
    }
    AverageCost {
        per_state: w,
        recurrent_classes: classes,
    }
}
