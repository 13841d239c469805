//! Finite metric MDP models: states with a metric, a global action set,
//! extended-real one-step costs and a sparse transition kernel.
//!
//! State-dependent action sets are induced by the cost table:
//! `A(x) = {a : c(x,a) < +∞}`. Kernel rows are only required (and only
//! ever read) for pairs with finite cost.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext_real::ExtReal;

/// Tolerance on `|Σ_y q(y|x,a) − 1|` after load-time normalization.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Triangle inequality slack, relative to the largest distance involved.
const TRIANGLE_SLACK: f64 = 1e-12;

/// Models above this size get a deterministic sample of triples instead of
/// the full cubic sweep.
const FULL_TRIANGLE_LIMIT: usize = 200;

pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl StateRecord {
    pub fn at(coord: Vec<f64>) -> Self {
        StateRecord {
            coord: Some(coord),
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// Euclidean distance between `StateRecord::coord` vectors.
    EuclideanOnCoord,
    /// Explicit `|X| × |X|` distance matrix. Takes precedence over coordinates.
    Matrix(Vec<Vec<f64>>),
}

/// Declared continuity class of the kernel. Recorded, never verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContinuityClass {
    #[serde(rename = "W*")]
    Weak,
    #[serde(rename = "S*")]
    Setwise,
    #[serde(rename = "none")]
    Unspecified,
}

impl fmt::Display for ContinuityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContinuityClass::Weak => "W*",
            ContinuityClass::Setwise => "S*",
            ContinuityClass::Unspecified => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    states: Vec<StateRecord>,
    metric: Metric,
    actions: Vec<String>,
    cost: Vec<Vec<ExtReal>>,
    kernel: Vec<Vec<Option<SparseRow>>>,
    continuity_class: ContinuityClass,
}

impl MdpModel {
    /// Assembles a model without checking it; call [`validate_model`] before
    /// handing it to a solver.
    ///
    /// `kernel[x][a]` may be `None` for pairs with infinite cost. Duplicate
    /// targets within a row are merged.
    pub fn new(
        states: Vec<StateRecord>,
        metric: Metric,
        actions: Vec<String>,
        cost: Vec<Vec<ExtReal>>,
        kernel: Vec<Vec<Option<SparseRow>>>,
        continuity_class: ContinuityClass,
    ) -> Self {
        let kernel = kernel
            .into_iter()
            .map(|per_state| {
                per_state
                    .into_iter()
                    .map(|row| row.map(merge_duplicates))
                    .collect()
            })
            .collect();
        MdpModel {
            states,
            metric,
            actions,
            cost,
            kernel,
            continuity_class,
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> &[StateRecord] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn continuity_class(&self) -> ContinuityClass {
        self.continuity_class
    }

    pub fn cost(&self, x: usize, a: usize) -> ExtReal {
        self.cost[x][a]
    }

    pub fn cost_table(&self) -> &[Vec<ExtReal>] {
        &self.cost
    }

    /// Finite cost of an available pair. Panics on an unavailable pair.
    pub fn finite_cost(&self, x: usize, a: usize) -> f64 {
        self.cost[x][a]
            .finite()
            .unwrap_or_else(|| panic!("action {a} is not available at state {x}"))
    }

    pub fn kernel_row(&self, x: usize, a: usize) -> Option<&[(usize, f64)]> {
        self.kernel[x][a].as_deref()
    }

    pub(crate) fn kernel_rows(&self) -> &[Vec<Option<SparseRow>>] {
        &self.kernel
    }

    pub(crate) fn kernel_rows_mut(&mut self) -> &mut [Vec<Option<SparseRow>>] {
        &mut self.kernel
    }

    /// Row of an available pair. Panics if the row is absent, which a
    /// validated model rules out.
    pub fn row(&self, x: usize, a: usize) -> &[(usize, f64)] {
        self.kernel[x][a]
            .as_deref()
            .unwrap_or_else(|| panic!("missing kernel row for ({x},{a})"))
    }

    /// `Σ_y f(y) q(y|x,a)` over the sparse row, in stored order.
    pub fn expect(&self, x: usize, a: usize, f: &[f64]) -> f64 {
        self.row(x, a).iter().map(|&(y, p)| p * f[y]).sum()
    }

    /// Smallest finite cost, `None` if every entry is infinite.
    pub fn min_finite_cost(&self) -> Option<f64> {
        ExtReal::min_of(self.cost.iter().flatten().copied()).finite()
    }

    pub fn max_finite_cost(&self) -> Option<f64> {
        self.cost
            .iter()
            .flatten()
            .filter_map(|c| c.finite())
            .reduce(f64::max)
    }

    /// Distance between two states. Missing coordinates under the Euclidean
    /// metric are reported by validation; here they yield `+∞` off the diagonal.
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        match &self.metric {
            Metric::Matrix(d) => d[x][y],
            Metric::EuclideanOnCoord => {
                if x == y {
                    return 0.0;
                }
                match (&self.states[x].coord, &self.states[y].coord) {
                    (Some(p), Some(q)) if p.len() == q.len() => p
                        .iter()
                        .zip(q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt(),
                    _ => f64::INFINITY,
                }
            }
        }
    }

    /// Sorted distinct positive pairwise distances.
    pub fn distinct_distances(&self) -> Vec<f64> {
        let n = self.n_states();
        let mut d: Vec<f64> = (0..n)
            .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
            .map(|(x, y)| self.distance(x, y))
            .filter(|d| *d > 0.0 && d.is_finite())
            .collect();
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }

    pub fn diameter(&self) -> f64 {
        self.distinct_distances().last().copied().unwrap_or(0.0)
    }
}

fn merge_duplicates(row: SparseRow) -> SparseRow {
    let mut merged: SparseRow = Vec::with_capacity(row.len());
    for (y, p) in row {
        match merged.iter_mut().find(|(z, _)| *z == y) {
            Some(entry) => entry.1 += p,
            None => merged.push((y, p)),
        }
    }
    merged
}

/// Actions with finite cost at `x`, in index order.
pub fn effective_action_set(model: &MdpModel, x: usize) -> Vec<usize> {
    (0..model.n_actions())
        .filter(|&a| model.cost(x, a).is_finite())
        .collect()
}

/// Open ball `{y : ρ(y,x) < radius}`; always contains `x`.
pub fn ball(model: &MdpModel, x: usize, radius: f64) -> Result<Vec<usize>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ball radius must be positive, got {radius}"
        )));
    }
    if x >= model.n_states() {
        return Err(Error::InvalidArgument(format!("state {x} out of range")));
    }
    Ok((0..model.n_states())
        .filter(|&y| y == x || model.distance(x, y) < radius)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoStates,
    NoActions,
    CostShape {
        state: Option<usize>,
    },
    KernelShape {
        state: Option<usize>,
    },
    InvalidCost {
        state: usize,
        action: usize,
    },
    CostNotBoundedBelow,
    EmptyActionSet {
        state: usize,
    },
    MissingKernelRow {
        state: usize,
        action: usize,
    },
    KernelTarget {
        state: usize,
        action: usize,
        target: usize,
    },
    NegativeProbability {
        state: usize,
        action: usize,
    },
    RowStochasticity {
        state: usize,
        action: usize,
        sum: f64,
    },
    MissingCoordinates {
        state: usize,
    },
    MetricShape,
    MetricNegative {
        x: usize,
        y: usize,
    },
    MetricDiagonal {
        x: usize,
    },
    MetricAsymmetric {
        x: usize,
        y: usize,
    },
    MetricTriangle {
        x: usize,
        y: usize,
        z: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoStates => write!(f, "state set is empty"),
            NoActions => write!(f, "action set is empty"),
            CostShape { state: None } => write!(f, "cost table has wrong number of rows"),
            CostShape { state: Some(x) } => write!(f, "cost row {x} has wrong length"),
            KernelShape { state: None } => write!(f, "kernel has wrong number of rows"),
            KernelShape { state: Some(x) } => write!(f, "kernel row {x} has wrong length"),
            InvalidCost { state, action } => {
                write!(f, "cost ({state},{action}) is NaN or -inf")
            }
            CostNotBoundedBelow => write!(f, "no finite cost entry; cost is not bounded below"),
            EmptyActionSet { state } => write!(f, "empty action set A({state})"),
            MissingKernelRow { state, action } => {
                write!(f, "missing kernel row ({state},{action})")
            }
            KernelTarget {
                state,
                action,
                target,
            } => write!(f, "kernel row ({state},{action}) targets unknown state {target}"),
            NegativeProbability { state, action } => {
                write!(f, "negative or non-finite probability in ({state},{action})")
            }
            RowStochasticity { state, action, sum } => {
                write!(f, "row-stochasticity ({state},{action}): sum = {sum}")
            }
            MissingCoordinates { state } => {
                write!(f, "euclidean metric but state {state} has no usable coordinates")
            }
            MetricShape => write!(f, "distance matrix has wrong shape"),
            MetricNegative { x, y } => write!(f, "negative or non-finite distance ({x},{y})"),
            MetricDiagonal { x } => write!(f, "nonzero self-distance at {x}"),
            MetricAsymmetric { x, y } => write!(f, "asymmetric distance ({x},{y})"),
            MetricTriangle { x, y, z } => {
                write!(f, "triangle inequality fails for ({x},{y},{z})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Largest `|Σ q − 1|` seen before load-time normalization (0 for models
    /// built in memory).
    pub normalization_deviation: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidModel(msgs.join("; ")))
        }
    }
}

/// Reports every violated structural invariant; the model is untouched.
pub fn validate_model(model: &MdpModel) -> ValidationReport {
    let mut v = Vec::new();
    let n = model.n_states();
    let k = model.n_actions();
    if n == 0 {
        v.push(Violation::NoStates);
    }
    if k == 0 {
        v.push(Violation::NoActions);
    }
    if model.cost.len() != n {
        v.push(Violation::CostShape { state: None });
    }
    if model.kernel.len() != n {
        v.push(Violation::KernelShape { state: None });
    }
    if !v.is_empty() {
        return ValidationReport {
            violations: v,
            normalization_deviation: 0.0,
        };
    }

    let mut shape_ok = true;
    for x in 0..n {
        if model.cost[x].len() != k {
            v.push(Violation::CostShape { state: Some(x) });
            shape_ok = false;
        }
        if model.kernel[x].len() != k {
            v.push(Violation::KernelShape { state: Some(x) });
            shape_ok = false;
        }
    }
    if shape_ok {
        check_costs_and_kernel(model, &mut v);
    }
    check_metric(model, &mut v);

    ValidationReport {
        violations: v,
        normalization_deviation: 0.0,
    }
}

fn check_costs_and_kernel(model: &MdpModel, v: &mut Vec<Violation>) {
    let n = model.n_states();
    let mut any_finite = false;
    for x in 0..n {
        let mut available = 0;
        for a in 0..model.n_actions() {
            match model.cost[x][a] {
                ExtReal::Finite(c) if c.is_nan() || c == f64::NEG_INFINITY => {
                    v.push(Violation::InvalidCost { state: x, action: a });
                    continue;
                }
                // A finite entry that overflowed to +inf is treated as unavailable.
                ExtReal::Finite(c) if c == f64::INFINITY => continue,
                ExtReal::Finite(_) => {}
                ExtReal::Infinite => continue,
            }
            any_finite = true;
            available += 1;
            let Some(row) = &model.kernel[x][a] else {
                v.push(Violation::MissingKernelRow { state: x, action: a });
                continue;
            };
            let mut sum = 0.0;
            let mut bad_entry = false;
            for &(y, p) in row {
                if y >= n {
                    v.push(Violation::KernelTarget {
                        state: x,
                        action: a,
                        target: y,
                    });
                    bad_entry = true;
                }
                if !(p >= 0.0) || !p.is_finite() {
                    bad_entry = true;
                    v.push(Violation::NegativeProbability { state: x, action: a });
                }
                sum += p;
            }
            if !bad_entry && (sum - 1.0).abs() > STOCHASTIC_TOL {
                v.push(Violation::RowStochasticity {
                    state: x,
                    action: a,
                    sum,
                });
            }
        }
        if available == 0 {
            v.push(Violation::EmptyActionSet { state: x });
        }
    }
    if !any_finite {
        v.push(Violation::CostNotBoundedBelow);
    }
}

fn check_metric(model: &MdpModel, v: &mut Vec<Violation>) {
    let n = model.n_states();
    match &model.metric {
        Metric::EuclideanOnCoord => {
            let dim = model.states.iter().find_map(|s| s.coord.as_ref().map(Vec::len));
            for (x, s) in model.states.iter().enumerate() {
                let ok = match (&s.coord, dim) {
                    (Some(c), Some(d)) => c.len() == d && c.iter().all(|t| t.is_finite()),
                    _ => false,
                };
                if !ok {
                    v.push(Violation::MissingCoordinates { state: x });
                }
            }
            // Euclidean distance is a metric by construction.
        }
        Metric::Matrix(d) => {
            if d.len() != n || d.iter().any(|row| row.len() != n) {
                v.push(Violation::MetricShape);
                return;
            }
            for x in 0..n {
                if d[x][x] != 0.0 {
                    v.push(Violation::MetricDiagonal { x });
                }
                for y in 0..n {
                    if !(d[x][y] >= 0.0) || !d[x][y].is_finite() {
                        v.push(Violation::MetricNegative { x, y });
                    }
                    if y > x && d[x][y] != d[y][x] {
                        v.push(Violation::MetricAsymmetric { x, y });
                    }
                }
            }
            for (x, y, z) in triples(n) {
                let lhs = d[x][z];
                let rhs = d[x][y] + d[y][z];
                if lhs > rhs + TRIANGLE_SLACK * lhs.max(1.0) {
                    v.push(Violation::MetricTriangle { x, y, z });
                }
            }
        }
    }
}

/// All triples for small models, otherwise a fixed stride sample of about
/// `FULL_TRIANGLE_LIMIT³` triples.
fn triples(n: usize) -> Box<dyn Iterator<Item = (usize, usize, usize)>> {
    if n <= FULL_TRIANGLE_LIMIT {
        Box::new((0..n).flat_map(move |x| (0..n).flat_map(move |y| (0..n).map(move |z| (x, y, z)))))
    } else {
        let stride = n.div_ceil(FULL_TRIANGLE_LIMIT);
        Box::new((0..n).step_by(stride).flat_map(move |x| {
            (0..n)
                .step_by(stride)
                .flat_map(move |y| (0..n).step_by(stride).map(move |z| (x, y, z)))
        }))
    }
}

/// Deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub action_of: Vec<usize>,
}

impl Policy {
    pub fn new(action_of: Vec<usize>) -> Self {
        Policy { action_of }
    }

    pub fn action(&self, x: usize) -> usize {
        self.action_of[x]
    }

    /// Checks length and `φ(x) ∈ A(x)`.
    pub fn check(&self, model: &MdpModel) -> Result<()> {
        if self.action_of.len() != model.n_states() {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} states, model has {}",
                self.action_of.len(),
                model.n_states()
            )));
        }
        for (x, &a) in self.action_of.iter().enumerate() {
            if a >= model.n_actions() || !model.cost(x, a).is_finite() {
                return Err(Error::InvalidPolicy(format!("action {a} is not in A({x})")));
            }
        }
        Ok(())
    }
}

/// Which quantity a value vector holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "quantity", rename_all = "snake_case")]
pub enum ValueKind {
    /// `v_α`.
    Discounted {
        #[serde(with = "crate::numfmt")]
        alpha: f64,
    },
    /// `v_{N,α}` (optimal or for a fixed policy).
    FiniteHorizon {
        horizon: usize,
        #[serde(with = "crate::numfmt")]
        alpha: f64,
        policy: bool,
    },
    /// `v_α^φ`.
    PolicyDiscounted {
        #[serde(with = "crate::numfmt")]
        alpha: f64,
    },
    /// `u_α = v_α − m_α`.
    Relative {
        #[serde(with = "crate::numfmt")]
        alpha: f64,
    },
    /// Limit relative value from one of the two liminf constructions.
    Limit {
        construction: Construction,
    },
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// `u(x) = liminf_n u_{α_n}(x)`.
    Pointwise,
    /// `u(x) = liminf_{n→∞, y→x} u_{α_n}(y)`.
    Weak,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Construction::Pointwise => "pointwise",
            Construction::Weak => "weak",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    #[serde(with = "crate::numfmt::vec")]
    pub values: Vec<f64>,
    pub kind: ValueKind,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>, kind: ValueKind) -> Self {
        ValueFunction { values, kind }
    }

    pub fn supplied(values: Vec<f64>) -> Self {
        ValueFunction::new(values, ValueKind::Supplied)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for ValueFunction {
    type Output = f64;

    fn index(&self, x: usize) -> &f64 {
        &self.values[x]
    }
}
