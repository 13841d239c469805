//! JSON model file format.
//!
//! ```json
//! {
//!   "states": [{"id": 0, "coord": [0.0], "label": "rational"}],
//!   "metric": "euclidean-on-coord",
//!   "actions": ["a1"],
//!   "cost": [[0, "inf"]],
//!   "kernel": {"0,0": [{"state": 0, "prob": 1.0}]},
//!   "continuity_class": "W*"
//! }
//! ```
//!
//! `metric` is either `"euclidean-on-coord"` or `{"matrix": [[...]]}`.
//! Rows whose sum is within [`NORMALIZE_LIMIT`] of one are rescaled at
//! load time; the largest deviation seen is kept in the validation report.
//! Rows further off are loaded as-is so validation flags them.

use std::collections::HashMap;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ext_real::ExtReal;
use crate::model::{
    validate_model, ContinuityClass, MdpModel, Metric, SparseRow, StateRecord, ValidationReport,
    STOCHASTIC_TOL,
};
use crate::numfmt;

/// Largest row-sum deviation that load-time normalization absorbs.
pub const NORMALIZE_LIMIT: f64 = 1e-9;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    states: Vec<RawState>,
    metric: RawMetric,
    actions: Vec<String>,
    cost: Vec<Vec<RawCost>>,
    kernel: HashMap<String, Vec<RawEntry>>,
    continuity_class: ContinuityClass,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    #[serde(default)]
    id: Option<usize>,
    #[serde(default)]
    coord: Option<Vec<f64>>,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawMetric {
    Named(String),
    Matrix {
        #[serde(with = "numfmt::vec2")]
        matrix: Vec<Vec<f64>>,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawCost {
    Num(f64),
    Token(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    state: usize,
    #[serde(with = "numfmt")]
    prob: f64,
}

fn parse_pair(key: &str) -> Option<(usize, usize)> {
    let (x, a) = key.split_once(',')?;
    Some((x.trim().parse().ok()?, a.trim().parse().ok()?))
}

/// Parses a model document and validates it.
///
/// Syntax and schema errors are returned as `Err` (serde's message carries
/// line and column); structural defects come back in the report.
pub fn parse_model(text: &str) -> Result<(MdpModel, ValidationReport)> {
    let raw: RawModel = serde_json::from_str(text)?;
    let n = raw.states.len();
    let k = raw.actions.len();

    let mut states = Vec::with_capacity(n);
    for (i, s) in raw.states.into_iter().enumerate() {
        if let Some(id) = s.id {
            if id != i {
                return Err(Error::Parse(format!(
                    "state at position {i} declares id {id}; ids must match positions"
                )));
            }
        }
        states.push(StateRecord {
            coord: s.coord,
            label: s.label,
        });
    }

    let metric = match raw.metric {
        RawMetric::Named(name) if name == "euclidean-on-coord" => Metric::EuclideanOnCoord,
        RawMetric::Named(name) => {
            return Err(Error::Parse(format!("unknown metric {name:?}")));
        }
        RawMetric::Matrix { matrix } => Metric::Matrix(matrix),
    };

    let mut cost = Vec::with_capacity(raw.cost.len());
    for (x, row) in raw.cost.into_iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (a, c) in row.into_iter().enumerate() {
            out.push(match c {
                RawCost::Num(v) => ExtReal::Finite(v),
                RawCost::Token(t) => match numfmt::parse_token(&t) {
                    Some(v) if v == f64::INFINITY => ExtReal::Infinite,
                    Some(v) => ExtReal::Finite(v),
                    None => {
                        return Err(Error::Parse(format!("cost ({x},{a}): bad entry {t:?}")));
                    }
                },
            });
        }
        cost.push(out);
    }

    let mut kernel: Vec<Vec<Option<SparseRow>>> = vec![vec![None; k]; n];
    for (key, entries) in raw.kernel {
        let (x, a) =
            parse_pair(&key).ok_or_else(|| Error::Parse(format!("kernel key {key:?} is not \"x,a\"")))?;
        if x >= n || a >= k {
            return Err(Error::Parse(format!("kernel key {key:?} is out of range")));
        }
        kernel[x][a] = Some(entries.into_iter().map(|e| (e.state, e.prob)).collect());
    }

    let mut model = MdpModel::new(states, metric, raw.actions, cost, kernel, raw.continuity_class);
    let deviation = normalize_rows(&mut model);
    let mut report = validate_model(&model);
    report.normalization_deviation = deviation;
    Ok((model, report))
}

fn normalize_rows(model: &mut MdpModel) -> f64 {
    let mut worst: f64 = 0.0;
    for per_state in model.kernel_rows_mut() {
        for row in per_state.iter_mut().flatten() {
            let sum: f64 = row.iter().map(|e| e.1).sum();
            let dev = (sum - 1.0).abs();
            if dev.is_finite() {
                worst = worst.max(dev);
            }
            if dev > STOCHASTIC_TOL && dev <= NORMALIZE_LIMIT && row.iter().all(|e| e.1 >= 0.0) {
                for e in row.iter_mut() {
                    e.1 /= sum;
                }
            }
        }
    }
    worst
}

pub fn read_model(path: &std::path::Path) -> Result<(MdpModel, ValidationReport)> {
    parse_model(&std::fs::read_to_string(path)?)
}

struct ModelDoc<'a>(&'a MdpModel);

struct StatesDoc<'a>(&'a [StateRecord]);
struct CostDoc<'a>(&'a [Vec<ExtReal>]);
struct KernelDoc<'a>(&'a MdpModel);
struct MetricDoc<'a>(&'a Metric);
struct RowDoc<'a>(&'a [(usize, f64)]);

#[derive(Serialize)]
struct StateOut<'a> {
    id: usize,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_vec")]
    coord: &'a Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: &'a Option<String>,
}

fn opt_vec<S: Serializer>(v: &&Option<Vec<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(xs) => numfmt::vec::serialize(xs, s),
        None => s.serialize_none(),
    }
}

#[derive(Serialize)]
struct EntryOut {
    state: usize,
    #[serde(with = "numfmt")]
    prob: f64,
}

impl Serialize for ModelDoc<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m = self.0;
        let mut map = s.serialize_map(Some(6))?;
        map.serialize_entry("states", &StatesDoc(m.states()))?;
        map.serialize_entry("metric", &MetricDoc(m.metric()))?;
        map.serialize_entry("actions", m.actions())?;
        map.serialize_entry("cost", &CostDoc(m.cost_table()))?;
        map.serialize_entry("kernel", &KernelDoc(m))?;
        map.serialize_entry("continuity_class", &m.continuity_class())?;
        map.end()
    }
}

impl Serialize for StatesDoc<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for (id, st) in self.0.iter().enumerate() {
            seq.serialize_element(&StateOut {
                id,
                coord: &st.coord,
                label: &st.label,
            })?;
        }
        seq.end()
    }
}

impl Serialize for MetricDoc<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Metric::EuclideanOnCoord => s.serialize_str("euclidean-on-coord"),
            Metric::Matrix(d) => {
                struct Mat<'a>(&'a [Vec<f64>]);
                impl Serialize for Mat<'_> {
                    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                        numfmt::vec2::serialize(self.0, s)
                    }
                }
                let mut map = s.serialize_map(Some(1))?;
                map.serialize_entry("matrix", &Mat(d))?;
                map.end()
            }
        }
    }
}

impl Serialize for CostDoc<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Row<'a>(&'a [ExtReal]);
        impl Serialize for Row<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut seq = s.serialize_seq(Some(self.0.len()))?;
                for c in self.0 {
                    match c {
                        ExtReal::Finite(v) => {
                            struct N(f64);
                            impl Serialize for N {
                                fn serialize<S: Serializer>(
                                    &self,
                                    s: S,
                                ) -> std::result::Result<S::Ok, S::Error> {
                                    numfmt::serialize(&self.0, s)
                                }
                            }
                            seq.serialize_element(&N(*v))?
                        }
                        ExtReal::Infinite => seq.serialize_element("inf")?,
                    }
                }
                seq.end()
            }
        }
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for row in self.0 {
            seq.serialize_element(&Row(row))?;
        }
        seq.end()
    }
}

impl Serialize for RowDoc<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for &(state, prob) in self.0 {
            seq.serialize_element(&EntryOut { state, prob })?;
        }
        seq.end()
    }
}

impl Serialize for KernelDoc<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m = self.0;
        let mut map = s.serialize_map(None)?;
        for (x, per_state) in m.kernel_rows().iter().enumerate() {
            for (a, row) in per_state.iter().enumerate() {
                if let Some(row) = row {
                    map.serialize_entry(&format!("{x},{a}"), &RowDoc(row))?;
                }
            }
        }
        map.end()
    }
}

/// Pretty-printed model document; kernel keys in `(x, a)` order.
pub fn model_to_string(model: &MdpModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelDoc(model))?)
}

pub fn write_model(model: &MdpModel, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::Violation;

    #[test]
    fn catalog_models_round_trip_exactly() {
        for model in [
            catalog::example_indicator(6),
            catalog::example_dirichlet(3),
            catalog::random_finite(4, 3, 11, 0.3),
        ] {
            let text = model_to_string(&model).unwrap();
            let (back, report) = parse_model(&text).unwrap();
            assert!(report.is_valid(), "{:?}", report.violations);
            assert_eq!(back, model);
        }
    }

    #[test]
    fn infinite_cost_is_a_string_token() {
        let text = r#"{
            "states": [{"coord": [0.0]}, {"coord": [1.0]}],
            "metric": "euclidean-on-coord",
            "actions": ["stay", "jump"],
            "cost": [[0, "inf"], [1, 2]],
            "kernel": {
                "0,0": [{"state": 0, "prob": 1}],
                "1,0": [{"state": 1, "prob": 1}],
                "1,1": [{"state": 0, "prob": 1}]
            },
            "continuity_class": "none"
        }"#;
        let (model, report) = parse_model(text).unwrap();
        assert!(report.is_valid(), "{:?}", report.violations);
        assert_eq!(model.cost(0, 1), ExtReal::Infinite);
        assert!(model.kernel_row(0, 1).is_none());
    }

    #[test]
    fn tiny_deviation_is_normalized_and_recorded() {
        let text = r#"{
            "states": [{"coord": [0.0]}, {"coord": [1.0]}],
            "metric": "euclidean-on-coord",
            "actions": ["a"],
            "cost": [[0], [1]],
            "kernel": {
                "0,0": [{"state": 0, "prob": 0.3333333333333333}, {"state": 1, "prob": 0.6666666666666666}],
                "1,0": [{"state": 0, "prob": 0.9}, {"state": 1, "prob": 0.10000000001}]
            },
            "continuity_class": "none"
        }"#;
        let (model, report) = parse_model(text).unwrap();
        assert!(report.is_valid(), "{:?}", report.violations);
        assert!(report.normalization_deviation > 0.0);
        assert!(report.normalization_deviation < NORMALIZE_LIMIT);
        let sum: f64 = model.row(1, 0).iter().map(|e| e.1).sum();
        assert!((sum - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn large_deviation_survives_to_validation() {
        let text = r#"{
            "states": [{"coord": [0.0]}],
            "metric": "euclidean-on-coord",
            "actions": ["a"],
            "cost": [[0]],
            "kernel": {"0,0": [{"state": 0, "prob": 0.9}]},
            "continuity_class": "none"
        }"#;
        let (_, report) = parse_model(text).unwrap();
        assert!(matches!(
            report.violations[0],
            Violation::RowStochasticity {
                state: 0,
                action: 0,
                ..
            }
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_model("{\n  \"states\": [,\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn explicit_matrix_metric_is_read() {
        let text = r#"{
            "states": [{}, {}],
            "metric": {"matrix": [[0, 0.5], [0.5, 0]]},
            "actions": ["a"],
            "cost": [[0], [1]],
            "kernel": {"0,0": [{"state": 0, "prob": 1}], "1,0": [{"state": 0, "prob": 1}]},
            "continuity_class": "S*"
        }"#;
        let (model, report) = parse_model(text).unwrap();
        assert!(report.is_valid());
        assert_eq!(model.distance(1, 0), 0.5);
        assert_eq!(model.continuity_class(), ContinuityClass::Setwise);
    }
}
