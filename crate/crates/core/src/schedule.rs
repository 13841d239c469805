//! Truncated discount schedules `α_0 < α_1 < … < α_{n_max} < 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    /// `α_n = 1 − γ^{n+1}`.
    Geometric {
        gamma: f64,
    },
    /// `α_n = 1 − 1/(n+2)`.
    Harmonic,
    List,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountSchedule {
    kind: ScheduleKind,
    values: Vec<f64>,
}

pub const DEFAULT_SCHEDULE: &str = "geometric:0.5:30";

impl DiscountSchedule {
    pub fn geometric(gamma: f64, n_max: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "geometric ratio must lie in (0,1), got {gamma}"
            )));
        }
        let values = (0..=n_max).map(|n| 1.0 - gamma.powi(n as i32 + 1)).collect();
        Self::checked(ScheduleKind::Geometric { gamma }, values)
    }

    pub fn harmonic(n_max: usize) -> Result<Self> {
        let values = (0..=n_max).map(|n| 1.0 - 1.0 / (n as f64 + 2.0)).collect();
        Self::checked(ScheduleKind::Harmonic, values)
    }

    pub fn list(values: Vec<f64>) -> Result<Self> {
        Self::checked(ScheduleKind::List, values)
    }

    fn checked(kind: ScheduleKind, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("schedule has no entries".into()));
        }
        if let Some(bad) = values.iter().find(|a| !(**a >= 0.0 && **a < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "discount factor {bad} outside [0,1)"
            )));
        }
        if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "schedule must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(DiscountSchedule { kind, values })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    /// Default tail-window length `⌈n_max/3⌉`, at least one.
    pub fn default_tail_window(&self) -> usize {
        self.n_max().div_ceil(3).max(1)
    }
}

impl Default for DiscountSchedule {
    fn default() -> Self {
        DEFAULT_SCHEDULE.parse().expect("default schedule parses")
    }
}

fn parse_num<T: FromStr>(field: &str, what: &str, spec: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what} {field:?} in schedule {spec:?}")))
}

impl FromStr for DiscountSchedule {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().split(':').collect();
        match parts.as_slice() {
            ["geometric", g, n] => {
                Self::geometric(parse_num(g, "ratio", spec)?, parse_num(n, "n_max", spec)?)
            }
            ["harmonic", n] => Self::harmonic(parse_num(n, "n_max", spec)?),
            ["list", items] => Self::list(
                items
                    .split(',')
                    .map(|a| parse_num(a, "discount factor", spec))
                    .collect::<Result<_>>()?,
            ),
            _ => Err(Error::Parse(format!(
                "unrecognized schedule {spec:?}; expected geometric:<gamma>:<n_max>, \
                 harmonic:<n_max> or list:<a0>,<a1>,..."
            ))),
        }
    }
}

impl fmt::Display for DiscountSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ScheduleKind::Geometric { gamma } => write!(f, "geometric:{gamma}:{}", self.n_max()),
            ScheduleKind::Harmonic => write!(f, "harmonic:{}", self.n_max()),
            ScheduleKind::List => {
                f.write_str("list:")?;
                for (i, a) in self.values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a:?}")?;
                }
                Ok(())
            }
        }
    }
}

impl Serialize for DiscountSchedule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DiscountSchedule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
