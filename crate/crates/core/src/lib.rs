//! Average-cost optimality for finite Markov decision processes through
//! vanishing-discount limits of discounted relative value functions.

pub mod catalog;
pub mod chain;
pub mod discounted;
pub mod error;
pub mod ext_real;
pub mod io;
pub mod model;
pub mod numfmt;
pub mod schedule;
pub mod sim;
pub mod vanish;
pub mod verify;

pub use error::{Error, Result};
pub use ext_real::ExtReal;
pub use model::{
    ball, effective_action_set, validate_model, Construction, ContinuityClass, MdpModel, Metric, Policy,
    StateRecord, ValidationReport, ValueFunction, ValueKind, Violation,
};
pub use schedule::DiscountSchedule;
pub use vanish::VanishDiagnostics;
pub use verify::{Check, CheckKind, Verdict, VerificationReport};
