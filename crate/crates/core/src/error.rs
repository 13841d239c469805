use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "value iteration did not converge for alpha = {alpha} after {iterations} iterations \
         (last residual {residual:e})"
    )]
    NotConverged {
        alpha: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("solve failed at schedule index {index}: {source}")]
    ScheduleEntry {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no action satisfies the optimality inequality at state {state}")]
    EmptyActionSet { state: usize },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
