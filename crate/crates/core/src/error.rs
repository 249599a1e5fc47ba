use thiserror::Error;

/// Errors raised by the tail-modelling routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} outside the support of the distribution")]
    OutsideSupport { value: f64 },

    #[error("probability {0} outside the admissible range")]
    InvalidProbability(f64),

    #[error("need at least {required} observations, got {got}")]
    TooFewObservations { required: usize, got: usize },

    #[error("threshold {threshold} leaves {got} excesses, need at least {required}")]
    TooFewExcesses {
        threshold: f64,
        got: usize,
        required: usize,
    },

    #[error("malformed grid specification: {0}")]
    GridSpec(String),

    #[error("every candidate threshold was skipped")]
    NoFeasibleCandidate,

    #[error("all {0} bootstrap replicates failed")]
    AllReplicatesFailed(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
