use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(
        "infeasible CBAP in sector {sector}: {cbap_slots} slots does not exceed the \
         {frame_slots}-slot frame exchange"
    )]
    InfeasibleCbap {
        sector: usize,
        cbap_slots: u64,
        frame_slots: u64,
    },

    /// The decrement probability `1 - p_b - p_H` (or its `p'_H` variant) is not positive.
    #[error("saturation infeasible: decrement probability {decrement} is not positive")]
    SaturationInfeasible { decrement: f64 },

    #[error("no fixed point: G has no sign change on ({lo:e}, {hi:e})")]
    NoFixedPoint { lo: f64, hi: f64 },

    #[error("fixed point did not converge in {iterations} iterations, last bracket [{lo:e}, {hi:e}]")]
    ConvergenceFailure { iterations: usize, lo: f64, hi: f64 },

    #[error("internal consistency: {0}")]
    InternalConsistency(String),

    #[error("chain too large: {states} states exceeds the oracle limit of {limit}; use the closed form")]
    ChainTooLarge { states: usize, limit: usize },

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    /// Failure at one point of a sweep or validation grid.
    #[error("at {point}: {source}")]
    AtPoint { point: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at(point: impl Into<String>, source: Error) -> Self {
        Error::AtPoint {
            point: point.into(),
            source: Box::new(source),
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::Config(_)
            | Error::ChainTooLarge { .. }
            | Error::Io(_)
            | Error::Csv(_) => 1,
            Error::InfeasibleCbap { .. }
            | Error::SaturationInfeasible { .. }
            | Error::NoFixedPoint { .. }
            | Error::ConvergenceFailure { .. }
            | Error::InternalConsistency(_) => 2,
            Error::OracleFailure(_) => 3,
            Error::AtPoint { source, .. } => source.exit_code(),
        }
    }
}
