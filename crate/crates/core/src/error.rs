use alloc::string::String;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "insufficient history: {needed} rows must end at the as-of row; earliest admissible as-of row is {earliest}"
    )]
    InsufficientHistory { needed: usize, earliest: usize },

    #[error("zero variance for ticker {ticker} in the window ending at row {row}")]
    ZeroVariance { ticker: String, row: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;
