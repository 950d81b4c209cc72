use thiserror::Error;

pub type Result<T> = std::result::Result<T, HeweError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeweError {
    #[error("no numeric values in the selected column")]
    EmptyData,
    #[error("non-positive value {value} at row {row}")]
    NonPositiveValue { value: f64, row: usize },
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("removing {m} values would exhaust a sample of {len}")]
    RemovalExhaustsSample { m: usize, len: usize },
    #[error("rank {rank} out of range 1..={len}")]
    RankOutOfRange { rank: usize, len: usize },
    #[error("order statistic {needed} required but only {available} values available")]
    InsufficientData { needed: usize, available: usize },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("non-positive variance denominator at grid index {index}")]
    DegenerateVariance { index: usize },
    #[error("bias direction has zero weighted norm")]
    BiasDirectionDegenerate,
    #[error("estimation failed: {0}")]
    EstimationFailed(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl HeweError {
    /// Stable machine-readable code, used in HTTP error bodies and sweep tables.
    pub fn code(&self) -> &'static str {
        match self {
            HeweError::EmptyData => "EmptyData",
            HeweError::NonPositiveValue { .. } => "NonPositiveValue",
            HeweError::ParseError(_) => "ParseError",
            HeweError::RemovalExhaustsSample { .. } => "RemovalExhaustsSample",
            HeweError::RankOutOfRange { .. } => "RankOutOfRange",
            HeweError::InsufficientData { .. } => "InsufficientData",
            HeweError::DomainError(_) => "DomainError",
            HeweError::DegenerateVariance { .. } => "DegenerateVariance",
            HeweError::BiasDirectionDegenerate => "BiasDirectionDegenerate",
            HeweError::EstimationFailed(_) => "EstimationFailed",
            HeweError::InvalidGrid(_) => "InvalidGrid",
            HeweError::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// True for errors caused by bad input rather than a failed fit.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            HeweError::EstimationFailed(_)
                | HeweError::DegenerateVariance { .. }
                | HeweError::BiasDirectionDegenerate
        )
    }
}
