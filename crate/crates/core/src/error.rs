use thiserror::Error;

/// Errors raised by the measure, functional and test routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("function returned a non-finite value at {at}")]
    NonFiniteFunctionValue { at: f64 },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("distance between a discrete and a continuous measure is not supported here")]
    MixedKindUnsupported,
    #[error("value {0} lies outside the support of the base measure")]
    ValueOutsideSupport(f64),
    #[error("invalid tangent: {0}")]
    InvalidTangent(String),
    #[error("curve density vanishes at sampled point {at} (log-likelihood ratio is -inf)")]
    DegenerateDensity { at: f64 },
    #[error("tangents or gradients are attached to different base measures")]
    BaseMismatch,
    #[error("quotient functional evaluated where the denominator is zero")]
    QuotientByZero,
    #[error("canonical gradient has zero norm; the test is undefined")]
    DegenerateGradient,
    #[error("tangent has zero d-norm")]
    DegenerateTangent,
    #[error("tangent is orthogonal to the canonical gradient")]
    OrthogonalTangent,
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("pooled sample contains tied observations")]
    TiedObservations,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
