use thiserror::Error;

/// Errors produced by the numerical kernels, region constructors and procedures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    /// An infinite series did not reach the requested tolerance.
    #[error("series in {func} did not converge within {max_terms} terms")]
    Convergence { func: &'static str, max_terms: usize },

    /// Parameters are individually valid but violate a structural invariant
    /// (for example `prod c_k != 1`).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A volume mode was requested for a region it cannot evaluate.
    #[error("incompatible volume mode: {0}")]
    IncompatibleMode(String),

    /// The construction is well-defined but carries no information
    /// (constant likelihood ratio, zero tail slope).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Input dimensions disagree.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// A matched-power comparison cannot reach the requested count.
    #[error("cannot match {needed} false discoveries, only {available} available")]
    ImpossibleMatch { needed: usize, available: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain { func, detail: detail.into() }
}
