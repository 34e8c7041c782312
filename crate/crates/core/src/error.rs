use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every prior·likelihood product vanished. Either the outcome was
    /// impossible under the prior or the weights underflowed.
    #[error("degenerate posterior: all prior-likelihood products are zero")]
    DegeneratePosterior,

    #[error("circular mean undefined: resultant length {resultant:.3e} is below 1e-12")]
    UndefinedMean { resultant: f64 },

    #[error("optimal LO amplitude diverges at relative phase {delta}")]
    DivergentAmplitude { delta: f64 },

    #[error("record LUT needs {entries} entries, cap is {cap}; use a smaller k_switch")]
    ResourceLimit { entries: u128, cap: usize },

    #[error("configuration error: {0}")]
    Configuration(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
