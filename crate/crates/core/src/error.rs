use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupted thermometer state: {0}")]
    CorruptedState(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Settling was never detected. Carries the peak-to-peak ripple of the
    /// trace tail as a best-effort figure.
    #[error("output never settled (tail ripple {tail_ripple:.3e} V)")]
    NotSettled { tail_ripple: f64 },

    #[error("current efficiency undefined: average load current is zero")]
    UndefinedEfficiency,

    #[error("singular nodal system: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, Error>;

