use thiserror::Error;

/// Errors reported by the solver pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The value of the comparison problem is infinite (`beta <= k`).
    #[error("value is not finite: beta = {beta} <= k = {k}")]
    NonFiniteValue { beta: f64, k: f64 },

    #[error("scheme configuration rejected: {0}")]
    InvalidConfig(String),

    /// Explicit-scheme stability bound violated before the sweep started.
    #[error("CFL condition violated: {0}")]
    Cfl(String),

    /// NaN or overflow detected during a sweep, with the grid location.
    #[error("numerical failure at t-index {time_index}, z-index {space_index}: {what}")]
    Numerical {
        what: String,
        time_index: usize,
        space_index: usize,
    },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last delta {last_delta:e})")]
    NoConvergence { iterations: usize, last_delta: f64 },

    #[error("quantizer did not converge after {iterations} iterations (last move {last_move:e})")]
    QuantizerNoConvergence { iterations: usize, last_move: f64 },

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
