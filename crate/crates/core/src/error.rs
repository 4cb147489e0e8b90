use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A battery state outside `[0, B]` was handed to the simulator.
    #[error("battery state {state} MWh outside [0, {energy_rating}] MWh")]
    State { state: f64, energy_rating: f64 },

    /// An operation's precondition does not hold for the supplied data.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// The LP solver could not certify an optimum.
    #[error("LP solver failed: {0}")]
    Solver(String),

    /// A surface cell failed to evaluate.
    #[error("surface cell (B = {energy_rating} MWh, P = {power_rating} MW) failed: {source}")]
    Cell {
        energy_rating: f64,
        power_rating: f64,
        #[source]
        source: Box<Error>,
    },

    /// The requested capacity target cannot be reached.
    #[error(
        "target fraction {target} unreachable; at most {achievable} achievable on the sweep range"
    )]
    Unreachable { target: f64, achievable: f64 },

    #[error(transparent)]
    Ingest(#[from] crate::series::ingest::IngestError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
