use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A denominator of the Richardson equations vanished.
    #[error("singularity: {what} (|difference| = {distance:.3e})")]
    Singularity { what: String, distance: f64 },

    /// A pair energy sits on the real integration contour and principal
    /// values were not enabled.
    #[error("pair energy {re}{im:+}i lies on the integration contour")]
    Contour { re: f64, im: f64 },

    /// Continuation could not reach the requested strength.
    #[error("no convergence: continuation stalled at G = {last_good_g} (target {target_g}): {reason}")]
    NonConvergence {
        last_good_g: f64,
        target_g: f64,
        reason: String,
    },

    /// Two pair energies merged and could not be separated.
    #[error("unresolved pair-energy collision at G = {g}: E[{a}] and E[{b}]")]
    Collision { g: f64, a: usize, b: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. }
            | Error::Collision { .. }
            | Error::Singularity { .. }
            | Error::Contour { .. } => 2,
            Error::Domain(_) | Error::Capacity(_) | Error::Config(_) | Error::Io(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
