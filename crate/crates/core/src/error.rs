use thiserror::Error;

/// Errors raised by the solver, detector, and search layers.
///
/// Parse-time problems are reported through [`crate::inp::ValidationReport`]
/// instead, so that a single pass over an INP file can collect several of
/// them; everything after parsing fails fast with one of these.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node id '{0}'")]
    UnknownNode(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver did not converge after {iterations} iterations (step {step})")]
    NoConvergence { step: usize, iterations: usize },
    #[error("singular system while solving step {step}")]
    SingularSystem { step: usize },
    #[error("measurement vector has length {got}, detector expects {want}")]
    DimMismatch { want: usize, got: usize },
    #[error("window [{start}, {end}] exceeds series of {len} steps")]
    Range {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("search space has no candidate {0}")]
    EmptySpace(&'static str),
    #[error("search space has {pairs} (node, start) pairs; brute force is capped at {cap}")]
    SpaceTooLarge { pairs: usize, cap: usize },
    #[error("graph is disconnected (algebraic connectivity {lambda2:.3e})")]
    Disconnected { lambda2: f64 },
    #[error("graph has {nodes} nodes; spectral embedding needs at least 5")]
    TooSmall { nodes: usize },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Stable machine-readable code, used by the CLI and in logs.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownNode(_) => "UNKNOWN_NODE",
            Error::Io(_) => "IO",
            Error::NoConvergence { .. } => "NO_CONVERGENCE",
            Error::SingularSystem { .. } => "SINGULAR_SYSTEM",
            Error::DimMismatch { .. } => "DIM_MISMATCH",
            Error::Range { .. } => "RANGE",
            Error::EmptySpace(_) => "EMPTY_SPACE",
            Error::SpaceTooLarge { .. } => "SPACE_TOO_LARGE",
            Error::Disconnected { .. } => "DISCONNECTED",
            Error::TooSmall { .. } => "TOO_SMALL",
            Error::Invalid(_) => "INVALID",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
