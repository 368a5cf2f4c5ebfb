use alloc::string::String;

/// Broad classes of failure, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A parameter or input violates a documented precondition.
    Validation,
    /// A configured size limit was exceeded.
    ResourceGuard,
    /// The computation ran but its result is not trustworthy.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cell {cell} lies outside the realization window [{min}, {max}]")]
    OutsideWindow { cell: i64, min: i64, max: i64 },

    #[error("window of {cells} cells exceeds the configured maximum of {limit}")]
    WindowTooLarge { cells: u64, limit: u64 },

    #[error("grid of {points} points exceeds the configured maximum of {limit}")]
    GridTooLarge { points: usize, limit: usize },

    #[error("energy {energy} is resonant (sqrt(E) lies in pi*Z)")]
    ResonantEnergy { energy: f64 },

    #[error("energy {energy} lies outside the solver range |E| <= {cap}")]
    EnergyOutOfRange { energy: f64, cap: f64 },

    #[error("the zero vector has no Prüfer representation")]
    ZeroVector,

    #[error("energy {energy} is not an eigenvalue (matching defect {defect:e})")]
    NotAnEigenvalue { energy: f64, defect: f64 },

    #[error("energy {energy} is too close to an eigenvalue (normalized Wronskian {wronskian:e})")]
    NearEigenvalue { energy: f64, wronskian: f64 },

    #[error("{rejected} of {total} samples rejected near eigenvalues (limit 20%)")]
    RejectionRate { rejected: usize, total: usize },

    #[error("degenerate decay profile: {0}")]
    DegenerateProfile(String),

    #[error("time {time} exceeds the ballistic horizon {horizon} of the box")]
    BeyondHorizon { time: f64, horizon: f64 },

    #[error("disorder law fails its moment check: {0}")]
    DisorderMoments(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::WindowTooLarge { .. } | Error::GridTooLarge { .. } => ErrorKind::ResourceGuard,
            Error::NotAnEigenvalue { .. }
            | Error::NearEigenvalue { .. }
            | Error::RejectionRate { .. }
            | Error::DegenerateProfile(_)
            | Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
