use thiserror::Error;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operator is not Hermitian: ‖A − A†‖_F = {asymmetry:.3e}")]
    NotHermitian { asymmetry: f64 },

    #[error("operator is not unitary: ‖U†U − 1‖_F = {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is singular (smallest singular value {sigma_min:.3e})")]
    Singular { sigma_min: f64 },

    #[error(
        "branch boundary: eigenphase {phase:.9} lies within {tol:.1e} of ±π, \
         the Floquet exponent is not recoverable from U(T)"
    )]
    BranchBoundary { phase: f64, tol: f64 },

    #[error("level crossing: {0}")]
    LevelCrossing(String),

    #[error("Hamiltonian is not periodic: mismatch {mismatch:.3e} between t = 0 and t = T")]
    NotPeriodic { mismatch: f64 },

    #[error("invalid spin quantum number {0}: 2j must be a positive integer ≤ 200")]
    InvalidSpin(f64),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("grid too coarse: {0}")]
    CoarseGrid(String),

    #[error("eigenvalue {lambda} not found in spectrum")]
    EigenvalueNotFound { lambda: f64 },

    #[error("unitarity drift {drift:.3e} exceeds {bound:.1e}")]
    UnitarityDrift { drift: f64, bound: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Process exit status used by the scenario runner for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BranchBoundary { .. } => 3,
            Error::LevelCrossing(_) => 4,
            Error::Config(_)
            | Error::Invalid(_)
            | Error::InvalidSpin(_)
            | Error::InvalidGrid(_)
            | Error::NotHermitian { .. }
            | Error::NotUnitary { .. }
            | Error::NotPeriodic { .. }
            | Error::DimensionMismatch { .. }
            | Error::EigenvalueNotFound { .. } => 2,
            Error::Singular { .. }
            | Error::CoarseGrid(_)
            | Error::UnitarityDrift { .. }
            | Error::Numerical(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
