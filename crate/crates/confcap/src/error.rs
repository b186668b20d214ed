//! Error type shared by every stage of the pipeline.
//!
//! The CLI maps these onto process exit codes: configuration and scenario
//! problems exit with 3, solver non-convergence with 2, everything else
//! (I/O, internal defects) with 1.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Domain construction or validation failed (non-positive radius,
    /// non-star graph, bad harmonic coefficients, ...).
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    /// Conformal factor is unusable (non-positive somewhere, wrong decay).
    #[error("invalid conformal factor: {0}")]
    InvalidFactor(String),

    /// A run configuration or scenario file could not be parsed/validated.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Grid construction detected a defect (non-positive Jacobian, outer
    /// radius too close to the body, resolution below the supported floor).
    #[error("grid defect: {0}")]
    GridDefect(String),

    /// The nonlinear iteration stalled before reaching its tolerance.
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations (target {target:.3e})")]
    SolverDiverged {
        residual: f64,
        target: f64,
        iterations: usize,
    },

    /// The inner linear system turned out indefinite; this signals a grid or
    /// coefficient defect rather than a tolerance problem.
    #[error("indefinite linear system encountered after {iterations} iterations")]
    IndefiniteSystem { iterations: usize },

    /// Requested level value lies outside the resolved range of the potential.
    #[error("level t = {t:.6} outside the usable range (0, {max:.6})")]
    LevelOutOfRange { t: f64, max: f64 },

    /// A level set was requested where the potential never attains the value.
    #[error("level set t = {t:.6} is empty on this grid")]
    EmptyLevelSet { t: f64 },

    /// A level set ran into the truncation sphere; its geometry would be
    /// polluted by the artificial outer boundary.
    #[error("level set t = {t:.6} touches the outer truncation boundary")]
    LevelTouchesBoundary { t: f64 },

    /// Too few usable samples to state a verdict.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SolverDiverged { .. } | Error::IndefiniteSystem { .. } => 2,
            Error::InvalidDomain(_)
            | Error::InvalidFactor(_)
            | Error::InvalidConfig(_)
            | Error::Json(_) => 3,
            _ => 1,
        }
    }
}
