use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(
        "CFL violation: substep {substep:.3e} exceeds stable step {stable:.3e} \
         (characteristic speed {speed:.3}); increase substeps_per_dt to at least {advised}"
    )]
    CflViolation {
        substep: f64,
        stable: f64,
        speed: f64,
        advised: u32,
    },

    #[error("metric fails admissibility: {0}")]
    InadmissibleMetric(String),

    #[error("diffeomorphism is not invertible on the grid: {0}")]
    NonInvertibleFlow(String),

    #[error("singular linear solve: {0}")]
    SingularSolve(String),

    #[error("Bogoliubov structure violation: {0}")]
    StructureViolation(String),

    #[error("operator norm condition violated: {0}")]
    NormCondition(String),

    #[error("{0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
