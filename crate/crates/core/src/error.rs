use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mesh mismatch: expected {expected} interior nodes, got {found}")]
    MeshMismatch { expected: usize, found: usize },

    #[error("meshes are not nested: {fine} cells is not a multiple of {coarse} cells")]
    NotNested { fine: usize, coarse: usize },

    #[error("time step {step} is not aligned with the fine Brownian grid (ratio {ratio})")]
    UnalignedStep { step: f64, ratio: f64 },

    #[error("step index {index} out of range (table has {len} steps)")]
    StepOutOfRange { index: usize, len: usize },

    #[error("inadmissible noise regularity: beta = {beta} must satisfy beta < s + 1 - d/2 = {bound}")]
    Inadmissible { beta: f64, bound: f64 },

    #[error("numerical invariant violated: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
