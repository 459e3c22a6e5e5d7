use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {func}: argument {value} outside the supported range")]
    Domain { func: &'static str, value: f64 },

    #[error("unsupported dimension n = {0} (shape machinery supports n = 2 and n = 3)")]
    UnsupportedDimension(usize),

    #[error("resolution {resolution} is below the minimum {min}")]
    ResolutionTooLow { resolution: usize, min: usize },

    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("harmonic degree {degree} exceeds the grid limit {max}")]
    DegreeTooHigh { degree: usize, max: usize },

    #[error("harmonic index {index} is invalid for degree {degree}")]
    InvalidMode { degree: usize, index: usize },

    #[error("boundary is not star-shaped: 1 + v = {value} at node {node}")]
    NotStarShaped { node: usize, value: f64 },

    #[error("constraint projection did not converge after {iterations} iterations (residual {residual:e})")]
    ProjectionDiverged { iterations: usize, residual: f64 },

    #[error("adaptive quadrature on [{a}, {b}] did not reach tolerance")]
    QuadratureNonConvergence { a: f64, b: f64 },

    #[error("matrix is not positive definite: pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("matrix dimensions do not match: {0}")]
    Shape(String),

    #[error("grid with {nodes} nodes is too coarse for {modes} Trefftz modes")]
    GridTooCoarse { nodes: usize, modes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
