use std::path::PathBuf;

use crate::beam::DesignRole;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(
        "matrix is not a rotation (orthogonality defect {orthogonality:e}, det {determinant})"
    )]
    NotARotation {
        orthogonality: f64,
        determinant: f64,
    },
    #[error("matrix is not skew-symmetric (symmetric part {0:e})")]
    NotSkew(f64),
    #[error("invalid section: {0}")]
    InvalidSection(String),
    #[error("design role {role:?} does not apply to section {shape}")]
    DesignRole { role: DesignRole, shape: String },
    #[error("element {element} is degenerate (jacobian {jacobian})")]
    DegenerateElement { element: usize, jacobian: f64 },
    #[error("natural coordinate {0} outside [-1, 1]")]
    OutsideElement(f64),
    #[error("unsupported element node count {0} (expected 2..=4)")]
    ElementOrder(usize),
    #[error("unsupported quadrature rule with {0} points (expected 1..=4)")]
    QuadratureRule(usize),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid load case: {0}")]
    InvalidLoads(String),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("Newton iteration did not converge at load factor {load_factor} after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        load_factor: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("tangent matrix is singular")]
    SingularTangent,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("moment matrix is singular even after enlarging the neighbour set")]
    SingularMoments,
    #[error("surface minimisation did not converge in {iterations} iterations")]
    SurfaceNoConvergence { iterations: usize },
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl Error {
    /// Errors caused by numerics rather than by the input description.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::SingularTangent
                | Error::SurfaceNoConvergence { .. }
                | Error::SingularMoments
        )
    }
}
