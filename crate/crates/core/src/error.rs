use thiserror::Error;

/// Errors raised by mesh construction, discretization and solution.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed mesh file: {0}")]
    MalformedMesh(String),

    #[error("non-conforming triangulation: {0}")]
    NonConforming(String),

    #[error("inconsistent boundary labels: {0}")]
    InconsistentLabels(String),

    #[error("degenerate element {0}")]
    DegenerateElement(usize),

    #[error("quadrature of degree {0} is not supported")]
    UnsupportedQuadrature(usize),

    #[error("polynomial degree k = {0} is not supported")]
    UnsupportedDegree(usize),

    #[error("stabilization variant {0} does not match the local layout")]
    VariantMismatch(&'static str),

    #[error("invalid material parameters: {0}")]
    InvalidMaterial(String),

    #[error("exact solution evaluated at its singular point")]
    SingularPoint,

    #[error("system matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("conjugate gradients did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("problem has no exact solution attached")]
    MissingExactSolution,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
