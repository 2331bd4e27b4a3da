use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),
    #[error("invalid dilaton: {0}")]
    InvalidDilaton(String),
    #[error("vertex index {index} out of range for {n} vertices")]
    VertexOutOfRange { index: usize, n: usize },
    #[error("hessian scheme unavailable: {0}")]
    HessianUnavailable(String),
    #[error("points are not contained in a ball of radius {r0} (found spread {spread})")]
    NotLocalized { r0: f64, spread: f64 },
    #[error("frechet mean iteration did not converge after {iterations} steps (gradient norm {residual})")]
    FrechetNotConverged { iterations: usize, residual: f64 },
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),
    #[error("t = {t} is below t_min = {t_min}")]
    TimeTooSmall { t: f64, t_min: f64 },
    #[error("heat kernel value {value} at vertex {vertex} violates positivity")]
    NegativityViolation { value: f64, vertex: usize },
    #[error("potential solve failed: {0}")]
    SolverFailure(String),
    #[error("potential residual {residual} exceeds tolerance {tol}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("flowed metric is not positive definite (smallest eigenvalue {min_eig})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("combined support {size} exceeds the limit {limit}; use w2_entropic")]
    SupportTooLarge { size: usize, limit: usize },
    #[error("sinkhorn did not converge in {iterations} iterations (marginal error {error})")]
    SinkhornNotConverged { iterations: usize, error: f64 },
    #[error("transport solver failed: {0}")]
    TransportFailure(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
