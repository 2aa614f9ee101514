use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail")]
pub enum Error {
    /// The discrete operator is not positive definite at this resolution.
    #[error("operator is not coercive (smallest generalized eigenvalue {lambda_min:.6e})")]
    CoercivityFailure { lambda_min: f64 },

    #[error("warping function is not positive: f({r:.6}) = {value:.6e}")]
    NonPositiveWarping { r: f64, value: f64 },

    /// The concentration functional is constant up to `tol`; no isolated critical point exists.
    #[error("concentration functional is constant (max |dH/dr - 1/2| = {max_abs:.3e} < {tol:.3e})")]
    ConstantV { max_abs: f64, tol: f64 },

    #[error("no nondegenerate critical point available")]
    NoNondegeneratePoint,

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("power iterate non-positive on {fraction:.2}% of nodes")]
    NonPositiveIterate { fraction: f64 },

    #[error("Jacobian is singular")]
    JacobianSingular,

    #[error("bubble scale eps = {eps:.3e} under-resolved on grid with h = {h:.3e} (need eps >= 8h)")]
    Resolution { eps: f64, h: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
