use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Green's function is singular at zero offset")]
    SingularOffset,

    #[error("{what} needs {required} bytes, budget is {budget} bytes{hint}")]
    Resource {
        what: String,
        required: u64,
        budget: u64,
        hint: String,
    },

    #[error("no convergence after {iterations} iterations, best relative residual {best_residual:e}")]
    NonConvergence { iterations: usize, best_residual: f64 },

    #[error("BiCGStab breakdown after {iterations} iterations (relative residual {residual:e})")]
    Breakdown { iterations: usize, residual: f64 },

    #[error("correlation undefined: detector {detector} sees no field in either mode")]
    UndefinedCorrelation { detector: u8 },

    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error_estimate:e}")]
    Quadrature { estimate: f64, error_estimate: f64 },

    #[error("series out of range: {0}")]
    Range(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
