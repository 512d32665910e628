use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite field")]
    NonFinite,

    #[error("grid mismatch: {0} vs {1}")]
    GridMismatch(usize, usize),

    #[error("rank mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },

    #[error("incompatible source (mean {0:e})")]
    IncompatibleSource(f64),

    #[error("normalize first (log integral exp of component {component} is {value:e})")]
    NormalizeFirst { component: usize, value: f64 },

    #[error("refine grid: {0}")]
    RefineGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("step size underflow at radius {radius:e}")]
    StepUnderflow { radius: f64 },

    #[error("flux identity violated at radius {radius:e} (residual {residual:e})")]
    FluxViolation { radius: f64, residual: f64 },

    #[error("tail too large at R = {r_max}: component {component} carries {tail:e}; use a larger R_max")]
    TailTooLarge {
        r_max: f64,
        component: usize,
        tail: f64,
    },

    #[error("non-finite energy at iteration {iteration}")]
    NonFiniteEnergy {
        iteration: usize,
        trace: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
