use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("ball radius {radius} must be smaller than half the torus extent ({limit})")]
    RadiusTooLarge { radius: f64, limit: f64 },

    #[error("aperture radius {radius} at t = {time} must be smaller than half the torus extent ({limit})")]
    ApertureTooLarge { radius: f64, time: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("field contains a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("coefficient field violates ellipticity: min Re a = {min_re}")]
    EllipticityViolation { min_re: f64 },

    #[error("grid too large for dense eigendecomposition: {points} points (max {max})")]
    GridTooLarge { points: usize, max: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("power iteration did not converge after {iterations} iterations (last relative change {last_change:e}, estimate {estimate:e})")]
    NoConvergence {
        iterations: usize,
        last_change: f64,
        estimate: f64,
    },

    #[error("degenerate off-diagonal family: {0}")]
    DegenerateFamily(String),

    #[error("field must vanish on the first two time slices (found |f| = {magnitude:e} at slice {slice})")]
    NotVanishingNearZero { slice: usize, magnitude: f64 },

    #[error("t/2 is not on the time grid: {0}")]
    OffGrid(String),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("beta = {beta} violates the requirement beta < 1")]
    RangeViolation { beta: f64 },

    #[error("unknown provider '{0}' (expected heat, poisson or divform)")]
    UnknownProvider(String),

    #[error("field file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
