//! Error taxonomy shared by every module.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad distribution, bad branch table, bad field value).
    #[error("configuration error: {0}")]
    Config(String),

    /// A driving window does not cover the requested offsets.
    #[error("window too short: need offsets [{need_lo}, {need_hi}), have [{have_lo}, {have_hi})")]
    Window {
        need_lo: i64,
        need_hi: i64,
        have_lo: i64,
        have_hi: i64,
    },

    /// A point argument left the unit interval.
    #[error("domain error: x = {x} lies outside [0, 1]")]
    Domain { x: f64 },

    /// Root finding or another iterative kernel failed to converge.
    #[error("numerical error in branch {branch}: {message}")]
    Numerical { branch: usize, message: String },

    /// A structural model hypothesis fails (e.g. expansion constant not > 1).
    #[error("model violation: {0}")]
    ModelViolation(String),

    /// Mismatched grid sizes.
    #[error("shape error: expected {expected} bins, got {got}")]
    Shape { expected: usize, got: usize },

    /// An operation precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Monte Carlo sampling could not produce a valid draw.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Variance is zero or negative where a positive variance is required.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// A fiber density dipped below the guarded positive floor.
    #[error("density floor violated: esinf h = {esinf:.3e} below {floor:.3e}")]
    DensityFloor { esinf: f64, floor: f64 },

    /// IO failure while persisting artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Config file parse failure.
    #[error("parse error: {0}")]
    Parse(String),
}
