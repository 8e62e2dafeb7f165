//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, integration, and the analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A mobility specification violates nonnegativity or its parameter ranges.
    #[error("invalid mobility specification: {0}")]
    InvalidMobility(String),

    /// Model or solver parameters outside their admissible range.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The vector field is not differentiable on the z = 0 line away from the
    /// origin; the origin itself has a dedicated linearization.
    #[error("vector field is not smooth at ({z}, {m}) on the z = 0 line")]
    NonsmoothPoint { z: f64, m: f64 },

    /// Origin linearization is only defined when a(0) = 0.
    #[error("origin linearization requires a(0) = 0, got a(0) = {a0:e}")]
    UnsupportedLinearization { a0: f64 },

    /// Newton refinement of a fixed point failed to converge.
    #[error("fixed-point refinement did not converge: residual {residual:e} at ({z}, {m})")]
    NewtonDiverged { z: f64, m: f64, residual: f64 },

    /// Adaptive step size underflowed; carries the last good state.
    #[error("step size underflow at t = {t} near ({z}, {m})")]
    Stiffness { t: f64, z: f64, m: f64 },

    /// A manifold operation was asked for at a non-saddle fixed point.
    #[error("not a saddle: {0}")]
    NotASaddle(String),

    /// A stable-manifold trace terminated without crossing the m-axis.
    #[error("no m-axis crossing found: {0}")]
    NoCrossing(String),

    /// The bisection bracket for the critical mobility is invalid.
    #[error("invalid bracket: {0}")]
    BadBracket(String),

    /// The orbit never returned to the Poincare section.
    #[error("orbit does not return to the section (attractor: {attractor})")]
    NoReturn { attractor: String },

    /// A time or argument lies outside the supported span.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// Simulation configuration inconsistent (agent counts, horizon, ...).
    #[error("invalid simulation configuration: {0}")]
    InvalidConfig(String),

    /// Config file syntax or schema problem.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Violated internal invariant; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Domain errors are expected outcomes of valid requests (bad bracket,
    /// missing cycle, out-of-span time); everything else is internal or i/o.
    pub fn is_domain(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Internal(_) | Error::Stiffness { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
