//! Solver and simulator for a binary-state mean-field game in which
//! conformist agents pay a quadratic effort cost to flip their opinion.
//!
//! The macroscopic equilibria of the game are exactly the bounded orbits of
//! a planar system in `(z, m)` — the value-function increment and the mean
//! opinion. The crate provides, layer by layer:
//!
//! - [`model`]: parameters, the phase-plane vector field, Jacobians,
//!   nullclines, fixed points, and regime classification;
//! - [`ode`]: an adaptive 5(4) integrator with dense output, `z = 0`
//!   branch-switch events, and orbit-attractor classification;
//! - [`phase`]: stable-manifold tracing, the first-crossing map and the
//!   critical mobility, Poincare return maps, and limit-cycle location;
//! - [`mfg`]: enumeration of equilibria for a given initial mean opinion,
//!   value-function reconstruction, and feedback-control laws;
//! - [`micro`]: exact event-driven simulation of the N-agent game under a
//!   mean-field feedback law, with law-of-large-numbers and approximate-Nash
//!   diagnostics;
//! - [`config`] and [`export`]: the on-disk formats (TOML parameters, CSV and
//!   JSON artifacts, SVG phase portraits).

pub mod config;
pub mod error;
pub mod export;
pub(crate) mod linalg;
pub mod mfg;
pub mod micro;
pub mod model;
pub mod ode;
pub mod phase;

pub use error::{Error, Result};
pub use model::{
    classify_regime, divergence, fixed_points, jacobian, mobility_eval, nullcline_m,
    origin_linearization, phi_pm, vector_field, FixedPointId, FixedPointInfo, MobilitySpec,
    ModelParams, PhasePoint, Regime, Spin, StabilityClass,
};
pub use ode::{
    classify_orbit, integrate, Attractor, BoundingBox, Direction, EventKind, IntegratorOptions,
    Orbit,
};
