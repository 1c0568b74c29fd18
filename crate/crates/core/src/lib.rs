//! Solver for an infinite-horizon investment/consumption problem in a market
//! with one continuously traded asset and one asset that can only be traded at
//! the jump times of a Poisson process and is partially observed in between.
//!
//! The pipeline:
//!
//! * [`model`] — parameter validation, derived market constants, closed-form
//!   Merton baselines and the scalar all-liquid coefficient.
//! * [`gauss`] — Gaussian node/weight grids and the nonlocal kernel
//!   `f(t, z) = E[(z + J_t)^p]` driven by the unobserved factor `J`.
//! * [`hjb`] — monotone explicit finite-difference solve of the reduced
//!   one-dimensional parabolic equation on the compactified domain, coupled
//!   with the outer scalar fixed-point iteration.
//! * [`policy`] — optimal feedback maps, the optimal illiquid allocation and
//!   the cost-of-illiquidity measure extracted from a solved surface.
//! * [`sim`] — closed-loop Monte Carlo across Poisson trading dates.
//! * [`cache`] — content-hashed CSV/binary persistence for surfaces and
//!   kernel tables.

pub mod cache;
mod error;
pub mod gauss;
pub mod hjb;
pub mod model;
pub mod policy;
pub mod sim;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
