//! Simulation and verification toolkit for branching Brownian motion seen from
//! its leftmost particle.
//!
//! The crate has four computational layers:
//!
//! * [`engine`] simulates the particle system exactly and records its genealogy;
//! * [`genealogy`] and [`frontstats`] read a finished run backwards and from the front;
//! * [`fkpp`] solves the F-KPP equation for `G_t(x) = P(X_1(t) <= x)`;
//! * [`decoration`] samples the limit objects (the `Gamma^(b)` backbone, the
//!   decoration measure, the exponential Poisson process and the decorated limit).
//!
//! [`harness`] cross-validates these layers against each other and [`stats`]
//! holds the test statistics used to do so.

pub mod error;
pub mod numerics;
pub mod rng;

pub mod engine;
pub mod stats;
pub mod frontstats;
pub mod genealogy;
pub mod fkpp;
pub mod decoration;
pub mod harness;
pub mod io;

/// Version string echoed into every output file.
pub const VERSION: &str = concat!("bbm-tip ", env!("CARGO_PKG_VERSION"));
