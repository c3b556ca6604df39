//! Numerical laboratory for quenched statistics of random piecewise
//! expanding interval maps.
//!
//! A random dynamical system here is a finite family of piecewise monotone
//! expanding maps of [0, 1] driven by a seeded symbol process. The crate
//! builds the associated transfer-operator cocycle on a uniform grid,
//! solves for the equivariant family of fiber densities, and then measures
//! the statistical machinery that sits on top: decay of correlations, the
//! Green-Kubo variance, the reverse-martingale decomposition with its exact
//! algebraic identities, cone contraction in the projective metric, and
//! Monte Carlo tests of central-limit behaviour of Birkhoff sums.
//!
//! Start with the runnable programs under `examples/`; each one exercises a
//! single capability end to end. The `quenched` binary runs whole
//! experiments from a JSON config (see [`config`] and the shipped configs
//! reachable through `quenched example`).

pub mod acim;
pub mod config;
pub mod driving;
pub mod error;
pub mod limits;
pub mod maps;
pub mod martingale;
pub mod runner;
pub mod spaces;
pub mod stats;
pub mod transfer;

pub use error::{Error, Result};
