//! Relay potential fields on tabular MDPs.
//!
//! The crate is organised around a handful of independent pieces:
//!
//! * [`env`] builds tabular environments (island, bottleneck grid, three-ring
//!   manifold) and samples trajectories on them.
//! * [`potentials`] solves value, uncertainty and relay fixed points, with a
//!   brute-force path oracle for cross-checking.
//! * [`efe`] holds the free-energy identities and Gaussian variance proxies.
//! * [`sampler`] covers optimal importance proposals and the chi-square speedup.
//! * [`topology`] measures conductance, spectral gap and hitting times.
//! * [`agent`] is the anchor generator and the Dyna-style training loop.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Tabular code indexes several parallel arrays by state.
#![allow(clippy::needless_range_loop)]

pub mod agent;
pub mod efe;
pub mod env;
mod error;
pub mod potentials;
pub mod rng;
pub mod sampler;
pub mod topology;

pub use error::{Error, Result};
