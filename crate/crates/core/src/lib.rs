//! Decoherence of single-excitation spin-wave memories in cold atomic ensembles.
//!
//! The crate is `no_std` (with `alloc`) and carries only numerics:
//!
//! - [`physics`]: constants, thermal speeds, spin-wave wave vector geometry, collision rate.
//! - [`zeeman`]: ground-state sublevels, first-order Zeeman shifts and the clock pairs.
//! - [`ensemble`]: thermal atom sampling and Monte-Carlo retrieval efficiencies.
//! - [`analytic`]: closed-form decay laws, lifetimes and photon-correlation relations.
//! - [`photon`]: generative photon-counting trials and the `g_S,AS` estimator.
//! - [`fit`]: weighted Levenberg-Marquardt fitting of decay curves and thermometry.
//!
//! IO, configuration, thread pools and the command line live in the `coldmem` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analytic;
pub mod ensemble;
mod error;
pub mod fit;
pub mod photon;
pub mod physics;
pub mod runner;
pub mod zeeman;

pub use error::{Error, Result};
