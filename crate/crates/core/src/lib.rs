//! Simulation and numerical verification toolkit for linear interacting
//! particle systems on the integer lattice `Z^d`.
//!
//! A linear system is driven by a random, bounded, finite-range branching
//! vector `K`. At the ring of site `z`'s clock the configuration is replaced
//! by `eta_z <- K_0 eta_z` and `eta_x <- eta_x + K_{x-z} eta_z` elsewhere. The
//! binary contact path process (BCPP) is the leading example.
//!
//! Modules:
//!
//! * [`kernel`]: branching kernels, their moment constants and structural checks.
//! * [`engine`]: exact event-driven simulation and ensemble observables.
//! * [`walk`]: the symmetrized random walk, Green functions and the survival criterion.
//! * [`feynman_kac`]: pair-chain rates, two-point oracles and weighted-walk estimators.
//! * [`stats`]: statistical checks built on the above.

pub mod engine;
pub mod error;
pub mod feynman_kac;
pub mod kernel;
pub mod lattice;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use kernel::{Kernel, KernelMoments, ValidationReport};
pub use lattice::Site;

/// Version tag embedded in every machine-readable artifact.
pub const FORMAT_VERSION: &str = "linsys/1";
