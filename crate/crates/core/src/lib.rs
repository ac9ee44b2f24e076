//! Simulation and measurement toolkit for the hard-spheres Kac particle system.
//!
//! The crate is organised bottom-up:
//!
//! - [`kinetic`]: velocities, the binary collision rule, Maxwellians and the
//!   Boltzmann sphere, and the mean-field collision operator on point clouds.
//! - [`measure`]: finite weighted point clouds, possibly signed.
//! - [`kac`]: exact samplers for the N-particle jump process.
//! - [`metrics`]: the weighted Wasserstein distance (exact LP, dyadic upper
//!   bound, sampled lower witness), plain W1 transport and moment functionals.
//! - [`linearized`]: the signed branching process that represents the
//!   linearised flow in a prescribed environment.
//! - [`experiments`]: replicated studies producing [`experiments::StudyReport`]s.
//! - [`io`]: configuration, seeds and file formats.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod error;
pub mod experiments;
pub mod io;
pub mod kac;
pub mod kinetic;
pub mod linearized;
pub mod measure;
pub mod metrics;
pub mod rng;
pub mod stats;

pub use error::{KacError, Result};
pub use measure::WeightedPointCloud;
