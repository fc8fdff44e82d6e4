//! Continuous-measurement feedback cooling of a trapped atom.
//!
//! The crate integrates the conditional dynamics of a single atom imaged by
//! off-resonant light, with polynomial feedback on the trap, and aggregates
//! ensembles of such trajectories.

pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod feedback;
pub mod figures;
pub mod kernels;
pub mod meanfield;
pub mod noise;
pub mod params;
pub mod quadrature;
pub mod state;
pub mod validate;
