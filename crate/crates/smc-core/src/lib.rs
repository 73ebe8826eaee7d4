//! Parallel sequential Monte Carlo toolkit.
//!
//! The crate is organised in layers:
//!
//! - [`comm`]: rank-addressed SPMD communicator over in-process workers, with
//!   the point-to-point and collective primitives the parallel kernels need.
//! - [`kernels`]: sorting-network kernels over (copy-count, particle) pairs —
//!   parallel bitonic sort, sequential nearly sort, nearly merge and parallel
//!   nearly sort.
//! - [`resample`]: weight normalisation, effective sample size, minimum
//!   variance resampling and the sequential / centralised / bitonic-sort /
//!   nearly-sort redistribute variants.
//! - [`samplers`]: SIR particle filter, SMC sampler with recycling, and
//!   Metropolis-Hastings.
//! - [`models`]: case-study models (stochastic volatility, bearing-only
//!   tracking, Student-t target) plus a linear-Gaussian model with a Kalman
//!   filter oracle for validation.

pub mod comm;
pub mod error;
pub mod kernels;
pub mod meter;
pub mod models;
pub mod resample;
pub mod rng;
pub mod samplers;

pub use comm::{spawn_group, spawn_group_with, Communicator, GroupOptions, Message, Payload};
pub use error::{Result, SmcError};
