//! Channel estimation for RIS-assisted multi-user uplink systems.
//!
//! The crate models a base station with a linear array, a rectangular
//! reconfigurable intelligent surface (RIS) and single-antenna users. It
//! provides:
//!
//! * correlated Rician channel statistics and sampling ([`channel_model`]),
//! * Hadamard RIS training patterns, orthogonal pilots and the pilot
//!   observation model ([`training`]),
//! * closed-form first and second moments of the cascaded channel
//!   ([`statistics`]),
//! * LS / LMMSE / grouping / correlated-grouping estimators with their
//!   error covariances and high-power floors ([`estimators`]),
//! * a seeded, order-independent Monte Carlo engine ([`montecarlo`]) and a
//!   CLI front end ([`cli`]).
//!
//! All numerical code is generic over the real scalar type (see [`Real`]);
//! the aliases at the crate root pin the `f64` instantiation used by the CLI.

// `!(x > y)` is used on purpose so that NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel_model;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod montecarlo;
pub mod report;
pub mod scalar;
pub mod statistics;
pub mod training;
pub mod validate;

pub use error::{Error, Result};
pub use scalar::{CMat, CVec, Cx, Real};

/// Double-precision instantiations.
pub type Geometry = channel_model::SystemGeometry<f64>;
pub type Fading = channel_model::FadingParams<f64>;
pub type Statistics = channel_model::ChannelStatistics<f64>;
pub type Realization = channel_model::ChannelRealization<f64>;
pub type Training = training::TrainingConfig<f64>;
pub type Moments = statistics::MomentSet<f64>;
pub type Estimator = estimators::LinearEstimator<f64>;
pub type Sweep = montecarlo::SweepConfig<f64>;

/// Complex double.
pub type C64 = Cx<f64>;
/// Dense complex double matrix.
pub type CMat64 = CMat<f64>;
/// Dense complex double vector.
pub type CVec64 = CVec<f64>;
