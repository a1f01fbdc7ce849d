//! Photocount statistics of single-mode chaotic lasers.
//!
//! A chaotic resonator lasing in a single mode couples to the outside world
//! through an escape rate that fluctuates from mode to mode. This crate
//! computes the stationary intracavity photon distribution, the resulting
//! photocount moments as a function of the escape rate, the chi-squared
//! ensemble of escape rates, and the ensemble distribution of photocount
//! moments, by a deterministic change of variables cross-validated against
//! Monte Carlo sampling.

pub mod asymptotics;
pub mod count_density;
pub mod error;
pub mod mode_ensemble;
pub mod numerics;
pub mod photon_stats;
pub mod response_curve;

pub use error::{Error, Result};
pub use mode_ensemble::{ModeEnsemble, RngHandle};
pub use photon_stats::{LaserParams, PhotonDistribution};
pub use response_curve::{ResponseCurve, ThresholdClass};
pub use count_density::{CountDensity, DensityMethod, MuGridSpec};
