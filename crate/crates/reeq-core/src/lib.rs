//! Equilibrium pricing and estimation toolkit for a noisy rational
//! expectations economy with CARA investors.
//!
//! The crate has three layers:
//!
//! * [`model`], [`efficient`], [`riccati`] — the economy's matrix
//!   constructions, the closed-form efficient price, and the multi-start
//!   Newton solver that finds candidate equilibria and ranks them by the
//!   state-independent utility component.
//! * [`statespace`], [`kalman`], [`estimate`] — exact discretization of
//!   the continuous dynamics, diffuse-prior Kalman filtering, maximum
//!   likelihood under constrained (efficient-slope) and free coefficient
//!   structures, and the likelihood-ratio comparison.
//! * [`data`], [`series`] — price/dividend ingestion, de-trending and
//!   normalization, and the cointegrating OLS diagnostic.

pub mod data;
pub mod efficient;
pub mod error;
pub mod estimate;
pub mod kalman;
pub mod matexp;
pub mod model;
pub mod optim;
pub mod riccati;
pub mod series;
pub mod statespace;

pub use error::{Error, Result};
pub use model::{ModelParams, PriceCoefficients};
