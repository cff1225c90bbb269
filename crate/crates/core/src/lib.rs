//! Multi-anatomy undersampled MRI reconstruction.
//!
//! The crate unifies three ways of learning from several anatomies with one
//! code path:
//!
//! * one network per anatomy (OAON),
//! * one network trained on the round-robin mixture (MAON),
//! * one network whose 3x3 convolutions are shared while small learners
//!   (normalization, channel attention, series or parallel 1x1 adapters) are
//!   kept per anatomy and selected with an anatomy switch (MAPN).
//!
//! Everything below the models is framework free: [`numerics`] provides a
//! small tape-based reverse-mode autodiff over `f64` tensors, [`kspace`] the
//! centered FFT, Cartesian masks and data consistency.

pub mod config;
pub mod data;
pub mod error;
pub mod kspace;
pub mod learners;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
