//! Simulation, extraction, filtering and scoring of non-invasive fetal ECG.
//!
//! The crate is organised bottom-up:
//!
//! * [`signal`] holds the record types, file formats, zero-phase filters and
//!   spectral estimators shared by everything else.
//! * [`ecg_model`] implements the Gaussian-kernel cycle model, phase wrapping,
//!   template averaging and kernel fitting.
//! * [`simulator`] projects maternal and fetal dipoles through a cylindrical
//!   volume conductor and returns mixtures with ground truth.
//! * [`detection`], [`extraction`], [`kalman`], [`quality`], [`scoring`] and
//!   [`fusion`] implement the processing chain and its evaluation.
//! * [`bench`] regenerates the benchmark experiments used by the acceptance
//!   suite and the `bench` command.

pub mod bench;
pub mod detection;
pub mod ecg_model;
pub mod error;
pub mod extraction;
pub mod fusion;
pub mod kalman;
pub mod quality;
pub mod rng;
pub mod scoring;
pub mod signal;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
