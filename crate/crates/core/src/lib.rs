//! Desk-scale simulator for electrons confined in a microwave Paul trap and
//! detected through the image current they induce in a cavity readout mode.
//!
//! The crate is organised bottom-up:
//!
//! * [`mathieu`]: motion in an oscillating quadrupole field, Floquet analysis
//!   and the pseudo-potential approximation.
//! * [`potential`]: the even-polynomial anharmonic pseudo-potential, field-map
//!   ingestion and amplitude-dependent secular frequencies.
//! * [`cavity`]: readout-mode linewidths, resistive cooling, coupled-mode
//!   dynamics, the filter/amplifier chain and the thermal noise floor.
//! * [`sequence`]: drive-amplitude programs, loading events and simulated
//!   zero-span / swept acquisitions.
//! * [`analysis`]: decay and Gaussian fits, SNR and electron-number estimates.
//! * [`config`] and [`trace`]: the run-config format and trace files.

pub mod analysis;
pub mod cavity;
pub mod config;
pub mod consts;
pub mod error;
pub mod mathieu;
pub mod potential;
pub mod sequence;
pub mod trace;

mod digest;

pub use error::{Error, Result};
