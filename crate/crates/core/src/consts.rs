//! Physical constants (CODATA 2018, SI).

use std::f64::consts::TAU;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Electron rest mass, kg.
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Joules per electron-volt.
pub const EV: f64 = ELEMENTARY_CHARGE;

/// Converts an ordinary frequency in Hz to angular frequency in rad/s.
#[inline]
pub fn angular(hz: f64) -> f64 {
    TAU * hz
}

/// Converts an angular frequency in rad/s to Hz.
#[inline]
pub fn hertz(rad_per_s: f64) -> f64 {
    rad_per_s / TAU
}

/// Power in watts to dBm.
#[inline]
pub fn watts_to_dbm(p: f64) -> f64 {
    10.0 * (p / 1e-3).log10()
}

/// Decibels to a linear power ratio.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Mean thermal occupancy of a mode in the classical (Rayleigh-Jeans) limit.
#[inline]
pub fn thermal_occupancy(temperature: f64, omega: f64) -> f64 {
    if temperature <= 0.0 {
        0.0
    } else {
        BOLTZMANN * temperature / (HBAR * omega)
    }
}

/// A point charge with its mass.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Particle {
    /// Charge, C (sign kept; only |charge| enters most formulas).
    pub charge: f64,
    /// Mass, kg.
    pub mass: f64,
}

impl Particle {
    pub const fn electron() -> Self {
        Self {
            charge: -ELEMENTARY_CHARGE,
            mass: ELECTRON_MASS,
        }
    }
}

impl Default for Particle {
    fn default() -> Self {
        Self::electron()
    }
}
