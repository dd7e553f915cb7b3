//! Motion of a charge in an oscillating quadrupole field.
//!
//! Along one axis the equation of motion is the Mathieu equation
//! `x'' + (a - 2q cos 2τ) x = 0` in the scaled time `τ = Ωt/2`. Stable
//! solutions oscillate at the secular frequency `ω_z = βΩ/2`, where the
//! characteristic exponent β is obtained either from the classic continued
//! fraction ([`beta_continued_fraction`]) or from the one-period monodromy
//! matrix ([`floquet`]). Both routes are kept independent so they can check
//! each other.

pub mod floquet;
mod spectrum;
mod trajectory;

pub use floquet::{monodromy, stability_boundary, Monodromy};
pub use spectrum::extract_frequency;
pub use trajectory::{
    default_time_step, integrate_equation_of_motion, EscapeEvent, FieldProfile, IntegrationOptions,
    Trajectory, MIN_STEPS_PER_PERIOD,
};

use serde::{Deserialize, Serialize};

use crate::consts::Particle;
use crate::error::{Error, Result, StabilityBound};

/// Pin-voltage / secular-frequency pair that fixes the linear amplitude map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// V_ref, volts.
    pub reference_voltage: f64,
    /// ω_z at V_ref, rad/s.
    pub reference_secular_frequency: f64,
}

/// The trapping drive: frequency, amplitude and the geometry constant that
/// turns pin voltage into a field gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapDrive {
    /// Ω, rad/s.
    pub drive_angular_frequency: f64,
    /// Pin voltage amplitude V_MW, volts.
    pub drive_amplitude: f64,
    /// Field gradient per volt of pin amplitude, (V/m²)/V.
    pub field_gradient_per_volt: f64,
    /// Static confining gradient, V/m². Zero unless a DC bias is configured.
    #[serde(default)]
    pub static_gradient: f64,
    pub calibration: Calibration,
}

impl TrapDrive {
    /// Builds a drive whose geometry constant makes `reference_voltage`
    /// produce stability parameter `reference_q`. The drive amplitude is set
    /// to the reference voltage.
    pub fn calibrated(
        drive_angular_frequency: f64,
        reference_voltage: f64,
        reference_q: f64,
        reference_secular_frequency: f64,
        particle: Particle,
    ) -> Result<Self> {
        if !(drive_angular_frequency > 0.0) || !drive_angular_frequency.is_finite() {
            return Err(Error::InvalidDrive(format!(
                "drive angular frequency must be positive, got {drive_angular_frequency}"
            )));
        }
        if !(reference_voltage > 0.0) {
            return Err(Error::InvalidDrive(format!(
                "calibration voltage must be positive, got {reference_voltage}"
            )));
        }
        check_particle(&particle)?;
        let gradient = reference_q * particle.mass * drive_angular_frequency.powi(2)
            / (2.0 * particle.charge.abs() * reference_voltage);
        Ok(Self {
            drive_angular_frequency,
            drive_amplitude: reference_voltage,
            field_gradient_per_volt: gradient,
            static_gradient: 0.0,
            calibration: Calibration {
                reference_voltage,
                reference_secular_frequency,
            },
        })
    }

    pub fn with_amplitude(mut self, volts: f64) -> Self {
        self.drive_amplitude = volts;
        self
    }

    /// Field gradient amplitude at the current drive amplitude, V/m².
    pub fn field_gradient(&self) -> f64 {
        self.field_gradient_per_volt * self.drive_amplitude
    }

    /// Secular frequency from the linear calibration `ω_ref · V / V_ref`.
    pub fn calibrated_secular_frequency(&self, volts: f64) -> f64 {
        self.calibration.reference_secular_frequency * volts / self.calibration.reference_voltage
    }

    fn validate(&self) -> Result<()> {
        let omega = self.drive_angular_frequency;
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidDrive(format!(
                "drive angular frequency must be positive, got {omega}"
            )));
        }
        if !(self.drive_amplitude >= 0.0) {
            return Err(Error::InvalidDrive(format!(
                "drive amplitude must be non-negative, got {}",
                self.drive_amplitude
            )));
        }
        if !(self.field_gradient_per_volt >= 0.0) {
            return Err(Error::InvalidDrive(format!(
                "field gradient per volt must be non-negative, got {}",
                self.field_gradient_per_volt
            )));
        }
        Ok(())
    }
}

/// Dimensionless Mathieu parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MathieuParams {
    pub a: f64,
    pub q: f64,
}

impl MathieuParams {
    pub const fn new(a: f64, q: f64) -> Self {
        Self { a, q }
    }
}

fn check_particle(p: &Particle) -> Result<()> {
    if p.charge == 0.0 || !p.charge.is_finite() || !(p.mass > 0.0) {
        return Err(Error::param(
            "mathieu",
            format!("particle needs nonzero charge and positive mass, got {p:?}"),
        ));
    }
    Ok(())
}

/// (a, q) for the given drive and particle:
/// `q = 2|e|·G·V / (m Ω²)`, `a = 4|e|·G_dc / (m Ω²)`.
pub fn stability_parameters(drive: &TrapDrive, particle: &Particle) -> Result<MathieuParams> {
    drive.validate()?;
    check_particle(particle)?;
    let scale = particle.charge.abs() / (particle.mass * drive.drive_angular_frequency.powi(2));
    Ok(MathieuParams {
        a: 4.0 * scale * drive.static_gradient,
        q: 2.0 * scale * drive.field_gradient(),
    })
}

/// Sum of the two continued fractions `q²/((β±2)² - a - q²/((β±4)² - a - …))`.
fn continued_fraction_sum(beta: f64, a: f64, q2: f64) -> f64 {
    let branch = |sign: f64, depth: usize| {
        let mut tail = 0.0;
        for k in (1..=depth).rev() {
            let shifted = beta + sign * 2.0 * k as f64;
            tail = q2 / (shifted * shifted - a - tail);
        }
        tail
    };
    let eval = |depth| branch(1.0, depth) + branch(-1.0, depth);
    let mut depth = 4;
    let mut prev = eval(depth);
    loop {
        depth *= 2;
        let next = eval(depth);
        if (next - prev).abs() <= 1e-16 * next.abs().max(1e-300) || depth >= 256 {
            return next;
        }
        prev = next;
    }
}

/// Characteristic exponent β of the lowest stability region, solved from the
/// continued-fraction relation `β² = a + R₊(β) + R₋(β)` to `tolerance` in β.
pub fn beta_continued_fraction(params: MathieuParams, tolerance: f64) -> Result<f64> {
    if !(tolerance > 0.0) {
        return Err(Error::param("mathieu", "tolerance must be positive"));
    }
    let MathieuParams { a, q } = params;
    if !a.is_finite() || !q.is_finite() {
        return Err(Error::param("mathieu", "non-finite Mathieu parameters"));
    }
    if q == 0.0 {
        return if a < 0.0 {
            Err(Error::Unstable { a, q, bound: StabilityBound::Lower })
        } else if a >= 1.0 {
            Err(Error::Unstable { a, q, bound: StabilityBound::Upper })
        } else {
            Ok(a.sqrt())
        };
    }
    let q2 = q * q;
    let residual = |beta: f64| beta * beta - a - continued_fraction_sum(beta, a, q2);

    let mut lo = 0.0;
    let mut hi = 1.0;
    let f_lo = residual(lo);
    let f_hi = residual(hi);
    if f_lo > 0.0 {
        return Err(Error::Unstable { a, q, bound: StabilityBound::Lower });
    }
    if !(f_hi > 0.0) {
        return Err(Error::Unstable { a, q, bound: StabilityBound::Upper });
    }

    // f is negative below the root and positive above it on [0, 1].
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = residual(mid);
        if f == 0.0 {
            return Ok(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Convergence target used by [`secular_frequency`].
pub const DEFAULT_BETA_TOLERANCE: f64 = 1e-13;

/// Secular angular frequency `β(a, q)·Ω/2`.
pub fn secular_frequency(params: MathieuParams, omega_drive: f64) -> Result<f64> {
    if !(omega_drive > 0.0) {
        return Err(Error::InvalidDrive(format!(
            "drive angular frequency must be positive, got {omega_drive}"
        )));
    }
    Ok(beta_continued_fraction(params, DEFAULT_BETA_TOLERANCE)? * omega_drive / 2.0)
}

/// Stability parameter q (at fixed `a`) whose exact secular frequency is
/// `omega_z`, by bisection on the continued-fraction exponent.
pub fn q_for_secular_frequency(omega_z: f64, omega_drive: f64, a: f64) -> Result<f64> {
    if !(omega_drive > 0.0) {
        return Err(Error::InvalidDrive(format!(
            "drive angular frequency must be positive, got {omega_drive}"
        )));
    }
    let target = 2.0 * omega_z / omega_drive;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::param(
            "mathieu",
            format!("secular/drive ratio {target} outside (0, 1)"),
        ));
    }
    let beta = |q: f64| beta_continued_fraction(MathieuParams::new(a, q), 1e-14);
    let (mut lo, mut hi) = (0.0, 0.9);
    if beta(hi)? < target {
        return Err(Error::param(
            "mathieu",
            "secular frequency not reachable for q <= 0.9",
        ));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if beta(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pseudo-potential `q_e² E² / (4 m Ω²)` in joules for field amplitude `E`.
pub fn pseudo_potential(field_amplitude: f64, omega_drive: f64, particle: &Particle) -> Result<f64> {
    if !(omega_drive > 0.0) {
        return Err(Error::InvalidDrive(format!(
            "drive angular frequency must be positive, got {omega_drive}"
        )));
    }
    check_particle(particle)?;
    Ok(particle.charge.powi(2) * field_amplitude.powi(2)
        / (4.0 * particle.mass * omega_drive.powi(2)))
}

/// Harmonic frequency of the pseudo-potential well of a pure quadrupole,
/// `qΩ/(2√2)`, the small-q limit of the secular frequency.
pub fn pseudo_potential_frequency(params: MathieuParams, omega_drive: f64) -> f64 {
    let q_term = params.q * params.q / 2.0;
    (params.a + q_term).max(0.0).sqrt() * omega_drive / 2.0
}
