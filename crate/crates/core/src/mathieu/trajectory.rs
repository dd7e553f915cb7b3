use serde::{Deserialize, Serialize};

use super::{stability_parameters, MathieuParams, TrapDrive};
use crate::consts::Particle;
use crate::error::{Error, Result};

/// Minimum number of integration steps per drive period.
pub const MIN_STEPS_PER_PERIOD: f64 = 50.0;
/// Default number of steps per drive period.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 128;

/// Step of `DEFAULT_STEPS_PER_PERIOD` points per drive period, s.
pub fn default_time_step(drive: &TrapDrive) -> f64 {
    std::f64::consts::TAU / drive.drive_angular_frequency / DEFAULT_STEPS_PER_PERIOD as f64
}

/// Spatial shape of the oscillating field along the integrated axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FieldProfile {
    /// `E(x) = G·V·x`.
    Quadrupole,
    /// Field whose pseudo-potential is `∝ x² + c4 x⁴ + c6 x⁶`, i.e.
    /// `E(x) = G·V·x·sqrt(1 + c4 x² + c6 x⁴)`; coefficients in m⁻², m⁻⁴.
    Anharmonic { c4: f64, c6: f64 },
}

impl FieldProfile {
    #[inline]
    fn shape(&self, x: f64) -> f64 {
        match *self {
            FieldProfile::Quadrupole => x,
            FieldProfile::Anharmonic { c4, c6 } => {
                let x2 = x * x;
                x * (1.0 + c4 * x2 + c6 * x2 * x2).max(0.0).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub profile: FieldProfile,
    /// Half-width of the region where the field description holds, m.
    /// Leaving it ends the integration with an [`EscapeEvent`].
    pub domain_half_width: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            profile: FieldProfile::Quadrupole,
            // Half of the 400 um pin gap.
            domain_half_width: 200e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeEvent {
    /// Time at which the domain was left, s.
    pub time: f64,
    /// Position at that time, m.
    pub position: f64,
}

/// Uniformly sampled single-axis trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Sample spacing, s.
    pub time_step: f64,
    /// (position m, velocity m/s) per sample.
    pub samples: Vec<(f64, f64)>,
    /// Drive frequency the trajectory was produced with, rad/s, if any.
    pub drive_angular_frequency: Option<f64>,
    pub escape: Option<EscapeEvent>,
}

impl Trajectory {
    /// Wraps externally produced samples.
    pub fn from_samples(time_step: f64, samples: Vec<(f64, f64)>) -> Result<Self> {
        if !(time_step > 0.0) {
            return Err(Error::param("mathieu", "trajectory time step must be positive"));
        }
        if samples.len() < 2 {
            return Err(Error::param("mathieu", "trajectory needs at least two samples"));
        }
        Ok(Self {
            time_step,
            samples,
            drive_angular_frequency: None,
            escape: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.time_step
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    pub fn velocities(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }
}

/// Integrates `ẍ = (q_e/m) E(x) cos(Ωt)` (plus any static bias) with a
/// fixed-step velocity-Verlet scheme in the scaled time `τ = Ωt/2`.
///
/// `time_step` must resolve the micromotion (at least 50 steps per drive
/// period). Leaving the field domain is reported through
/// [`Trajectory::escape`] and truncates the record.
pub fn integrate_equation_of_motion(
    drive: &TrapDrive,
    particle: &Particle,
    initial: (f64, f64),
    duration: f64,
    time_step: f64,
    options: &IntegrationOptions,
) -> Result<Trajectory> {
    let MathieuParams { a, q } = stability_parameters(drive, particle)?;
    let omega = drive.drive_angular_frequency;
    let period = std::f64::consts::TAU / omega;
    if !(time_step > 0.0) || time_step > period / MIN_STEPS_PER_PERIOD * (1.0 + 1e-12) {
        return Err(Error::Resolution {
            module: "mathieu",
            detail: format!(
                "step {time_step:e} s exceeds drive period / {MIN_STEPS_PER_PERIOD} = {:e} s",
                period / MIN_STEPS_PER_PERIOD
            ),
        });
    }
    if !(duration > 0.0) {
        return Err(Error::param("mathieu", "duration must be positive"));
    }

    let steps = (duration / time_step).round().max(1.0) as usize;
    let half_omega = omega / 2.0;
    let dtau = half_omega * time_step;
    let profile = options.profile;
    let accel = |x: f64, tau: f64| -> f64 {
        -(a * x - 2.0 * q * (2.0 * tau).cos() * profile.shape(x))
    };

    // Velocities are carried as dx/dτ and converted on output.
    let (mut x, mut u) = (initial.0, initial.1 / half_omega);
    let mut acc = accel(x, 0.0);
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push((x, u * half_omega));
    let mut escape = None;
    for n in 0..steps {
        let tau_next = (n + 1) as f64 * dtau;
        x += u * dtau + 0.5 * acc * dtau * dtau;
        let acc_next = accel(x, tau_next);
        u += 0.5 * (acc + acc_next) * dtau;
        acc = acc_next;
        samples.push((x, u * half_omega));
        if !x.is_finite() || x.abs() > options.domain_half_width {
            escape = Some(EscapeEvent {
                time: (n + 1) as f64 * time_step,
                position: x,
            });
            break;
        }
    }
    Ok(Trajectory {
        time_step,
        samples,
        drive_angular_frequency: Some(omega),
        escape,
    })
}
