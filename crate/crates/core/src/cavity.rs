//! Readout-mode physics.
//!
//! The electron centre-of-mass (COM) mode and the cavity readout mode are
//! treated as two classical complex amplitudes, normalised so that `|a|²`
//! counts energy quanta, coupled by the beam-splitter interaction
//! `g (a_e† a_p + a_e a_p†)`. An ensemble of N electrons couples through its
//! COM mode with `g√N`.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::consts::{db_to_linear, thermal_occupancy, watts_to_dbm, BOLTZMANN, HBAR};
use crate::error::{Error, Result};

/// Largest `dt·max(κ, g√N)` accepted by the stepper.
pub const MAX_STEP_PRODUCT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    /// ω_c, rad/s.
    pub resonance_frequency: f64,
    pub q_internal: f64,
    /// May be `f64::INFINITY` for an unloaded mode.
    pub q_external: f64,
    /// K.
    pub mode_temperature: f64,
    /// Measured total linewidth κ (rad/s) overriding the Q-derived value.
    #[serde(default)]
    pub linewidth_override: Option<f64>,
}

/// Energy decay rates of the mode, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linewidth {
    pub kappa: f64,
    pub kappa_in: f64,
    pub kappa_ex: f64,
}

impl Linewidth {
    /// Fraction of the decay that leaves through the measurement port.
    pub fn extraction(&self) -> f64 {
        if self.kappa > 0.0 {
            self.kappa_ex / self.kappa
        } else {
            0.0
        }
    }
}

impl CavityMode {
    pub fn new(resonance_frequency: f64, q_internal: f64, q_external: f64, mode_temperature: f64) -> Result<Self> {
        let mode = Self {
            resonance_frequency,
            q_internal,
            q_external,
            mode_temperature,
            linewidth_override: None,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn with_linewidth(mut self, kappa: f64) -> Self {
        self.linewidth_override = Some(kappa);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::param("cavity", format!("{what} must be positive")));
        if !(self.resonance_frequency > 0.0) || !self.resonance_frequency.is_finite() {
            return bad("resonance frequency");
        }
        if !(self.q_internal > 0.0) || !self.q_internal.is_finite() {
            return bad("internal Q");
        }
        if !(self.q_external > 0.0) {
            return bad("external Q");
        }
        if !(self.mode_temperature >= 0.0) {
            return Err(Error::param("cavity", "mode temperature must be non-negative"));
        }
        if let Some(k) = self.linewidth_override {
            if !(k > 0.0) || !k.is_finite() {
                return bad("linewidth override");
            }
        }
        Ok(())
    }

    pub fn loaded_q(&self) -> f64 {
        1.0 / (1.0 / self.q_internal + 1.0 / self.q_external)
    }

    /// Linewidth used by the dynamics: the override if present, split between
    /// internal and external loss in the Q-derived proportion.
    pub fn effective_linewidth(&self) -> Linewidth {
        let from_q = loaded_linewidth(self);
        match self.linewidth_override {
            None => from_q,
            Some(kappa) => {
                let kappa_ex = kappa * from_q.extraction();
                Linewidth {
                    kappa,
                    kappa_in: kappa - kappa_ex,
                    kappa_ex,
                }
            }
        }
    }

    /// Mean thermal photon number of the mode.
    pub fn thermal_occupancy(&self) -> f64 {
        thermal_occupancy(self.mode_temperature, self.resonance_frequency)
    }
}

/// `κ_in = ω/Q_in`, `κ_ex = ω/Q_ex`, `κ = κ_in + κ_ex` from the quality
/// factors alone.
pub fn loaded_linewidth(mode: &CavityMode) -> Linewidth {
    let kappa_in = mode.resonance_frequency / mode.q_internal;
    let kappa_ex = mode.resonance_frequency / mode.q_external;
    Linewidth {
        kappa: kappa_in + kappa_ex,
        kappa_in,
        kappa_ex,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    /// Single-electron coupling g, rad/s.
    pub g: f64,
    /// ω_z − ω_c, rad/s.
    pub detuning: f64,
}

impl CouplingParams {
    pub fn new(g: f64, detuning: f64) -> Self {
        Self { g, detuning }
    }

    /// COM coupling `g√N`.
    pub fn collective(&self, n_electrons: f64) -> f64 {
        self.g * n_electrons.max(0.0).sqrt()
    }

    /// Same detuning with the coupling scaled to an N-electron COM mode.
    pub fn for_ensemble(&self, n_electrons: f64) -> Self {
        Self {
            g: self.collective(n_electrons),
            detuning: self.detuning,
        }
    }
}

/// Resistive-cooling (energy damping) rate of the oscillator through the
/// cavity: `4g²κ / (κ² + 4Δ²)`, which is `4g²/κ` on resonance.
pub fn cooling_rate(coupling: &CouplingParams, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::param("cavity", format!("kappa must be positive, got {kappa}")));
    }
    let d = coupling.detuning;
    Ok(4.0 * coupling.g * coupling.g * kappa / (kappa * kappa + 4.0 * d * d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledState {
    /// COM-mode amplitude, |a|² in quanta.
    pub electron_amplitude: Complex64,
    /// Intracavity amplitude, |a|² in photons.
    pub photon_amplitude: Complex64,
    pub n_electrons: f64,
    /// K.
    pub electron_temperature: f64,
}

impl CoupledState {
    pub fn empty() -> Self {
        Self {
            electron_amplitude: Complex64::new(0.0, 0.0),
            photon_amplitude: Complex64::new(0.0, 0.0),
            n_electrons: 0.0,
            electron_temperature: 0.0,
        }
    }

    pub fn electron_energy(&self) -> f64 {
        self.electron_amplitude.norm_sqr()
    }

    pub fn photon_energy(&self) -> f64 {
        self.photon_amplitude.norm_sqr()
    }
}

/// Reservoirs acting on the two modes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Baths {
    /// Intrinsic electron energy damping γ_e0, 1/s.
    pub electron_damping: f64,
    /// Mean occupancy of the electron's own bath.
    pub electron_occupancy: f64,
    /// Mean occupancy of the cavity bath.
    pub cavity_occupancy: f64,
    /// Phenomenological heating of the COM mode, quanta/s.
    pub electron_heating: f64,
}

/// Exact one-step propagator of the 2×2 linear system plus the per-step
/// noise variances. Reusable while the parameters stay fixed.
#[derive(Debug, Clone, Copy)]
pub struct Propagator {
    matrix: [[Complex64; 2]; 2],
    electron_noise_var: f64,
    cavity_noise_var: f64,
}

impl Propagator {
    /// `collective_coupling` is `g√N`.
    pub fn new(collective_coupling: f64, detuning: f64, kappa: f64, baths: &Baths, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::param("cavity", "dt must be positive"));
        }
        if !(kappa >= 0.0) || !(baths.electron_damping >= 0.0) || !(baths.electron_heating >= 0.0) {
            return Err(Error::param("cavity", "rates must be non-negative"));
        }
        let worst = kappa.max(collective_coupling.abs());
        if worst * dt >= MAX_STEP_PRODUCT {
            return Err(Error::Resolution {
                module: "cavity",
                detail: format!(
                    "dt·max(κ, g√N) = {:.3} must stay below {MAX_STEP_PRODUCT}",
                    worst * dt
                ),
            });
        }
        let i = Complex64::i();
        let m11 = -i * detuning - baths.electron_damping / 2.0;
        let m12 = -i * collective_coupling;
        let m22 = Complex64::new(-kappa / 2.0, 0.0);
        let mu = (m11 + m22) / 2.0;
        let half_diff = (m11 - m22) / 2.0;
        let s = (half_diff * half_diff + m12 * m12).sqrt();
        let st = s * dt;
        let sinc = if st.norm() < 1e-8 {
            Complex64::new(dt, 0.0) * (Complex64::new(1.0, 0.0) + st * st / 6.0)
        } else {
            st.sinh() / s
        };
        let c = st.cosh();
        let scale = (mu * dt).exp();
        let matrix = [
            [scale * (c + sinc * half_diff), scale * sinc * m12],
            [scale * sinc * m12, scale * (c - sinc * half_diff)],
        ];
        Ok(Self {
            matrix,
            electron_noise_var: baths.electron_occupancy
                * (-(-baths.electron_damping * dt).exp_m1())
                + baths.electron_heating * dt,
            cavity_noise_var: baths.cavity_occupancy * (-(-kappa * dt).exp_m1()),
        })
    }

    /// Advances the amplitudes in place. With `noise = None` the evolution
    /// is deterministic and noise-free.
    #[inline]
    pub fn apply<R: Rng + ?Sized>(&self, ae: &mut Complex64, ap: &mut Complex64, noise: Option<&mut R>) {
        let m = &self.matrix;
        let e = m[0][0] * *ae + m[0][1] * *ap;
        let p = m[1][0] * *ae + m[1][1] * *ap;
        *ae = e;
        *ap = p;
        if let Some(rng) = noise {
            if self.electron_noise_var > 0.0 {
                *ae += complex_gaussian(rng, self.electron_noise_var);
            }
            if self.cavity_noise_var > 0.0 {
                *ap += complex_gaussian(rng, self.cavity_noise_var);
            }
        }
    }
}

/// Circular complex Gaussian with `E|z|² = variance`.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

/// One step of the rotating-frame coupled-mode equations
///
/// ```text
/// da_e/dt = −iΔ a_e − i g√N a_p − (γ_e0/2) a_e + ξ_e
/// da_p/dt = −i g√N a_e − (κ/2) a_p + ξ_p
/// ```
///
/// The linear part is propagated exactly over `dt`; thermal drives follow
/// the fluctuation–dissipation relation of each bath. `noise = None` turns
/// all stochastic terms off.
pub fn step_coupled_modes<R: Rng + ?Sized>(
    state: &CoupledState,
    coupling: &CouplingParams,
    kappa: f64,
    baths: &Baths,
    dt: f64,
    noise: Option<&mut R>,
) -> Result<CoupledState> {
    let prop = Propagator::new(coupling.collective(state.n_electrons), coupling.detuning, kappa, baths, dt)?;
    let mut next = *state;
    prop.apply(&mut next.electron_amplitude, &mut next.photon_amplitude, noise);
    Ok(next)
}

/// One element of the detection chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStage {
    pub name: String,
    /// Suppression of the trap drive, dB.
    pub suppression_db: f64,
    /// Transmission of the readout signal, dB (≤ 0 for a lossy stage).
    pub transmission_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterChain {
    pub stages: Vec<FilterStage>,
    /// Post-chain amplification, dB.
    pub gain_db: f64,
}

impl FilterChain {
    /// Port placement at the trapping-mode node, hybrid-coupler
    /// cancellation and a pair of low-pass filters, followed by 62 dB of
    /// amplification.
    pub fn reference() -> Self {
        let stage = |name: &str, suppression_db| FilterStage {
            name: name.to_owned(),
            suppression_db,
            transmission_db: 0.0,
        };
        Self {
            stages: vec![
                stage("node_placement", 30.0),
                stage("hybrid_interference", 16.0),
                stage("low_pass_pair", 80.0),
            ],
            gain_db: 62.0,
        }
    }

    /// Net gain applied to the readout signal, dB.
    pub fn readout_gain_db(&self) -> f64 {
        self.stages.iter().fold(self.gain_db, |acc, s| acc + s.transmission_db)
    }

    /// Stage table with the running suppression total.
    pub fn report(&self) -> String {
        let mut out = String::from("stage,suppression_dB,transmission_dB,cumulative_suppression_dB\n");
        let mut total = 0.0;
        for s in &self.stages {
            total += s.suppression_db;
            let _ = writeln!(out, "{},{},{},{}", s.name, s.suppression_db, s.transmission_db, total);
        }
        let _ = writeln!(out, "total suppression: {} dB", filter_budget(self));
        let _ = writeln!(out, "amplifier gain: {} dB", self.gain_db);
        let _ = writeln!(out, "readout gain: {} dB", self.readout_gain_db());
        out
    }
}

/// Total suppression of the trap drive, dB.
pub fn filter_budget(chain: &FilterChain) -> f64 {
    chain.stages.iter().fold(0.0, |acc, s| acc + s.suppression_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Power {
    pub watts: f64,
    pub dbm: f64,
}

impl Power {
    pub fn from_watts(watts: f64) -> Self {
        Self {
            watts,
            dbm: watts_to_dbm(watts),
        }
    }
}

/// Detected power of the intracavity field: `κ_ex ħω_c |a_p|²` (the share of
/// the cavity's energy loss that exits through the readout port) scaled by
/// the chain's readout gain. The noise floor is accounted separately by
/// [`noise_floor`].
pub fn output_power(state: &CoupledState, mode: &CavityMode, chain: &FilterChain) -> Power {
    let lw = mode.effective_linewidth();
    Power::from_watts(
        lw.kappa_ex * HBAR * mode.resonance_frequency * state.photon_energy()
            * db_to_linear(chain.readout_gain_db()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloor {
    /// Thermal photon noise, W.
    pub thermal: f64,
    /// Everything else (amplifier, residual leakage), W.
    pub residual: f64,
}

impl NoiseFloor {
    pub fn total(&self) -> f64 {
        self.thermal + self.residual
    }

    pub fn thermal_share(&self) -> f64 {
        self.thermal / self.total()
    }
}

/// Default fraction of the floor attributed to thermal cavity photons.
pub const DEFAULT_THERMAL_SHARE: f64 = 0.87;

/// Noise floor at the detector: `k_B T B κ_ex/κ` times the readout gain,
/// plus a residual sized so that the thermal part is `thermal_share` of the
/// total.
pub fn noise_floor(
    mode: &CavityMode,
    resolution_bandwidth: f64,
    chain: &FilterChain,
    thermal_share: f64,
) -> Result<NoiseFloor> {
    if !(resolution_bandwidth > 0.0) {
        return Err(Error::param("cavity", "resolution bandwidth must be positive"));
    }
    if !(thermal_share > 0.0 && thermal_share <= 1.0) {
        return Err(Error::param("cavity", "thermal share must lie in (0, 1]"));
    }
    let lw = mode.effective_linewidth();
    let thermal = BOLTZMANN * mode.mode_temperature * resolution_bandwidth * lw.extraction()
        * db_to_linear(chain.readout_gain_db());
    Ok(NoiseFloor {
        thermal,
        residual: thermal * (1.0 - thermal_share) / thermal_share,
    })
}
