//! Measurement programs and their simulated acquisition.
//!
//! A [`SequenceProgram`] is a contiguous list of drive-amplitude segments
//! (constant or linearly ramped), one electron-loading event and an
//! acquisition setting. [`compile_sequence`] turns it into a piecewise-linear
//! COM-frequency schedule through the linear amplitude calibration, and
//! [`run_sequence`] steps the electron/cavity system along that schedule to
//! produce a zero-span power trace.
//!
//! The ensemble is split into frequency bins (one for a harmonic well).
//! Each bin is an independent COM mode with its own cavity field; bin powers
//! add incoherently. The cavity's thermal photons are not propagated through
//! the signal channel: they appear in the detector floor, and their
//! back-action on the electrons enters as a heating term `γ(Δ)·n̄_cav`, which
//! relaxes each bin towards the cavity temperature.
//!
//! Loading deposits `k_B T_load / ħω` quanta in every bin at the midpoint of
//! the loading window, with a random phase when noise is enabled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{
    cooling_rate, noise_floor, output_power, Baths, CavityMode, CoupledState,
    CouplingParams, FilterChain, Propagator, DEFAULT_THERMAL_SHARE,
};
use crate::consts::thermal_occupancy;
use crate::digest;
use crate::error::{Error, Result};
use crate::mathieu::{Calibration, TrapDrive};
use crate::potential::{frequency_distribution, PotentialModel};
use crate::trace::{Trace, TraceKind, TraceMetadata};

use num_complex::Complex64;

/// Default number of frequency bins for an anharmonic ensemble.
pub const DEFAULT_BINS: usize = 64;

/// Target `dt·max(κ, g√N)` used when choosing the integration step.
const STEP_PRODUCT: f64 = 0.05;

/// Detuning drift (in units of κ) tolerated before the propagator is rebuilt
/// during a ramp.
const DETUNING_TOLERANCE: f64 = 0.01;

/// Drive amplitude of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amplitude {
    /// Fraction of the calibration voltage (1.0 = 100 %).
    Relative(f64),
    Volts(f64),
}

impl Amplitude {
    pub fn volts(&self, calibration: &Calibration) -> f64 {
        match *self {
            Amplitude::Relative(f) => f * calibration.reference_voltage,
            Amplitude::Volts(v) => v,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Amplitude::Relative(v) | Amplitude::Volts(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// s.
    pub start: f64,
    /// s.
    pub end: f64,
    pub amplitude: Amplitude,
    /// Amplitude reached at `end` by a linear ramp; constant if absent.
    #[serde(default)]
    pub ramp_to: Option<Amplitude>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingEvent {
    /// Start of the loading window, s.
    pub time: f64,
    /// s.
    pub duration: f64,
    pub n_loaded: u64,
    /// Temperature of the freshly loaded ensemble, K.
    pub initial_temperature: f64,
}

impl LoadingEvent {
    /// Energy is injected instantaneously at the window midpoint.
    pub fn injection_time(&self) -> f64 {
        self.time + self.duration / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    /// s.
    pub sample_interval: f64,
    /// Hz.
    pub resolution_bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceProgram {
    pub segments: Vec<Segment>,
    pub loading: LoadingEvent,
    pub acquisition: Acquisition,
}

impl SequenceProgram {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Program(m));
        let Some(first) = self.segments.first() else {
            return err("no segments".into());
        };
        let span_scale = (self.end() - first.start).abs().max(f64::MIN_POSITIVE);
        for (i, s) in self.segments.iter().enumerate() {
            if !s.start.is_finite() || !s.end.is_finite() || !(s.end > s.start) {
                return err(format!("segment {i} has non-positive duration"));
            }
            let amps = std::iter::once(s.amplitude).chain(s.ramp_to);
            for a in amps {
                if !(a.value() >= 0.0) || !a.value().is_finite() {
                    return err(format!("segment {i} has an invalid amplitude"));
                }
            }
            if i > 0 {
                let prev = &self.segments[i - 1];
                let gap = s.start - prev.end;
                if gap < -1e-12 * span_scale {
                    return err(format!("segment {i} overlaps segment {}", i - 1));
                }
                if gap > 1e-12 * span_scale {
                    return err(format!("gap between segment {} and segment {i}", i - 1));
                }
            }
        }
        let l = &self.loading;
        if !(l.duration > 0.0) || !l.duration.is_finite() {
            return err("loading duration must be positive".into());
        }
        if !(l.initial_temperature >= 0.0) {
            return err("loading temperature must be non-negative".into());
        }
        if l.time < self.start() || l.time + l.duration > self.end() {
            return err("loading event lies outside the program span".into());
        }
        let a = &self.acquisition;
        if !(a.sample_interval > 0.0) || a.sample_interval > self.span() {
            return err("sample interval must be positive and no longer than the program".into());
        }
        if !(a.resolution_bandwidth > 0.0) {
            return err("resolution bandwidth must be positive".into());
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.start)
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start()
    }

    /// `floor(span / sample_interval) + 1`.
    pub fn sample_count(&self) -> usize {
        (self.span() / self.acquisition.sample_interval + 1e-9).floor() as usize + 1
    }

    /// The same program moved by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> Self {
        let mut p = self.clone();
        for s in &mut p.segments {
            s.start += dt;
            s.end += dt;
        }
        p.loading.time += dt;
        p
    }
}

/// Linear piece of the compiled COM-frequency schedule. Times are relative
/// to the program start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePiece {
    pub start: f64,
    pub end: f64,
    /// rad/s.
    pub omega_start: f64,
    /// rad/s.
    pub omega_end: f64,
}

impl SchedulePiece {
    pub fn is_ramp(&self) -> bool {
        self.omega_start != self.omega_end
    }

    pub fn omega_at(&self, t: f64) -> f64 {
        let f = ((t - self.start) / (self.end - self.start)).clamp(0.0, 1.0);
        self.omega_start + (self.omega_end - self.omega_start) * f
    }
}

/// Piecewise-linear ω_z(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Absolute time of the program start, s.
    pub origin: f64,
    pub pieces: Vec<SchedulePiece>,
}

impl Schedule {
    fn piece_index(&self, t_rel: f64) -> usize {
        self.pieces
            .iter()
            .position(|p| t_rel < p.end)
            .unwrap_or(self.pieces.len() - 1)
    }

    /// ω_z at `t_rel` seconds after the program start.
    pub fn omega_at(&self, t_rel: f64) -> f64 {
        self.pieces[self.piece_index(t_rel)].omega_at(t_rel)
    }

    /// The ramp with the widest frequency excursion (the later one on ties).
    pub fn sweep_piece(&self) -> Option<&SchedulePiece> {
        self.pieces
            .iter()
            .filter(|p| p.is_ramp())
            .fold(None, |best: Option<&SchedulePiece>, p| match best {
                Some(b) if (b.omega_end - b.omega_start).abs() > (p.omega_end - p.omega_start).abs() => {
                    Some(b)
                }
                _ => Some(p),
            })
    }
}

/// Maps each segment's amplitude to ω_z with the linear calibration
/// `ω_ref·V/V_ref`; ramps stay linear in amplitude and hence in frequency.
pub fn compile_sequence(program: &SequenceProgram, drive: &TrapDrive) -> Result<Schedule> {
    program.validate()?;
    let origin = program.start();
    let cal = &drive.calibration;
    let omega = |a: &Amplitude| drive.calibrated_secular_frequency(a.volts(cal));
    let pieces = program
        .segments
        .iter()
        .map(|s| SchedulePiece {
            start: s.start - origin,
            end: s.end - origin,
            omega_start: omega(&s.amplitude),
            omega_end: omega(s.ramp_to.as_ref().unwrap_or(&s.amplitude)),
        })
        .collect();
    Ok(Schedule { origin, pieces })
}

/// Electron-side coupling and phenomenological knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronCoupling {
    /// Single-electron coupling g, rad/s.
    pub g: f64,
    /// Intrinsic energy damping γ_e0, 1/s (bath at the cavity temperature).
    #[serde(default)]
    pub intrinsic_damping: f64,
    /// Extra COM heating, quanta/s.
    #[serde(default)]
    pub heating_rate: f64,
}

/// Amplitude-dependent frequency spread of a thermal ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Broadening {
    pub model: PotentialModel,
    /// K.
    pub temperature: f64,
    pub bins: usize,
}

/// Everything besides the program that a run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub drive: TrapDrive,
    pub cavity: CavityMode,
    pub coupling: ElectronCoupling,
    pub chain: FilterChain,
    /// Thermal fraction of the detector floor.
    pub thermal_share: f64,
    /// Multiplier on the detected electron signal (1 = ideal harmonic
    /// ensemble).
    pub signal_fraction: f64,
    #[serde(default)]
    pub broadening: Option<Broadening>,
    /// Enables thermal drives, loading-energy sampling and floor
    /// fluctuations.
    pub noise: bool,
    /// Integration step override, s. Chosen automatically when absent.
    #[serde(default)]
    pub max_time_step: Option<f64>,
}

/// One frequency class of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBin {
    /// ω_bin / ω_z.
    pub relative_frequency: f64,
    pub n_electrons: f64,
}

impl Experiment {
    pub fn new(drive: TrapDrive, cavity: CavityMode, coupling: ElectronCoupling, chain: FilterChain) -> Self {
        Self {
            drive,
            cavity,
            coupling,
            chain,
            thermal_share: DEFAULT_THERMAL_SHARE,
            signal_fraction: 1.0,
            broadening: None,
            noise: true,
            max_time_step: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        let c = &self.coupling;
        if !(c.g >= 0.0) || !(c.intrinsic_damping >= 0.0) || !(c.heating_rate >= 0.0) {
            return Err(Error::param("sequence", "coupling, damping and heating must be non-negative"));
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction <= 1.0) {
            return Err(Error::param("sequence", "signal fraction must lie in (0, 1]"));
        }
        if let Some(b) = &self.broadening {
            if b.bins == 0 {
                return Err(Error::param("sequence", "bin count must be positive"));
            }
        }
        if let Some(h) = self.max_time_step {
            if !(h > 0.0) {
                return Err(Error::param("sequence", "time step must be positive"));
            }
        }
        Ok(())
    }

    /// Resonant energy decay rate of an N-electron harmonic COM mode,
    /// `4g²N/κ + γ_e0`.
    pub fn total_decay_rate(&self, n_electrons: f64) -> Result<f64> {
        let kappa = self.cavity.effective_linewidth().kappa;
        let g = CouplingParams::new(self.coupling.g, 0.0).for_ensemble(n_electrons);
        Ok(cooling_rate(&g, kappa)? + self.coupling.intrinsic_damping)
    }

    /// Frequency bins for `n` loaded electrons and the population lost above
    /// the well barrier.
    pub fn ensemble(&self, n: f64) -> Result<(Vec<EnsembleBin>, f64)> {
        match &self.broadening {
            Some(b) if b.model.c4 != 0.0 || b.model.c6 != 0.0 => {
                let dist = frequency_distribution(&b.model, b.temperature, b.bins)?;
                let bins = dist
                    .bins
                    .iter()
                    .map(|bin| EnsembleBin {
                        relative_frequency: bin.relative_frequency,
                        n_electrons: n * bin.weight,
                    })
                    .collect();
                Ok((bins, dist.unbound_fraction))
            }
            _ => Ok((
                vec![EnsembleBin {
                    relative_frequency: 1.0,
                    n_electrons: n,
                }],
                0.0,
            )),
        }
    }

    /// Detected power per intracavity photon, W.
    fn watts_per_photon(&self) -> f64 {
        let mut unit = CoupledState::empty();
        unit.photon_amplitude = Complex64::new(1.0, 0.0);
        output_power(&unit, &self.cavity, &self.chain).watts * self.signal_fraction
    }
}

/// A zero-span trace together with the hidden electron state.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRun {
    pub trace: Trace,
    /// Total COM energy summed over bins at each sample time, quanta.
    pub electron_energy: Vec<f64>,
    /// Electron contribution to each sample, W (the trace minus the floor).
    pub signal_watts: Vec<f64>,
    /// Integration step, s.
    pub time_step: f64,
    pub schedule: Schedule,
}

pub fn run_sequence(program: &SequenceProgram, experiment: &Experiment, seed: u64) -> Result<Trace> {
    run_sequence_detailed(program, experiment, seed).map(|r| r.trace)
}

struct BinPlan<'a> {
    schedule: &'a Schedule,
    dt: f64,
    steps_per_sample: usize,
    n_samples: usize,
    load_step: usize,
    load_temperature: f64,
    g: f64,
    kappa: f64,
    omega_c: f64,
    cavity_occupancy: f64,
    damping: f64,
    heating: f64,
    noise: bool,
    seed: u64,
}

struct BinRecord {
    /// Mean |a_p|² over each sample interval (instantaneous for sample 0).
    photons: Vec<f64>,
    /// |a_e|² at each sample time.
    energy: Vec<f64>,
}

impl BinPlan<'_> {
    fn time_of_step(&self, step: usize) -> f64 {
        self.schedule.origin + step as f64 * self.dt
    }

    fn propagator(&self, collective: f64, detuning: f64, step: usize) -> Result<Propagator> {
        let baths = if self.noise {
            let cooling = cooling_rate(&CouplingParams::new(collective, detuning), self.kappa)?;
            Baths {
                electron_damping: self.damping,
                electron_occupancy: self.cavity_occupancy,
                cavity_occupancy: 0.0,
                electron_heating: self.heating + cooling * self.cavity_occupancy,
            }
        } else {
            Baths {
                electron_damping: self.damping,
                ..Baths::default()
            }
        };
        Propagator::new(collective, detuning, self.kappa, &baths, self.dt).map_err(|e| Error::AtTime {
            time: self.time_of_step(step),
            source: Box::new(e),
        })
    }

    fn simulate(&self, bin: &EnsembleBin, stream: u64) -> Result<BinRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let collective = self.g * bin.n_electrons.sqrt();
        let tolerance = DETUNING_TOLERANCE * self.kappa;
        let detuning_at = |step: usize| {
            let t = (step as f64 + 0.5) * self.dt;
            self.schedule.omega_at(t) * bin.relative_frequency - self.omega_c
        };

        let mut ae = Complex64::new(0.0, 0.0);
        let mut ap = Complex64::new(0.0, 0.0);
        let mut loaded = false;
        let mut built: Option<(Propagator, f64)> = None;
        let mut photons = Vec::with_capacity(self.n_samples);
        let mut energy = Vec::with_capacity(self.n_samples);

        let inject = |ae: &mut Complex64, rng: &mut ChaCha8Rng| {
            let t = self.load_step as f64 * self.dt;
            let omega = self.schedule.omega_at(t) * bin.relative_frequency;
            let mean = thermal_occupancy(self.load_temperature, omega);
            *ae = if self.noise {
                let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                Complex64::from_polar(mean.sqrt(), phase)
            } else {
                Complex64::new(mean.sqrt(), 0.0)
            };
        };

        if self.load_step == 0 && bin.n_electrons > 0.0 {
            inject(&mut ae, &mut rng);
            loaded = true;
        }
        photons.push(ap.norm_sqr());
        energy.push(ae.norm_sqr());

        for sample in 1..self.n_samples {
            let mut acc = 0.0;
            for sub in 0..self.steps_per_sample {
                let step = (sample - 1) * self.steps_per_sample + sub;
                if !loaded && step == self.load_step && bin.n_electrons > 0.0 {
                    inject(&mut ae, &mut rng);
                    loaded = true;
                }
                if loaded {
                    let detuning = detuning_at(step);
                    let stale = match &built {
                        Some((_, d)) => (detuning - d).abs() > tolerance,
                        None => true,
                    };
                    if stale {
                        built = Some((self.propagator(collective, detuning, step)?, detuning));
                    }
                    let prop = &built.as_ref().expect("propagator built").0;
                    if self.noise {
                        prop.apply(&mut ae, &mut ap, Some(&mut rng));
                    } else {
                        prop.apply::<ChaCha8Rng>(&mut ae, &mut ap, None);
                    }
                }
                acc += ap.norm_sqr();
            }
            photons.push(acc / self.steps_per_sample as f64);
            energy.push(ae.norm_sqr());
        }
        Ok(BinRecord { photons, energy })
    }
}

/// Runs the program and returns the trace plus the electron energy record.
///
/// Sample 0 is taken instantaneously at the program start; sample `i`
/// averages the detected power over the preceding sample interval. Random
/// streams are derived from `seed` alone: stream 0 drives the detector
/// floor and stream `k + 1` drives bin `k`, so results do not depend on
/// thread scheduling.
pub fn run_sequence_detailed(
    program: &SequenceProgram,
    experiment: &Experiment,
    seed: u64,
) -> Result<SequenceRun> {
    experiment.validate()?;
    let schedule = compile_sequence(program, &experiment.drive)?;
    let lw = experiment.cavity.effective_linewidth();
    let kappa = lw.kappa;
    let n_samples = program.sample_count();
    let interval = program.acquisition.sample_interval;

    let load = &program.loading;
    let (bins, unbound) = experiment.ensemble(load.n_loaded as f64)?;
    let g_max = bins
        .iter()
        .map(|b| experiment.coupling.g * b.n_electrons.sqrt())
        .fold(0.0, f64::max);
    let dt_cap = experiment
        .max_time_step
        .unwrap_or(STEP_PRODUCT / kappa.max(g_max).max(f64::MIN_POSITIVE));
    let steps_per_sample = (interval / dt_cap).ceil().max(1.0) as usize;
    let dt = interval / steps_per_sample as f64;
    let load_rel = load.injection_time() - schedule.origin;
    let load_step = (load_rel / dt - 1e-9).ceil().max(0.0) as usize;

    let plan = BinPlan {
        schedule: &schedule,
        dt,
        steps_per_sample,
        n_samples,
        load_step,
        load_temperature: load.initial_temperature,
        g: experiment.coupling.g,
        kappa,
        omega_c: experiment.cavity.resonance_frequency,
        cavity_occupancy: experiment.cavity.thermal_occupancy(),
        damping: experiment.coupling.intrinsic_damping,
        heating: experiment.coupling.heating_rate,
        noise: experiment.noise,
        seed,
    };
    let records = bins
        .par_iter()
        .enumerate()
        .map(|(k, bin)| plan.simulate(bin, k as u64 + 1))
        .collect::<Result<Vec<_>>>()?;

    let per_photon = experiment.watts_per_photon();
    let mut signal = vec![0.0; n_samples];
    let mut electron_energy = vec![0.0; n_samples];
    for rec in &records {
        for i in 0..n_samples {
            signal[i] += rec.photons[i] * per_photon;
            electron_energy[i] += rec.energy[i];
        }
    }

    let floor = noise_floor(
        &experiment.cavity,
        program.acquisition.resolution_bandwidth,
        &experiment.chain,
        experiment.thermal_share,
    )?;
    let mut floor_rng = ChaCha8Rng::seed_from_u64(seed);
    floor_rng.set_stream(0);
    let shape = (program.acquisition.resolution_bandwidth * interval).max(1.0);
    let fluctuation = Gamma::new(shape, 1.0 / shape).map_err(|e| Error::param("sequence", e.to_string()))?;
    let y: Vec<f64> = signal
        .iter()
        .map(|&s| {
            let f = if experiment.noise {
                floor.total() * fluctuation.sample(&mut floor_rng)
            } else {
                floor.total()
            };
            s + f
        })
        .collect();
    let x: Vec<f64> = (0..n_samples).map(|i| schedule.origin + i as f64 * interval).collect();

    let mut warnings = Vec::new();
    if unbound > 0.0 {
        warnings.push(format!(
            "{:.3} % of the thermal ensemble is above the well barrier and was dropped",
            unbound * 100.0
        ));
    }
    let metadata = TraceMetadata {
        seed,
        config_digest: digest::of(experiment),
        program_digest: digest::of(program),
        noise: experiment.noise,
        floor_watts: floor.total(),
        thermal_floor_watts: floor.thermal,
        frequency_axis: None,
        warnings,
    };
    Ok(SequenceRun {
        trace: Trace::new(TraceKind::ZeroSpanTime, x, y, metadata)?,
        electron_energy,
        signal_watts: signal,
        time_step: dt,
        schedule,
    })
}

/// Runs the program and re-expresses the widest ramp of its zero-span trace
/// as power versus commanded COM frequency (Hz).
///
/// The frequency axis is the compiled schedule, not a measured frequency;
/// this is recorded in the trace metadata. A ramp that never reaches the
/// cavity resonance is flagged with a warning.
pub fn sweep_com_frequency(program: &SequenceProgram, experiment: &Experiment, seed: u64) -> Result<Trace> {
    let run = run_sequence_detailed(program, experiment, seed)?;
    sweep_from_run(&run, experiment)
}

/// The re-parameterisation step of [`sweep_com_frequency`] on an existing
/// run.
pub fn sweep_from_run(run: &SequenceRun, experiment: &Experiment) -> Result<Trace> {
    let schedule = &run.schedule;
    let ramp = *schedule
        .sweep_piece()
        .ok_or_else(|| Error::Program("a sweep needs at least one ramp segment".into()))?;
    let trace = &run.trace;
    let lo = schedule.origin + ramp.start;
    let hi = schedule.origin + ramp.end;
    let eps = 1e-9 * (ramp.end - ramp.start);
    let range = trace.window_indices(lo - eps, hi + eps);
    if range.len() < 2 {
        return Err(Error::Program("the sweep ramp spans fewer than two samples".into()));
    }
    let mut points: Vec<(f64, f64)> = range
        .map(|i| {
            let omega = ramp.omega_at(trace.x[i] - schedule.origin);
            (omega / std::f64::consts::TAU, trace.y[i])
        })
        .collect();
    if ramp.omega_end < ramp.omega_start {
        points.reverse();
    }
    let mut metadata = trace.metadata.clone();
    metadata.frequency_axis = Some("commanded".into());
    let omega_c = experiment.cavity.resonance_frequency;
    let (w_lo, w_hi) = (ramp.omega_start.min(ramp.omega_end), ramp.omega_start.max(ramp.omega_end));
    if omega_c < w_lo || omega_c > w_hi {
        metadata
            .warnings
            .push("sweep ramp does not cross the cavity resonance".into());
    }
    let (x, y) = points.into_iter().unzip();
    Trace::new(TraceKind::SpectrumVsFrequency, x, y, metadata)
}
