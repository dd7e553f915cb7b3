//! Run-configuration files.
//!
//! A flat, sectioned `key = value` format in which every physical quantity
//! carries its unit:
//!
//! ```text
//! seed = 42
//!
//! [trap]
//! drive_frequency = 3.105 GHz
//! reference_voltage = 1 V
//! reference_q = 0.56
//! reference_frequency = 619 MHz
//!
//! [cavity]
//! frequency = 619 MHz
//! q_internal = 1300
//! q_external = 20000
//! linewidth = 476 kHz
//! temperature = 300 K
//!
//! [chain]
//! stage = node_placement, 30 dB, 0 dB
//! gain = 62 dB
//!
//! [sequence]
//! segment = 0 ms, 20 ms, 100 %
//! segment = 20 ms, 80 ms, 90 %, 120 %
//! load = 5 ms, 3 ms, 1260, 3000 K
//! sample_interval = 0.1 ms
//! rbw = 1 Hz
//! ```
//!
//! Frequencies are written in Hz-type units and stored as angular
//! frequencies. Unknown sections or keys, repeated scalar keys and missing
//! units are errors that carry the offending line number.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{computed_degradation, DEFAULT_DEGRADATION};
use crate::cavity::{CavityMode, FilterChain, FilterStage, DEFAULT_THERMAL_SHARE};
use crate::consts::{angular, Particle};
use crate::digest;
use crate::error::{Error, Result};
use crate::mathieu::{secular_frequency, MathieuParams, TrapDrive};
use crate::potential::{fit_even_polynomial, FitWindow, PotentialModel, PotentialSamples};
use crate::sequence::{
    Acquisition, Amplitude, Broadening, ElectronCoupling, Experiment, LoadingEvent, Segment,
    SequenceProgram, DEFAULT_BINS,
};

/// Physical dimension expected for a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    /// Stored in Hz.
    Frequency,
    Time,
    Voltage,
    Temperature,
    Decibel,
    /// `%`, stored as a fraction.
    Fraction,
    Length,
    InverseArea,
    InverseQuartic,
    Rate,
    QuantaRate,
}

impl Dim {
    fn name(self) -> &'static str {
        match self {
            Dim::Frequency => "a frequency (Hz, kHz, MHz, GHz)",
            Dim::Time => "a time (s, ms, us, ns)",
            Dim::Voltage => "a voltage (V, mV, kV)",
            Dim::Temperature => "a temperature (K, mK)",
            Dim::Decibel => "a level in dB",
            Dim::Fraction => "a percentage (%)",
            Dim::Length => "a length (um, nm, mm)",
            Dim::InverseArea => "a coefficient in um^-2",
            Dim::InverseQuartic => "a coefficient in um^-4",
            Dim::Rate => "a rate in s^-1",
            Dim::QuantaRate => "a rate in quanta/s",
        }
    }

    fn scale(self, unit: &str) -> Option<f64> {
        let s = match (self, unit) {
            (Dim::Frequency, "Hz") => 1.0,
            (Dim::Frequency, "kHz") => 1e3,
            (Dim::Frequency, "MHz") => 1e6,
            (Dim::Frequency, "GHz") => 1e9,
            (Dim::Time, "s") => 1.0,
            (Dim::Time, "ms") => 1e-3,
            (Dim::Time, "us" | "µs") => 1e-6,
            (Dim::Time, "ns") => 1e-9,
            (Dim::Voltage, "V") => 1.0,
            (Dim::Voltage, "mV") => 1e-3,
            (Dim::Voltage, "kV") => 1e3,
            (Dim::Temperature, "K") => 1.0,
            (Dim::Temperature, "mK") => 1e-3,
            (Dim::Decibel, "dB") => 1.0,
            (Dim::Fraction, "%") => 1e-2,
            (Dim::Length, "um" | "µm") => 1.0,
            (Dim::Length, "nm") => 1e-3,
            (Dim::Length, "mm") => 1e3,
            (Dim::InverseArea, "um^-2" | "µm^-2") => 1.0,
            (Dim::InverseQuartic, "um^-4" | "µm^-4") => 1.0,
            (Dim::Rate, "s^-1" | "1/s") => 1.0,
            (Dim::QuantaRate, "quanta/s") => 1.0,
            _ => return None,
        };
        Some(s)
    }
}

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        file: None,
        line,
        message: message.into(),
    }
}

fn parse_number(text: &str, line: usize) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| cfg_err(line, format!("'{}' is not a number", text.trim())))?;
    if !v.is_finite() {
        return Err(cfg_err(line, format!("'{}' is not finite", text.trim())));
    }
    Ok(v)
}

/// Splits `"<number> <unit>"` (or `"<number><unit>"` for `%`).
fn split_quantity(text: &str) -> (&str, &str) {
    let t = text.trim();
    if let Some(pos) = t.find(char::is_whitespace) {
        (t[..pos].trim(), t[pos..].trim())
    } else if let Some(num) = t.strip_suffix('%') {
        (num, "%")
    } else {
        (t, "")
    }
}

fn quantity(text: &str, dim: Dim, line: usize) -> Result<f64> {
    let (num, unit) = split_quantity(text);
    if unit.is_empty() {
        return Err(cfg_err(line, format!("'{}' needs a unit: expected {}", text.trim(), dim.name())));
    }
    let scale = dim
        .scale(unit)
        .ok_or_else(|| cfg_err(line, format!("unit '{unit}' is not {}", dim.name())))?;
    Ok(parse_number(num, line)? * scale)
}

fn dimensionless(text: &str, line: usize) -> Result<f64> {
    let (num, unit) = split_quantity(text);
    if !unit.is_empty() {
        return Err(cfg_err(line, format!("'{}' is dimensionless; drop the unit '{unit}'", text.trim())));
    }
    parse_number(num, line)
}

fn count(text: &str, line: usize) -> Result<u64> {
    text.trim()
        .parse()
        .map_err(|_| cfg_err(line, format!("'{}' is not a non-negative integer", text.trim())))
}

fn boolean(text: &str, line: usize) -> Result<bool> {
    match text.trim() {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        other => Err(cfg_err(line, format!("'{other}' is not on/off"))),
    }
}

fn amplitude(text: &str, line: usize) -> Result<Amplitude> {
    let (_, unit) = split_quantity(text);
    match unit {
        "%" => Ok(Amplitude::Relative(quantity(text, Dim::Fraction, line)?)),
        _ => quantity(text, Dim::Voltage, line)
            .map(Amplitude::Volts)
            .map_err(|_| cfg_err(line, format!("amplitude '{}' must be in % or volts", text.trim()))),
    }
}

fn fields(text: &str, min: usize, max: usize, line: usize, what: &str) -> Result<Vec<String>> {
    let parts: Vec<String> = text.split(',').map(|s| s.trim().to_owned()).collect();
    if parts.len() < min || parts.len() > max || parts.iter().any(String::is_empty) {
        return Err(cfg_err(
            line,
            format!("{what} takes {min}{} comma-separated fields", if max > min { format!("-{max}") } else { String::new() }),
        ));
    }
    Ok(parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapSection {
    /// Ω, rad/s.
    pub drive_frequency: f64,
    /// V.
    pub reference_voltage: f64,
    pub reference_q: f64,
    /// ω_z at the reference voltage, rad/s. Computed from the Mathieu
    /// exponent when absent.
    pub reference_frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialSource {
    /// Coefficients given directly. `omega_z` defaults to the calibrated
    /// secular frequency.
    Explicit { omega_z: Option<f64>, c4: f64, c6: f64 },
    /// Even-polynomial fit to a sampled potential file.
    FieldMap { path: PathBuf, half_width_um: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSection {
    pub source: PotentialSource,
    /// Temperature of the ensemble whose frequency spread is simulated, K.
    pub broadening_temperature: Option<f64>,
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degradation {
    Fixed(f64),
    /// Overlap of the broadened ensemble with the cavity line.
    Computed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSection {
    pub thermal_share: f64,
    pub signal_fraction: f64,
    pub degradation: Degradation,
    /// Decay-fit window, s.
    pub fit_window: Option<(f64, f64)>,
    /// Window for the averaged SNR, s.
    pub snr_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub noise: bool,
    /// Integration step override, s.
    pub max_time_step: Option<f64>,
    pub trap: TrapSection,
    pub potential: PotentialSection,
    pub cavity: CavityMode,
    pub coupling: ElectronCoupling,
    pub chain: FilterChain,
    pub sequence: Option<SequenceProgram>,
    pub analysis: AnalysisSection,
    /// Directory against which relative paths are resolved.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    /// Reference device values, no sequence.
    fn default() -> Self {
        let omega_c = angular(619e6);
        Self {
            seed: 0,
            noise: true,
            max_time_step: None,
            trap: TrapSection {
                drive_frequency: angular(3.105e9),
                reference_voltage: 1.0,
                reference_q: 0.56,
                reference_frequency: Some(omega_c),
            },
            potential: PotentialSection {
                source: PotentialSource::Explicit {
                    omega_z: None,
                    c4: -1.5e-5,
                    c6: 0.0,
                },
                broadening_temperature: None,
                bins: DEFAULT_BINS,
            },
            cavity: CavityMode {
                resonance_frequency: omega_c,
                q_internal: 1300.0,
                q_external: 20000.0,
                mode_temperature: 300.0,
                linewidth_override: Some(angular(476e3)),
            },
            coupling: ElectronCoupling {
                g: angular(54e3),
                intrinsic_damping: 0.0,
                heating_rate: 0.0,
            },
            chain: FilterChain::reference(),
            sequence: None,
            analysis: AnalysisSection {
                thermal_share: DEFAULT_THERMAL_SHARE,
                signal_fraction: 1.0,
                degradation: Degradation::Fixed(DEFAULT_DEGRADATION),
                fit_window: None,
                snr_window: None,
            },
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Default)]
struct SequenceDraft {
    segments: Vec<Segment>,
    loading: Option<(LoadingEvent, usize)>,
    sample_interval: Option<f64>,
    rbw: Option<f64>,
    line: usize,
}

#[derive(Default)]
struct PotentialDraft {
    fieldmap: Option<PathBuf>,
    half_width: Option<f64>,
    omega_z: Option<f64>,
    c4: Option<f64>,
    c6: Option<f64>,
    line: usize,
}

impl RunConfig {
    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg = RunConfig {
            base_dir: base_dir.into(),
            ..RunConfig::default()
        };
        let mut section = String::new();
        let mut seen_sections: HashSet<String> = HashSet::new();
        let mut seen_keys: HashSet<(String, String)> = HashSet::new();
        let mut seq: Option<SequenceDraft> = None;
        let mut pot = PotentialDraft::default();
        let mut custom_chain: Option<Vec<FilterStage>> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(line, "unterminated section header"))?
                    .trim()
                    .to_owned();
                const SECTIONS: [&str; 8] =
                    ["trap", "potential", "cavity", "coupling", "chain", "sequence", "analysis", "run"];
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(cfg_err(line, format!("unknown section [{name}]")));
                }
                if !seen_sections.insert(name.clone()) {
                    return Err(cfg_err(line, format!("section [{name}] appears twice")));
                }
                match name.as_str() {
                    "sequence" => {
                        seq = Some(SequenceDraft {
                            line,
                            ..SequenceDraft::default()
                        })
                    }
                    "chain" => custom_chain = Some(Vec::new()),
                    "potential" => pot.line = line,
                    _ => {}
                }
                section = name;
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| cfg_err(line, format!("expected 'key = value', found '{content}'")))?;
            let key = key.trim();
            let value = value.trim();
            let repeatable = matches!((section.as_str(), key), ("chain", "stage") | ("sequence", "segment"));
            if !repeatable && !seen_keys.insert((section.clone(), key.to_owned())) {
                return Err(cfg_err(line, format!("'{key}' is set twice")));
            }
            let unknown = || cfg_err(line, format!("unknown key '{key}' in [{section}]"));
            let freq = |v: &str| quantity(v, Dim::Frequency, line).map(angular);

            match section.as_str() {
                "" | "run" => match key {
                    "seed" => cfg.seed = count(value, line)?,
                    "noise" => cfg.noise = boolean(value, line)?,
                    "max_time_step" => cfg.max_time_step = Some(quantity(value, Dim::Time, line)?),
                    _ => return Err(unknown()),
                },
                "trap" => match key {
                    "drive_frequency" => cfg.trap.drive_frequency = freq(value)?,
                    "reference_voltage" => cfg.trap.reference_voltage = quantity(value, Dim::Voltage, line)?,
                    "reference_q" => cfg.trap.reference_q = dimensionless(value, line)?,
                    "reference_frequency" => cfg.trap.reference_frequency = Some(freq(value)?),
                    _ => return Err(unknown()),
                },
                "potential" => match key {
                    "fieldmap" => pot.fieldmap = Some(PathBuf::from(value)),
                    "fit_half_width" => pot.half_width = Some(quantity(value, Dim::Length, line)?),
                    "omega_z" => pot.omega_z = Some(freq(value)?),
                    "c4" => pot.c4 = Some(quantity(value, Dim::InverseArea, line)?),
                    "c6" => pot.c6 = Some(quantity(value, Dim::InverseQuartic, line)?),
                    "broadening_temperature" => {
                        cfg.potential.broadening_temperature = Some(quantity(value, Dim::Temperature, line)?)
                    }
                    "bins" => {
                        let n = count(value, line)?;
                        if n == 0 {
                            return Err(cfg_err(line, "bins must be positive"));
                        }
                        cfg.potential.bins = n as usize;
                    }
                    _ => return Err(unknown()),
                },
                "cavity" => match key {
                    "frequency" => cfg.cavity.resonance_frequency = freq(value)?,
                    "q_internal" => cfg.cavity.q_internal = dimensionless(value, line)?,
                    "q_external" => {
                        cfg.cavity.q_external = if value == "inf" {
                            f64::INFINITY
                        } else {
                            dimensionless(value, line)?
                        }
                    }
                    "linewidth" => {
                        cfg.cavity.linewidth_override = if value == "from_q" { None } else { Some(freq(value)?) }
                    }
                    "temperature" => cfg.cavity.mode_temperature = quantity(value, Dim::Temperature, line)?,
                    _ => return Err(unknown()),
                },
                "coupling" => match key {
                    "g" => cfg.coupling.g = freq(value)?,
                    "intrinsic_damping" => cfg.coupling.intrinsic_damping = quantity(value, Dim::Rate, line)?,
                    "heating" => cfg.coupling.heating_rate = quantity(value, Dim::QuantaRate, line)?,
                    _ => return Err(unknown()),
                },
                "chain" => match key {
                    "stage" => {
                        let f = fields(value, 3, 3, line, "stage")?;
                        custom_chain.get_or_insert_with(Vec::new).push(FilterStage {
                            name: f[0].clone(),
                            suppression_db: quantity(&f[1], Dim::Decibel, line)?,
                            transmission_db: quantity(&f[2], Dim::Decibel, line)?,
                        });
                    }
                    "gain" => cfg.chain.gain_db = quantity(value, Dim::Decibel, line)?,
                    _ => return Err(unknown()),
                },
                "sequence" => {
                    let draft = seq.as_mut().expect("sequence draft exists inside [sequence]");
                    match key {
                        "segment" => {
                            let f = fields(value, 3, 4, line, "segment")?;
                            draft.segments.push(Segment {
                                start: quantity(&f[0], Dim::Time, line)?,
                                end: quantity(&f[1], Dim::Time, line)?,
                                amplitude: amplitude(&f[2], line)?,
                                ramp_to: f.get(3).map(|a| amplitude(a, line)).transpose()?,
                            });
                        }
                        "load" => {
                            let f = fields(value, 4, 4, line, "load")?;
                            draft.loading = Some((
                                LoadingEvent {
                                    time: quantity(&f[0], Dim::Time, line)?,
                                    duration: quantity(&f[1], Dim::Time, line)?,
                                    n_loaded: count(&f[2], line)?,
                                    initial_temperature: quantity(&f[3], Dim::Temperature, line)?,
                                },
                                line,
                            ));
                        }
                        "sample_interval" => draft.sample_interval = Some(quantity(value, Dim::Time, line)?),
                        "rbw" => draft.rbw = Some(quantity(value, Dim::Frequency, line)?),
                        _ => return Err(unknown()),
                    }
                }
                "analysis" => match key {
                    "thermal_share" => cfg.analysis.thermal_share = quantity(value, Dim::Fraction, line)?,
                    "signal_fraction" => cfg.analysis.signal_fraction = quantity(value, Dim::Fraction, line)?,
                    "degradation" => {
                        cfg.analysis.degradation = if value == "computed" {
                            Degradation::Computed
                        } else {
                            Degradation::Fixed(quantity(value, Dim::Fraction, line)?)
                        }
                    }
                    "fit_window" | "snr_window" => {
                        let f = fields(value, 2, 2, line, key)?;
                        let w = (quantity(&f[0], Dim::Time, line)?, quantity(&f[1], Dim::Time, line)?);
                        if !(w.1 > w.0) {
                            return Err(cfg_err(line, format!("{key} must end after it starts")));
                        }
                        if key == "fit_window" {
                            cfg.analysis.fit_window = Some(w);
                        } else {
                            cfg.analysis.snr_window = Some(w);
                        }
                    }
                    _ => return Err(unknown()),
                },
                _ => unreachable!("sections are validated on entry"),
            }
        }

        if let Some(stages) = custom_chain {
            cfg.chain.stages = stages;
        }
        cfg.potential.source = match (pot.fieldmap, pot.c4.is_some() || pot.c6.is_some() || pot.omega_z.is_some()) {
            (Some(_), true) => {
                return Err(cfg_err(pot.line, "give either a fieldmap or explicit coefficients, not both"))
            }
            (Some(path), false) => PotentialSource::FieldMap {
                path,
                half_width_um: pot.half_width,
            },
            (None, _) => {
                if pot.half_width.is_some() {
                    return Err(cfg_err(pot.line, "fit_half_width needs a fieldmap"));
                }
                PotentialSource::Explicit {
                    omega_z: pot.omega_z,
                    c4: pot.c4.unwrap_or(-1.5e-5),
                    c6: pot.c6.unwrap_or(0.0),
                }
            }
        };
        if let Some(d) = seq {
            let missing = |what: &str| cfg_err(d.line, format!("[sequence] needs '{what}'"));
            let (loading, load_line) = d.loading.ok_or_else(|| missing("load"))?;
            let program = SequenceProgram {
                segments: d.segments,
                loading,
                acquisition: Acquisition {
                    sample_interval: d.sample_interval.ok_or_else(|| missing("sample_interval"))?,
                    resolution_bandwidth: d.rbw.ok_or_else(|| missing("rbw"))?,
                },
            };
            program.validate().map_err(|e| match e {
                Error::Program(m) if m.contains("loading") => cfg_err(load_line, m),
                Error::Program(m) => cfg_err(d.line, m),
                other => other,
            })?;
            cfg.sequence = Some(program);
        }
        cfg.cavity.validate().map_err(|e| cfg_err(0, e.to_string()))?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config { line, message, .. } => Error::Config {
                file: Some(path.to_path_buf()),
                line,
                message,
            },
            other => other,
        })
    }

    /// SHA-256 of the canonical JSON form of the parsed configuration.
    pub fn digest(&self) -> String {
        digest::of(self)
    }

    pub fn drive(&self) -> Result<TrapDrive> {
        let t = &self.trap;
        let reference = match t.reference_frequency {
            Some(w) => w,
            None => secular_frequency(MathieuParams::new(0.0, t.reference_q), t.drive_frequency)?,
        };
        TrapDrive::calibrated(t.drive_frequency, t.reference_voltage, t.reference_q, reference, Particle::electron())
    }

    /// The pseudo-potential model, reading and fitting the field map if one
    /// is configured.
    pub fn potential_model(&self) -> Result<PotentialModel> {
        let mass = Particle::electron().mass;
        match &self.potential.source {
            PotentialSource::Explicit { omega_z, c4, c6 } => {
                let w = match omega_z {
                    Some(w) => *w,
                    None => self.drive()?.calibration.reference_secular_frequency,
                };
                PotentialModel::new(w, *c4, *c6, mass)
            }
            PotentialSource::FieldMap { path, half_width_um } => {
                let full = if path.is_absolute() { path.clone() } else { self.base_dir.join(path) };
                let samples = PotentialSamples::read(&full)?;
                let window = half_width_um.map_or(FitWindow::Full, FitWindow::HalfWidth);
                Ok(fit_even_polynomial(&samples, mass, window)?.model)
            }
        }
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let mut e = Experiment::new(self.drive()?, self.cavity, self.coupling, self.chain.clone());
        e.thermal_share = self.analysis.thermal_share;
        e.signal_fraction = self.analysis.signal_fraction;
        e.noise = self.noise;
        e.max_time_step = self.max_time_step;
        if let Some(t) = self.potential.broadening_temperature {
            e.broadening = Some(Broadening {
                model: self.potential_model()?,
                temperature: t,
                bins: self.potential.bins,
            });
        }
        e.validate()?;
        Ok(e)
    }

    /// Signal-reduction factor for electron-number estimates.
    pub fn degradation(&self) -> Result<f64> {
        match self.analysis.degradation {
            Degradation::Fixed(f) => Ok(f),
            Degradation::Computed => {
                let t = self.potential.broadening_temperature.ok_or_else(|| {
                    Error::param("config", "computed degradation needs potential.broadening_temperature")
                })?;
                computed_degradation(
                    &self.potential_model()?,
                    t,
                    self.cavity.effective_linewidth().kappa,
                    self.potential.bins,
                )
            }
        }
    }

    pub fn program(&self) -> Result<&SequenceProgram> {
        self.sequence
            .as_ref()
            .ok_or_else(|| cfg_err(0, "the config has no [sequence] section"))
    }
}
