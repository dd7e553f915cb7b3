//! Acquired traces and their CSV / JSON representations.
//!
//! CSV layout: `# key = value` metadata lines, an `x,y` header, then one
//! row per sample. Numbers use Rust's shortest round-trip formatting, so a
//! written trace reads back bit-identically.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consts::watts_to_dbm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// Power versus time, x in s.
    ZeroSpanTime,
    /// Power versus COM frequency, x in Hz.
    SpectrumVsFrequency,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::ZeroSpanTime => "zero_span_time",
            TraceKind::SpectrumVsFrequency => "spectrum_vs_frequency",
        }
    }

    pub fn x_unit(self) -> &'static str {
        match self {
            TraceKind::ZeroSpanTime => "s",
            TraceKind::SpectrumVsFrequency => "Hz",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "zero_span_time" => Ok(TraceKind::ZeroSpanTime),
            "spectrum_vs_frequency" => Ok(TraceKind::SpectrumVsFrequency),
            other => Err(Error::TraceFormat(format!("unknown trace kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub seed: u64,
    pub config_digest: String,
    pub program_digest: String,
    /// Whether stochastic terms were enabled.
    pub noise: bool,
    /// Mean detector floor, W.
    pub floor_watts: f64,
    /// Thermal part of the floor, W.
    pub thermal_floor_watts: f64,
    /// How the frequency axis of a spectrum was constructed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_axis: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub kind: TraceKind,
    pub x: Vec<f64>,
    /// Detected power, W.
    pub y: Vec<f64>,
    pub metadata: TraceMetadata,
}

impl Trace {
    pub fn new(kind: TraceKind, x: Vec<f64>, y: Vec<f64>, metadata: TraceMetadata) -> Result<Self> {
        let trace = Self { kind, x, y, metadata };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::TraceFormat(format!(
                "x has {} values but y has {}",
                self.x.len(),
                self.y.len()
            )));
        }
        if self.x.is_empty() {
            return Err(Error::TraceFormat("empty trace".into()));
        }
        if self.x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::TraceFormat("x is not strictly increasing".into()));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::TraceFormat("non-finite value".into()));
        }
        if self.metadata.config_digest.is_empty() || self.metadata.program_digest.is_empty() {
            return Err(Error::TraceFormat("metadata is missing a digest".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Indices with `lo <= x <= hi`.
    pub fn window_indices(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.x.partition_point(|&v| v < lo);
        let end = self.x.partition_point(|&v| v <= hi);
        start..end.max(start)
    }

    pub fn to_csv(&self) -> String {
        let m = &self.metadata;
        let mut out = String::new();
        let _ = writeln!(out, "# kind = {}", self.kind.as_str());
        let _ = writeln!(out, "# x_unit = {}", self.kind.x_unit());
        let _ = writeln!(out, "# y_unit = W");
        let _ = writeln!(out, "# seed = {}", m.seed);
        let _ = writeln!(out, "# config_digest = {}", m.config_digest);
        let _ = writeln!(out, "# program_digest = {}", m.program_digest);
        let _ = writeln!(out, "# noise = {}", m.noise);
        let _ = writeln!(out, "# floor_W = {:e}", m.floor_watts);
        let _ = writeln!(out, "# thermal_floor_W = {:e}", m.thermal_floor_watts);
        if let Some(axis) = &m.frequency_axis {
            let _ = writeln!(out, "# frequency_axis = {axis}");
        }
        for w in &m.warnings {
            let _ = writeln!(out, "# warning = {w}");
        }
        out.push_str("x,y\n");
        for (x, y) in self.x.iter().zip(&self.y) {
            let _ = writeln!(out, "{x:e},{y:e}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut seed = None;
        let mut config_digest = None;
        let mut program_digest = None;
        let mut noise = false;
        let mut floor_watts = 0.0;
        let mut thermal_floor_watts = 0.0;
        let mut frequency_axis = None;
        let mut warnings = Vec::new();
        let mut header_seen = false;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::TraceFormat(format!("line {line_no}: {msg}"));
            if let Some(meta) = line.strip_prefix('#') {
                let Some((key, value)) = meta.split_once('=') else {
                    continue;
                };
                let value = value.trim();
                let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{v}: {e}")));
                match key.trim() {
                    "kind" => kind = Some(TraceKind::parse(value)?),
                    "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(format!("seed: {e}")))?),
                    "config_digest" => config_digest = Some(value.to_owned()),
                    "program_digest" => program_digest = Some(value.to_owned()),
                    "noise" => noise = value == "true",
                    "floor_W" => floor_watts = num(value)?,
                    "thermal_floor_W" => thermal_floor_watts = num(value)?,
                    "frequency_axis" => frequency_axis = Some(value.to_owned()),
                    "warning" => warnings.push(value.to_owned()),
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") != "x,y" {
                    return Err(bad(format!("expected 'x,y' header, found '{line}'")));
                }
                header_seen = true;
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| bad("expected two comma-separated values".into()))?;
            x.push(a.trim().parse::<f64>().map_err(|e| bad(format!("{a}: {e}")))?);
            y.push(b.trim().parse::<f64>().map_err(|e| bad(format!("{b}: {e}")))?);
        }
        let missing = |what: &str| Error::TraceFormat(format!("metadata '{what}' missing"));
        Trace::new(
            kind.ok_or_else(|| missing("kind"))?,
            x,
            y,
            TraceMetadata {
                seed: seed.ok_or_else(|| missing("seed"))?,
                config_digest: config_digest.ok_or_else(|| missing("config_digest"))?,
                program_digest: program_digest.ok_or_else(|| missing("program_digest"))?,
                noise,
                floor_watts,
                thermal_floor_watts,
                frequency_axis,
                warnings,
            },
        )
    }

    /// JSON document: the trace plus the power column in dBm.
    pub fn to_json(&self) -> String {
        let doc = TraceDocument {
            trace: self.clone(),
            y_dbm: self
                .y
                .iter()
                .map(|&p| Some(watts_to_dbm(p)).filter(|d| d.is_finite()))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("trace serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TraceDocument =
            serde_json::from_str(text).map_err(|e| Error::TraceFormat(e.to_string()))?;
        doc.trace.validate()?;
        Ok(doc.trace)
    }

    /// Reads CSV or JSON, chosen by extension (`.json` → JSON).
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_csv(&text)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TraceDocument {
    #[serde(flatten)]
    trace: Trace,
    #[serde(default)]
    y_dbm: Vec<Option<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        Trace::new(
            TraceKind::ZeroSpanTime,
            vec![0.0, 1e-4, 2e-4, 0.30000000000000004],
            vec![1.234567890123e-12, 0.0, 3e-15, 7.1e-13],
            TraceMetadata {
                seed: 42,
                config_digest: "abc".into(),
                program_digest: "def".into(),
                noise: true,
                floor_watts: 1e-15,
                thermal_floor_watts: 0.87e-15,
                frequency_axis: None,
                warnings: vec!["something odd".into()],
            },
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let text = t.to_csv();
        assert!(text.contains("\nx,y\n"));
        assert_eq!(Trace::from_csv(&text).unwrap(), t);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let t = sample();
        assert_eq!(Trace::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn invalid_traces_are_rejected() {
        let mut t = sample();
        t.x[2] = t.x[1];
        assert!(t.validate().is_err());
        assert!(Trace::from_csv("x,y\n0,1\n").is_err());
        assert!(Trace::from_csv("# kind = zero_span_time\n1,2\n").is_err());
    }

    #[test]
    fn window_selection() {
        let t = sample();
        assert_eq!(t.window_indices(1e-4, 2e-4), 1..3);
        assert_eq!(t.window_indices(5.0, 6.0), 4..4);
    }
}
