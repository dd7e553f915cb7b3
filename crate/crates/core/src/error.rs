use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which edge of the lowest Mathieu stability region was crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityBound {
    /// β would reach or exceed 1 (the q-edge for a = 0).
    Upper,
    /// β² would become negative (defocusing static bias).
    Lower,
}

impl std::fmt::Display for StabilityBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabilityBound::Upper => f.write_str("beta >= 1"),
            StabilityBound::Lower => f.write_str("beta^2 < 0"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("mathieu: invalid drive: {0}")]
    InvalidDrive(String),

    #[error("mathieu: (a = {a}, q = {q}) is outside the lowest stability region ({bound})")]
    Unstable { a: f64, q: f64, bound: StabilityBound },

    #[error("{module}: time step too coarse: {detail}")]
    Resolution { module: &'static str, detail: String },

    #[error("mathieu: no oscillation above the noise floor")]
    NoOscillation,

    #[error("potential: invalid samples: {0}")]
    InvalidSamples(String),

    #[error("potential: even-polynomial fit failed: {0}")]
    PotentialFit(String),

    #[error(
        "potential: amplitude {amplitude_um} um exceeds the series validity radius \
         {radius_um} um; use the brute-force frequency path"
    )]
    OutOfRange { amplitude_um: f64, radius_um: f64 },

    #[error("potential: amplitude {amplitude_um} um is above the well barrier; the orbit is unbound")]
    Unbound { amplitude_um: f64 },

    #[error("{module}: invalid parameter: {detail}")]
    Parameter { module: &'static str, detail: String },

    #[error("sequence: invalid program: {0}")]
    Program(String),

    #[error("sequence: at t = {time} s: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("analysis: fit failed: {0}")]
    Fit(String),

    #[error("{}: {message}", config_location(.file.as_deref(), *.line))]
    Config {
        file: Option<PathBuf>,
        /// 1-based line, 0 when the problem is not tied to one line.
        line: usize,
        message: String,
    },

    #[error("trace: {0}")]
    TraceFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn config_location(file: Option<&Path>, line: usize) -> String {
    let name = file.map_or_else(|| "config".to_owned(), |p| p.display().to_string());
    if line == 0 {
        name
    } else {
        format!("{name}:{line}")
    }
}

impl Error {
    pub(crate) fn param(module: &'static str, detail: impl Into<String>) -> Self {
        Error::Parameter {
            module,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the input files or their contents rather
    /// than by the physics or a fit.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Io { .. } | Error::TraceFormat(_) | Error::InvalidSamples(_)
        )
    }
}
