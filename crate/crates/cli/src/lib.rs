//! Batch front-end: runs configured sequences and sweeps, prints filter
//! budgets and fits saved traces.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 for unreadable or invalid
//! inputs, 3 for physics or fit failures.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use trapsim::analysis::{
    estimate_electron_number, fit_exponential_decay, fit_gaussian, floor_from_metadata, snr,
    steady_state_snr,
};
use trapsim::config::RunConfig;
use trapsim::sequence::{run_sequence_detailed, sweep_from_run};
use trapsim::trace::Trace;
use trapsim::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PHYSICS: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "trapsim", version, about = "Electron Paul-trap and cavity readout simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitModel {
    Exp,
    Gauss,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Run configuration files.
    #[arg(required = true)]
    pub configs: Vec<PathBuf>,
    /// Output directory (default: next to each config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed overriding the config's.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of configs processed in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write only this trace format (default: both).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the configured sequence and write its zero-span trace.
    Run(RunArgs),
    /// Simulate the configured ramp and write power versus COM frequency
    /// with a Gaussian width report.
    Sweep(RunArgs),
    /// Print the filter-chain suppression budget.
    Budget {
        config: PathBuf,
    },
    /// Fit a saved trace.
    Fit {
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "exp")]
        model: FitModel,
        /// Decay-fit window `start,end` in seconds (default: peak to end).
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected start,end")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if b <= a {
        return Err("window must end after it starts".into());
    }
    Ok((a, b))
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_input_error() { EXIT_INPUT } else { EXIT_PHYSICS },
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", path.display()),
    }
}

/// Parses `args` (including the program name) and executes the command.
/// Returns the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(args) => batch(&args, Mode::Run),
        Command::Sweep(args) => batch(&args, Mode::Sweep),
        Command::Budget { config } => {
            let cfg = RunConfig::read(&config)?;
            print!("{}", cfg.chain.report());
            Ok(())
        }
        Command::Fit {
            trace,
            model,
            window,
            out,
        } => {
            let t = Trace::read(&trace)?;
            let report = fit_report(&t, model, window)?;
            let text = serde_json::to_string_pretty(&report).expect("report serialises") + "\n";
            match out {
                Some(p) => fs::write(&p, text).map_err(|e| io_failure(&p, e))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Run,
    Sweep,
}

fn batch(args: &RunArgs, mode: Mode) -> Result<(), Failure> {
    if args.jobs == 0 {
        return Err(Failure {
            code: EXIT_USAGE,
            message: "--jobs must be at least 1".into(),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Failure {
            code: EXIT_PHYSICS,
            message: e.to_string(),
        })?;
    let results: Vec<Result<String, Failure>> =
        pool.install(|| args.configs.par_iter().map(|c| process(c, args, mode)).collect());
    let mut first_failure = None;
    for (path, r) in args.configs.iter().zip(results) {
        match r {
            Ok(summary) => println!("{summary}"),
            Err(f) => {
                let name = path.display().to_string();
                if f.message.starts_with(&name) {
                    eprintln!("error: {}", f.message);
                } else {
                    eprintln!("error: {name}: {}", f.message);
                }
                first_failure.get_or_insert(f.code);
            }
        }
    }
    match first_failure {
        None => Ok(()),
        Some(code) => Err(Failure {
            code,
            message: "one or more configs failed".into(),
        }),
    }
}

fn output_dir(config: &Path, args: &RunArgs) -> Result<PathBuf, Failure> {
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => config.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    Ok(dir)
}

fn write_trace(trace: &Trace, dir: &Path, stem: &str, args: &RunArgs) -> Result<Vec<PathBuf>, Failure> {
    let mut written = Vec::new();
    if args.format != Some(Format::Json) {
        let p = dir.join(format!("{stem}.csv"));
        fs::write(&p, trace.to_csv()).map_err(|e| io_failure(&p, e))?;
        written.push(p);
    }
    if args.format != Some(Format::Csv) {
        let p = dir.join(format!("{stem}.json"));
        fs::write(&p, trace.to_json() + "\n").map_err(|e| io_failure(&p, e))?;
        written.push(p);
    }
    Ok(written)
}

fn write_report(report: &Value, dir: &Path, stem: &str) -> Result<PathBuf, Failure> {
    let p = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(report).expect("report serialises") + "\n";
    fs::write(&p, text).map_err(|e| io_failure(&p, e))?;
    Ok(p)
}

fn process(config: &Path, args: &RunArgs, mode: Mode) -> Result<String, Failure> {
    let cfg = RunConfig::read(config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let experiment = cfg.experiment()?;
    let program = cfg.program()?;
    let mut run = run_sequence_detailed(program, &experiment, seed)?;
    run.trace.metadata.config_digest = cfg.digest();
    let dir = output_dir(config, args)?;
    let stem = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());

    let provenance = json!({
        "config": config.display().to_string(),
        "config_digest": run.trace.metadata.config_digest,
        "program_digest": run.trace.metadata.program_digest,
        "seed": seed,
    });

    match mode {
        Mode::Run => {
            write_trace(&run.trace, &dir, &format!("{stem}.trace"), args)?;
            let trace = &run.trace;
            let floor = floor_from_metadata(trace)?;
            let peak = trace.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let peak_snr = snr(trace, &floor)?;
            let mut report = json!({
                "provenance": provenance,
                "peak_power_W": peak,
                "floor_W": floor.total(),
                "thermal_floor_W": floor.thermal,
                "snr_peak": peak_snr,
                "snr_convention": "excess over the total floor divided by its thermal component",
            });
            let mut summary = format!("{}: peak {:.3e} W, snr {:.2}", config.display(), peak, peak_snr);
            let degradation = cfg.degradation()?;
            let ss = match cfg.analysis.snr_window {
                Some(w) => Some(steady_state_snr(trace, &floor, w)?),
                None => None,
            };
            if let Some(v) = ss {
                report["snr_window_mean"] = json!(v);
                summary.push_str(&format!(", window snr {v:.2}"));
            }
            let n = estimate_electron_number(ss.unwrap_or(peak_snr).max(0.0), degradation)?;
            report["degradation_fraction"] = json!(degradation);
            report["electron_number_estimate"] = json!(n);
            summary.push_str(&format!(", N est {n}"));
            if let Some(w) = cfg.analysis.fit_window {
                let fit = fit_exponential_decay(trace, w)?;
                let expected = 1.0 / experiment.total_decay_rate(program.loading.n_loaded as f64)?;
                report["decay_fit"] = serde_json::to_value(fit).expect("fit serialises");
                report["expected_time_constant_s"] = json!(expected);
                summary.push_str(&format!(
                    ", tau {:.4e} s (expected {:.4e} s)",
                    fit.time_constant, expected
                ));
            }
            write_report(&report, &dir, &format!("{stem}.report"))?;
            Ok(summary)
        }
        Mode::Sweep => {
            let spectrum = sweep_from_run(&run, &experiment)?;
            for w in &spectrum.metadata.warnings {
                eprintln!("warning: {}: {w}", config.display());
            }
            write_trace(&spectrum, &dir, &format!("{stem}.spectrum"), args)?;
            let fit = fit_gaussian(&spectrum)?;
            let kappa_hz = experiment.cavity.effective_linewidth().kappa / std::f64::consts::TAU;
            let report = json!({
                "provenance": provenance,
                "frequency_axis": spectrum.metadata.frequency_axis,
                "warnings": spectrum.metadata.warnings,
                "gaussian_fit": serde_json::to_value(fit).expect("fit serialises"),
                "fwhm_Hz": fit.fwhm(),
                "cavity_linewidth_Hz": kappa_hz,
            });
            write_report(&report, &dir, &format!("{stem}.sweep"))?;
            Ok(format!(
                "{}: centre {:.6e} Hz, sigma {:.4e} Hz, FWHM {:.4e} Hz (cavity linewidth {:.4e} Hz)",
                config.display(),
                fit.center,
                fit.sigma,
                fit.fwhm(),
                kappa_hz
            ))
        }
    }
}

/// Fit report for a saved trace.
pub fn fit_report(trace: &Trace, model: FitModel, window: Option<(f64, f64)>) -> Result<Value, Failure> {
    let provenance = json!({
        "seed": trace.metadata.seed,
        "config_digest": trace.metadata.config_digest,
        "program_digest": trace.metadata.program_digest,
    });
    match model {
        FitModel::Exp => {
            let w = window.unwrap_or_else(|| {
                let peak = trace
                    .y
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map_or(0, |(i, _)| i);
                (trace.x[peak], trace.x[trace.len() - 1])
            });
            let fit = fit_exponential_decay(trace, w)?;
            Ok(json!({
                "model": "exp",
                "provenance": provenance,
                "window_s": [w.0, w.1],
                "fit": serde_json::to_value(fit).expect("fit serialises"),
            }))
        }
        FitModel::Gauss => {
            let fit = fit_gaussian(trace)?;
            Ok(json!({
                "model": "gauss",
                "provenance": provenance,
                "fit": serde_json::to_value(fit).expect("fit serialises"),
                "fwhm": fit.fwhm(),
            }))
        }
    }
}
