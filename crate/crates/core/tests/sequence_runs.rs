use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use trapsim::analysis::fit_exponential_decay;
use trapsim::config::RunConfig;
use trapsim::sequence::{run_sequence, run_sequence_detailed};

fn config(name: &str) -> RunConfig {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::read(path).unwrap()
}

/// Two-sample Kolmogorov-Smirnov statistic and its asymptotic p-value.
fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

#[test]
fn empty_trap_is_indistinguishable_from_the_detector_floor() {
    let mut cfg = config("sequence_i_thermal.cfg");
    cfg.sequence.as_mut().unwrap().loading.n_loaded = 0;
    let program = cfg.program().unwrap().clone();
    let trace = run_sequence(&program, &cfg.experiment().unwrap(), cfg.seed).unwrap();

    let shape = (program.acquisition.resolution_bandwidth * program.acquisition.sample_interval).max(1.0);
    let gamma = Gamma::new(shape, trace.metadata.floor_watts / shape).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF100);
    let reference: Vec<f64> = (0..trace.len()).map(|_| gamma.sample(&mut rng)).collect();
    let (d, p) = ks_two_sample(&trace.y, &reference);
    assert!(p > 0.01, "KS D = {d}, p = {p}");
}

#[test]
fn loaded_trap_is_distinguishable_from_the_floor() {
    let cfg = config("sequence_i_thermal.cfg");
    let program = cfg.program().unwrap().clone();
    let trace = run_sequence(&program, &cfg.experiment().unwrap(), cfg.seed).unwrap();
    let shape = (program.acquisition.resolution_bandwidth * program.acquisition.sample_interval).max(1.0);
    let gamma = Gamma::new(shape, trace.metadata.floor_watts / shape).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF100);
    let reference: Vec<f64> = (0..trace.len()).map(|_| gamma.sample(&mut rng)).collect();
    let (_, p) = ks_two_sample(&trace.y, &reference);
    assert!(p < 1e-6, "p = {p}");
}

#[test]
fn thermal_sequence_i_time_constant_averages_to_one_over_gamma() {
    let cfg = config("sequence_i_thermal.cfg");
    let experiment = cfg.experiment().unwrap();
    let program = cfg.program().unwrap();
    let expected = 1.0 / experiment.total_decay_rate(program.loading.n_loaded as f64).unwrap();
    let window = cfg.analysis.fit_window.unwrap();
    let taus: Vec<f64> = (1..=12u64)
        .map(|seed| {
            let trace = run_sequence(program, &experiment, seed).unwrap();
            fit_exponential_decay(&trace, window).unwrap().time_constant
        })
        .collect();
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    assert!((mean / expected - 1.0).abs() < 0.1, "mean τ {mean} vs {expected}; {taus:?}");
}

#[test]
fn sequence_ii_halts_during_detuning_and_revives() {
    let mut cfg = config("sequence_ii.cfg");
    cfg.noise = false;
    let run = run_sequence_detailed(cfg.program().unwrap(), &cfg.experiment().unwrap(), cfg.seed).unwrap();
    let t = &run.trace.x;
    let at = |time: f64| t.iter().position(|&x| x >= time - 1e-12).unwrap();
    let energy = &run.electron_energy;

    // Energy at the start and end of the detuned epoch.
    let (i0, i1) = (at(15.5e-3), at(34.5e-3));
    let held = energy[i1] / energy[i0];
    assert!(held > 0.99, "energy ratio across detune {held}");

    // Before the detune, 9 ms on resonance removes more than half of it.
    let (j0, j1) = (at(5.5e-3), at(14.5e-3));
    assert!(energy[j1] / energy[j0] < 0.5, "resonant ratio {}", energy[j1] / energy[j0]);

    // Detected signal collapses while detuned and returns once back on resonance.
    let signal = &run.signal_watts;
    let during = signal[at(25e-3)];
    let before = signal[at(14.5e-3)];
    let after = signal[at(35.5e-3)];
    assert!(during < 1e-3 * before, "signal during detune {during} vs before {before}");
    assert!(after > 0.5 * before, "revival {after} vs {before}");
    let tail = signal[at(69.9e-3)];
    assert!(tail < 0.1 * after, "signal decays again after revival: {tail} vs {after}");
}
