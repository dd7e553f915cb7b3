//! Fits and figures of merit extracted from traces.
//!
//! Both fitters use a damped least-squares (Levenberg–Marquardt) iteration
//! with analytic Jacobians; parameter standard errors come from
//! `s²(JᵀJ)⁻¹` at the optimum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cavity::NoiseFloor;
use crate::error::{Error, Result};
use crate::potential::{frequency_distribution, PotentialModel};
use crate::trace::Trace;

/// Anharmonic signal-reduction factor used when no other value is given.
pub const DEFAULT_DEGRADATION: f64 = 0.0062;

/// Minimum number of samples inside a decay-fit window.
pub const MIN_WINDOW_SAMPLES: usize = 20;

const MAX_ITERATIONS: usize = 500;

struct LmSolution {
    params: Vec<f64>,
    std_errors: Vec<f64>,
    rms_residual: f64,
}

/// Minimises Σ (model(x) − y)². `model` returns the value and writes the
/// gradient with respect to the parameters into its last argument.
fn levenberg_marquardt<F>(x: &[f64], y: &[f64], start: Vec<f64>, model: F) -> Result<LmSolution>
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let p = start.len();
    let mut grad = vec![0.0; p];
    let evaluate = |params: &[f64], grad: &mut [f64]| -> (DMatrix<f64>, DVector<f64>, f64) {
        let mut jac = DMatrix::zeros(n, p);
        let mut res = DVector::zeros(n);
        let mut cost = 0.0;
        for i in 0..n {
            let r = model(x[i], params, grad) - y[i];
            res[i] = r;
            cost += r * r;
            for j in 0..p {
                jac[(i, j)] = grad[j];
            }
        }
        (jac, res, cost)
    };

    let mut params = start;
    let (mut jac, mut res, mut cost) = evaluate(&params, &mut grad);
    if !cost.is_finite() {
        return Err(Error::Fit("non-finite residuals at the starting point".into()));
    }
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        let mut damped = jtj.clone();
        for j in 0..p {
            damped[(j, j)] += lambda * jtj[(j, j)].max(f64::MIN_POSITIVE);
        }
        let Some(step) = damped.lu().solve(&(-jtr)) else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
            continue;
        };
        let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let (tj, tr, tc) = evaluate(&trial, &mut grad);
        if tc.is_finite() && tc <= cost {
            let small_step = step
                .iter()
                .zip(&trial)
                .all(|(d, v)| d.abs() <= 1e-13 * v.abs().max(1e-300));
            let small_gain = cost - tc <= 1e-15 * cost;
            params = trial;
            jac = tj;
            res = tr;
            cost = tc;
            lambda = (lambda / 10.0).max(1e-12);
            if small_step || small_gain || cost == 0.0 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
    }

    let dof = n.saturating_sub(p).max(1) as f64;
    let s2 = cost / dof;
    let jtj = jac.transpose() * &jac;
    let std_errors = match jtj.try_inverse() {
        Some(cov) => (0..p).map(|j| (s2 * cov[(j, j)]).max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; p],
    };
    Ok(LmSolution {
        params,
        std_errors,
        rms_residual: (cost / n as f64).sqrt(),
    })
}

/// `A·exp(−(t − t₀)/τ) + B` with `t₀` the first sample in the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Amplitude at `reference_time`, W.
    pub amplitude: f64,
    /// τ, s.
    pub time_constant: f64,
    /// B, W.
    pub offset: f64,
    pub rms_residual: f64,
    pub amplitude_error: f64,
    pub time_constant_error: f64,
    pub offset_error: f64,
    /// t₀, s.
    pub reference_time: f64,
    pub samples: usize,
}

impl DecayFit {
    /// 1/τ, 1/s.
    pub fn decay_rate(&self) -> f64 {
        1.0 / self.time_constant
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.amplitude * (-(t - self.reference_time) / self.time_constant).exp() + self.offset
    }
}

fn window_samples(trace: &Trace, window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::Fit(format!("empty window [{lo}, {hi}]")));
    }
    let first = trace.x[0];
    let last = trace.x[trace.len() - 1];
    let slack = 1e-9 * (last - first).abs().max(f64::MIN_POSITIVE);
    if lo < first - slack || hi > last + slack {
        return Err(Error::Fit(format!(
            "window [{lo}, {hi}] is not inside the trace [{first}, {last}]"
        )));
    }
    let r = trace.window_indices(lo - slack, hi + slack);
    if r.len() < MIN_WINDOW_SAMPLES {
        return Err(Error::Fit(format!(
            "window holds {} samples, at least {MIN_WINDOW_SAMPLES} are needed",
            r.len()
        )));
    }
    Ok((trace.x[r.clone()].to_vec(), trace.y[r].to_vec()))
}

fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least-squares fit of `A·exp(−t/τ) + B` to the samples inside `window`.
///
/// Initial τ comes from a log-linear regression of the baseline-subtracted
/// data. Flat traces, non-decaying data and insignificant amplitudes are
/// reported as fit failures.
pub fn fit_exponential_decay(trace: &Trace, window: (f64, f64)) -> Result<DecayFit> {
    let (t, y) = window_samples(trace, window)?;
    let t0 = t[0];
    let span = t[t.len() - 1] - t0;
    let rel: Vec<f64> = t.iter().map(|v| v - t0).collect();
    let (ymin, ymax) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let range = ymax - ymin;
    if !(range > 1e-12 * ymax.abs().max(ymin.abs())) {
        return Err(Error::Fit("no decay: the trace is flat".into()));
    }
    let scale = range;
    let ys: Vec<f64> = y.iter().map(|v| v / scale).collect();

    // Baseline from the tail, nudged below the data so the logarithm exists.
    let tail = (ys.len() / 10).max(2);
    let mut sorted_tail = ys[ys.len() - tail..].to_vec();
    sorted_tail.sort_by(f64::total_cmp);
    let base0 = sorted_tail[0].min(ys.iter().copied().fold(f64::INFINITY, f64::min)) - 1e-3;
    let head = ys.iter().take(ys.len() / 2).copied().fold(f64::NEG_INFINITY, f64::max);
    let (lx, ly): (Vec<f64>, Vec<f64>) = rel
        .iter()
        .zip(&ys)
        .filter(|(_, v)| **v - base0 > 0.05 * (head - base0))
        .map(|(a, v)| (*a, (v - base0).ln()))
        .unzip();
    let (slope, intercept) = if lx.len() >= 3 {
        linear_regression(&lx, &ly)
    } else {
        (-1.0 / span, (ys[0] - base0).ln())
    };
    let tau0 = if slope < 0.0 && slope.is_finite() {
        (-1.0 / slope).min(10.0 * span)
    } else {
        span
    };
    let start = vec![intercept.exp().max(1e-6), 1.0 / tau0, base0];

    // Parameterised by the rate k = 1/τ, which keeps the problem smooth when τ grows.
    let sol = levenberg_marquardt(&rel, &ys, start, |x, p, g| {
        let e = (-p[1] * x).exp();
        g[0] = e;
        g[1] = -p[0] * x * e;
        g[2] = 1.0;
        p[0] * e + p[2]
    })?;
    let (a, k, b) = (sol.params[0] * scale, sol.params[1], sol.params[2] * scale);
    let tau = 1.0 / k;
    if !tau.is_finite() || tau <= 0.0 || tau > 100.0 * span {
        return Err(Error::Fit(format!(
            "no decay: time constant {tau:e} s is not resolved by a {span:e} s window"
        )));
    }
    let a_err = sol.std_errors[0] * scale;
    if !(a.abs() > 3.0 * a_err) {
        return Err(Error::Fit(format!(
            "no decay: amplitude {a:e} is within 3 standard errors ({a_err:e}) of zero"
        )));
    }
    Ok(DecayFit {
        amplitude: a,
        time_constant: tau,
        offset: b,
        rms_residual: sol.rms_residual * scale,
        amplitude_error: a_err,
        time_constant_error: sol.std_errors[1] * tau * tau,
        offset_error: sol.std_errors[2] * scale,
        reference_time: t0,
        samples: t.len(),
    })
}

/// `h·exp(−(x − c)²/(2σ²)) + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    /// Hz.
    pub center: f64,
    /// Hz.
    pub sigma: f64,
    /// W.
    pub height: f64,
    /// W.
    pub baseline: f64,
    pub rms_residual: f64,
    pub center_error: f64,
    pub sigma_error: f64,
    pub height_error: f64,
    pub baseline_error: f64,
}

impl GaussianFit {
    /// Full width at half maximum, `2√(2 ln 2)·σ`.
    pub fn fwhm(&self) -> f64 {
        2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * self.sigma
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.height * (-(x - self.center).powi(2) / (2.0 * self.sigma * self.sigma)).exp() + self.baseline
    }
}

/// Robust per-sample noise level from first differences (MAD estimator).
fn difference_noise(y: &[f64]) -> f64 {
    let mut d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    1.4826 * d[d.len() / 2] / std::f64::consts::SQRT_2
}

/// Least-squares Gaussian plus baseline on a spectrum.
///
/// The baseline starts at the mean of the lowest decile and the centre and
/// width at the first and second moments of the excess. The trace must show
/// a peak: its moving average has to rise more than three noise standard
/// deviations above the baseline.
pub fn fit_gaussian(trace: &Trace) -> Result<GaussianFit> {
    let n = trace.len();
    if n < 8 {
        return Err(Error::Fit(format!("{n} samples are too few for a Gaussian fit")));
    }
    let x0 = trace.x[0];
    let xscale = trace.x[n - 1] - x0;
    let u: Vec<f64> = trace.x.iter().map(|v| (v - x0) / xscale).collect();
    let mut sorted = trace.y.clone();
    sorted.sort_by(f64::total_cmp);
    let yscale = (sorted[n - 1] - sorted[0]).max(f64::MIN_POSITIVE);
    let ys: Vec<f64> = trace.y.iter().map(|v| v / yscale).collect();
    let decile = (n / 10).max(1);
    let base0 = sorted[..decile].iter().sum::<f64>() / decile as f64 / yscale;

    let noise = difference_noise(&ys);
    let w = (n / 100).max(1);
    let smooth_peak = ys
        .windows(w)
        .map(|win| win.iter().sum::<f64>() / w as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let median = sorted[n / 2] / yscale;
    if !(smooth_peak > median + 3.0 * noise) || smooth_peak - base0 <= 0.0 {
        return Err(Error::Fit("no peak above three noise standard deviations".into()));
    }

    let excess: Vec<f64> = ys.iter().map(|v| (v - base0).max(0.0)).collect();
    let total: f64 = excess.iter().sum();
    let c0 = u.iter().zip(&excess).map(|(a, e)| a * e).sum::<f64>() / total;
    let var0 = u.iter().zip(&excess).map(|(a, e)| (a - c0).powi(2) * e).sum::<f64>() / total;
    let s0 = var0.sqrt().max(2.0 / n as f64);
    let h0 = smooth_peak - base0;

    let sol = levenberg_marquardt(&u, &ys, vec![h0, c0, s0, base0], |x, p, g| {
        let d = x - p[1];
        let s2 = p[2] * p[2];
        let e = (-d * d / (2.0 * s2)).exp();
        g[0] = e;
        g[1] = p[0] * e * d / s2;
        g[2] = p[0] * e * d * d / (s2 * p[2]);
        g[3] = 1.0;
        p[0] * e + p[3]
    })?;
    let [h, c, s, b] = [sol.params[0], sol.params[1], sol.params[2].abs(), sol.params[3]];
    let fit = GaussianFit {
        center: x0 + c * xscale,
        sigma: s * xscale,
        height: h * yscale,
        baseline: b * yscale,
        rms_residual: sol.rms_residual * yscale,
        center_error: sol.std_errors[1] * xscale,
        sigma_error: sol.std_errors[2] * xscale,
        height_error: sol.std_errors[0] * yscale,
        baseline_error: sol.std_errors[3] * yscale,
    };
    if !(fit.height > 0.0) || !(fit.sigma > 0.0) || !fit.sigma.is_finite() {
        return Err(Error::Fit("Gaussian collapsed to a non-positive height or width".into()));
    }
    if fit.center < trace.x[0] || fit.center > trace.x[n - 1] {
        return Err(Error::Fit("fitted peak centre lies outside the spectrum".into()));
    }
    if !(fit.height > 3.0 * fit.height_error) {
        return Err(Error::Fit("peak height is not significant".into()));
    }
    Ok(fit)
}

/// Noise floor recorded in a trace's metadata.
pub fn floor_from_metadata(trace: &Trace) -> Result<NoiseFloor> {
    let m = &trace.metadata;
    if !(m.floor_watts > 0.0) || !(m.thermal_floor_watts > 0.0) {
        return Err(Error::param("analysis", "trace metadata carries no noise floor"));
    }
    Ok(NoiseFloor {
        thermal: m.thermal_floor_watts,
        residual: m.floor_watts - m.thermal_floor_watts,
    })
}

/// Peak signal-to-thermal-noise ratio: `(max y − floor) / thermal floor`.
///
/// The denominator is the thermal component only, not the whole floor.
pub fn snr(trace: &Trace, floor: &NoiseFloor) -> Result<f64> {
    check_floor(floor)?;
    let peak = trace.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((peak - floor.total()) / floor.thermal)
}

/// Mean excess over the floor inside `window`, divided by the thermal floor.
/// Averaging makes this insensitive to single noise spikes.
pub fn steady_state_snr(trace: &Trace, floor: &NoiseFloor, window: (f64, f64)) -> Result<f64> {
    check_floor(floor)?;
    let r = trace.window_indices(window.0, window.1);
    if r.is_empty() {
        return Err(Error::param("analysis", "SNR window holds no samples"));
    }
    let mean = trace.y[r.clone()].iter().sum::<f64>() / r.len() as f64;
    Ok((mean - floor.total()) / floor.thermal)
}

fn check_floor(floor: &NoiseFloor) -> Result<()> {
    if !(floor.total() > 0.0) || !(floor.thermal > 0.0) {
        return Err(Error::param("analysis", "noise floor must be positive"));
    }
    Ok(())
}

/// `round(snr / degradation)`: each harmonic electron contributes one unit of
/// signal-to-thermal-noise ratio, reduced by the anharmonic factor.
///
/// With `snr = 6.8` and the default factor this gives 1097 electrons; the
/// published figure for that measurement is 1,260, which these inputs do not
/// reproduce.
pub fn estimate_electron_number(snr: f64, degradation_fraction: f64) -> Result<u64> {
    if !(degradation_fraction > 0.0 && degradation_fraction <= 1.0) {
        return Err(Error::param(
            "analysis",
            format!("degradation fraction must lie in (0, 1], got {degradation_fraction}"),
        ));
    }
    if !(snr >= 0.0) || !snr.is_finite() {
        return Err(Error::param("analysis", format!("snr must be non-negative, got {snr}")));
    }
    Ok((snr / degradation_fraction).round() as u64)
}

/// Overlap of a thermal ensemble's frequency distribution with the cavity
/// Lorentzian `κ²/(κ² + 4δ²)`, where δ is each slice's shift from the
/// harmonic frequency. Equals 1 for a harmonic well; slices above the well
/// barrier contribute nothing.
pub fn computed_degradation(model: &PotentialModel, temperature: f64, kappa: f64, bins: usize) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::param("analysis", "kappa must be positive"));
    }
    let dist = frequency_distribution(model, temperature, bins)?;
    Ok(dist
        .bins
        .iter()
        .map(|b| {
            let delta = (b.relative_frequency - 1.0) * model.omega_z;
            b.weight * kappa * kappa / (kappa * kappa + 4.0 * delta * delta)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::{angular, ELECTRON_MASS};
    use crate::trace::{TraceKind, TraceMetadata};

    fn meta() -> TraceMetadata {
        TraceMetadata {
            seed: 0,
            config_digest: "c".into(),
            program_digest: "p".into(),
            noise: false,
            floor_watts: 1.0,
            thermal_floor_watts: 0.87,
            frequency_axis: None,
            warnings: vec![],
        }
    }

    fn trace(kind: TraceKind, x: Vec<f64>, y: Vec<f64>) -> Trace {
        Trace::new(kind, x, y, meta()).unwrap()
    }

    fn synthetic_decay(a: f64, tau: f64, b: f64, n: usize, span: f64) -> Trace {
        let x: Vec<f64> = (0..n).map(|i| i as f64 * span / (n - 1) as f64).collect();
        let y = x.iter().map(|t| a * (-t / tau).exp() + b).collect();
        trace(TraceKind::ZeroSpanTime, x, y)
    }

    #[test]
    fn exponential_round_trip() {
        let t = synthetic_decay(1.0, 1.74, 0.1, 200, 8.0);
        let f = fit_exponential_decay(&t, (0.0, 8.0)).unwrap();
        assert!((f.amplitude - 1.0).abs() < 1e-6);
        assert!((f.time_constant / 1.74 - 1.0).abs() < 1e-6);
        assert!((f.offset / 0.1 - 1.0).abs() < 1e-6);
        assert!(f.rms_residual < 1e-9);
    }

    #[test]
    fn exponential_round_trip_in_watts() {
        let t = synthetic_decay(3e-13, 0.01, 2e-14, 300, 0.05);
        let f = fit_exponential_decay(&t, (0.0, 0.05)).unwrap();
        assert!((f.amplitude / 3e-13 - 1.0).abs() < 1e-6);
        assert!((f.time_constant / 0.01 - 1.0).abs() < 1e-6);
        assert!((f.offset / 2e-14 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_and_rising_traces_fail() {
        let flat = synthetic_decay(0.0, 1.0, 0.5, 100, 1.0);
        assert!(matches!(fit_exponential_decay(&flat, (0.0, 1.0)), Err(Error::Fit(_))));
        let x: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let y = x.iter().map(|t| 1.0 + t).collect();
        let rising = trace(TraceKind::ZeroSpanTime, x, y);
        assert!(matches!(fit_exponential_decay(&rising, (0.0, 0.99)), Err(Error::Fit(_))));
    }

    #[test]
    fn decay_window_checks() {
        let t = synthetic_decay(1.0, 1.0, 0.0, 50, 1.0);
        assert!(fit_exponential_decay(&t, (0.0, 0.1)).is_err());
        assert!(fit_exponential_decay(&t, (-1.0, 1.0)).is_err());
    }

    #[test]
    fn gaussian_round_trip() {
        let (c, s, h, b) = (619e6, 109e6 / 2.354_820_045, 2e-12, 1e-13);
        let x: Vec<f64> = (0..400).map(|i| 400e6 + i as f64 * 1e6).collect();
        let y = x.iter().map(|v| h * (-(v - c).powi(2) / (2.0 * s * s)).exp() + b).collect();
        let f = fit_gaussian(&trace(TraceKind::SpectrumVsFrequency, x, y)).unwrap();
        assert!((f.center / c - 1.0).abs() < 1e-6);
        assert!((f.sigma / s - 1.0).abs() < 1e-6);
        assert!((f.fwhm() / 109e6 - 1.0).abs() < 1e-6);
        assert!((f.height / h - 1.0).abs() < 1e-6);
        assert!((f.baseline / b - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_spectrum_has_no_peak() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y = x.iter().map(|v| 1.0 + 1e-3 * (v * 7.3).sin()).collect();
        assert!(matches!(
            fit_gaussian(&trace(TraceKind::SpectrumVsFrequency, x, y)),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn snr_properties() {
        let floor = NoiseFloor {
            thermal: 0.87,
            residual: 0.13,
        };
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let at_floor = trace(TraceKind::ZeroSpanTime, x.clone(), vec![1.0; 10]);
        assert_eq!(snr(&at_floor, &floor).unwrap(), 0.0);
        let mut y = vec![1.0; 10];
        y[4] = 1.0 + 0.87 * 3.0;
        let t = trace(TraceKind::ZeroSpanTime, x.clone(), y.clone());
        assert!((snr(&t, &floor).unwrap() - 3.0).abs() < 1e-12);
        y[4] = 1.0 + 0.87 * 6.0;
        let t2 = trace(TraceKind::ZeroSpanTime, x.clone(), y.clone());
        assert!((snr(&t2, &floor).unwrap() - 6.0).abs() < 1e-12);
        let gain = 1e6;
        let scaled = trace(TraceKind::ZeroSpanTime, x, y.iter().map(|v| v * gain).collect());
        let scaled_floor = NoiseFloor {
            thermal: floor.thermal * gain,
            residual: floor.residual * gain,
        };
        assert!((snr(&scaled, &scaled_floor).unwrap() - 6.0).abs() < 1e-9);
        assert!(snr(&t, &NoiseFloor { thermal: 0.0, residual: 0.0 }).is_err());
    }

    #[test]
    fn electron_number_examples() {
        assert_eq!(estimate_electron_number(6.8, 0.0062).unwrap(), 1097);
        assert_eq!(estimate_electron_number(1.0, 1.0).unwrap(), 1);
        assert_eq!(estimate_electron_number(6.8, 1.0).unwrap(), 7);
        assert!(estimate_electron_number(6.8, 0.0).is_err());
        assert!(estimate_electron_number(6.8, 1.5).is_err());
    }

    #[test]
    fn degradation_is_one_without_anharmonicity() {
        let kappa = angular(476e3);
        let harmonic = PotentialModel::new(angular(619e6), 0.0, 0.0, ELECTRON_MASS).unwrap();
        assert_eq!(computed_degradation(&harmonic, 300.0, kappa, 64).unwrap(), 1.0);
        let model = PotentialModel::new(angular(619e6), -1.5e-5, 0.0, ELECTRON_MASS).unwrap();
        let warm = computed_degradation(&model, 300.0, kappa, 64).unwrap();
        let hot = computed_degradation(&model, 2950.0, kappa, 64).unwrap();
        assert!(warm < 1.0 && hot < warm, "{warm} {hot}");
    }
}
