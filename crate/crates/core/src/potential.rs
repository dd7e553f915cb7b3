//! Anharmonic pseudo-potential along one trap axis.
//!
//! The well is modelled as the even polynomial
//! `U(z) = ½ m ω_z² (z² + C4 z⁴ + C6 z⁶)` with `z` in micrometres. Sampled
//! potentials (e.g. exported from a field solver) are fitted to that form,
//! and the model then yields amplitude-dependent secular frequencies, thermal
//! position spreads and the resulting inhomogeneous linewidth.

use std::f64::consts::{LN_2, TAU};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::consts::{hertz, BOLTZMANN, EV};
use crate::error::{Error, Result};

/// Relative size of the series correction beyond which the closed-form
/// amplitude shift is not trusted.
pub const SERIES_VALIDITY: f64 = 0.1;

const UM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Z,
    R,
}

/// Sampled potential along one axis: (coordinate μm, potential eV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSamples {
    pub axis: Axis,
    points: Vec<(f64, f64)>,
}

impl PotentialSamples {
    pub fn new(axis: Axis, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 7 {
            return Err(Error::InvalidSamples(format!(
                "need at least 7 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|(z, u)| !z.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidSamples("non-finite value".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidSamples(format!(
                "coordinates must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        let (first, last) = (points[0].0, points[points.len() - 1].0);
        if first > 0.0 || last < 0.0 {
            return Err(Error::InvalidSamples(format!(
                "domain [{first}, {last}] um does not include the trap centre"
            )));
        }
        Ok(Self { axis, points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Parses the field-map text format: `#` comment lines, one header line,
    /// then `coordinate_um, potential_eV` rows. A `# axis = r` comment selects
    /// the radial axis; the default is z.
    pub fn parse(text: &str) -> Result<Self> {
        let mut axis = Axis::Z;
        let mut header_seen = false;
        let mut points = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    if k.trim().eq_ignore_ascii_case("axis") {
                        axis = match v.trim().to_ascii_lowercase().as_str() {
                            "z" => Axis::Z,
                            "r" => Axis::R,
                            other => {
                                return Err(Error::InvalidSamples(format!(
                                    "line {}: unknown axis '{other}'",
                                    idx + 1
                                )))
                            }
                        };
                    }
                }
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.split(',').next().is_some_and(|f| f.trim().parse::<f64>().is_ok()) {
                    return Err(Error::InvalidSamples(format!(
                        "line {}: header line required before data",
                        idx + 1
                    )));
                }
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let parse = |f: Option<&str>| -> Result<f64> {
                f.ok_or_else(|| {
                    Error::InvalidSamples(format!("line {}: expected two columns", idx + 1))
                })?
                .parse::<f64>()
                .map_err(|e| Error::InvalidSamples(format!("line {}: {e}", idx + 1)))
            };
            let z = parse(fields.next())?;
            let u = parse(fields.next())?;
            if fields.next().is_some() {
                return Err(Error::InvalidSamples(format!(
                    "line {}: expected two columns",
                    idx + 1
                )));
            }
            points.push((z, u));
        }
        if !header_seen {
            return Err(Error::InvalidSamples("missing header line".into()));
        }
        Self::new(axis, points)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let axis = match self.axis {
            Axis::Z => "z",
            Axis::R => "r",
        };
        let _ = writeln!(out, "# axis = {axis}");
        out.push_str("coordinate_um,potential_eV\n");
        for (z, u) in &self.points {
            let _ = writeln!(out, "{z:e},{u:e}");
        }
        out
    }
}

/// Even-polynomial pseudo-potential model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    /// Harmonic secular frequency, rad/s.
    pub omega_z: f64,
    /// μm⁻².
    pub c4: f64,
    /// μm⁻⁴.
    pub c6: f64,
    /// kg.
    pub mass: f64,
}

impl PotentialModel {
    pub fn new(omega_z: f64, c4: f64, c6: f64, mass: f64) -> Result<Self> {
        if !(omega_z > 0.0) || !omega_z.is_finite() {
            return Err(Error::param("potential", format!("omega_z must be positive, got {omega_z}")));
        }
        if !(mass > 0.0) {
            return Err(Error::param("potential", "mass must be positive"));
        }
        if !c4.is_finite() || !c6.is_finite() {
            return Err(Error::param("potential", "non-finite anharmonic coefficient"));
        }
        Ok(Self { omega_z, c4, c6, mass })
    }

    /// Potential energy in eV at `z_um`.
    pub fn potential_ev(&self, z_um: f64) -> f64 {
        let z2 = z_um * z_um;
        0.5 * self.mass * self.omega_z.powi(2) * z2 * UM * UM
            * (1.0 + self.c4 * z2 + self.c6 * z2 * z2)
            / EV
    }

    /// Samples the model on the given coordinates.
    pub fn synthesize(&self, axis: Axis, coordinates_um: &[f64]) -> Result<PotentialSamples> {
        PotentialSamples::new(
            axis,
            coordinates_um.iter().map(|&z| (z, self.potential_ev(z))).collect(),
        )
    }

    /// Restoring-force shape `1 + 2C4 z² + 3C6 z⁴` (force / harmonic force).
    fn force_factor(&self, z2: f64) -> f64 {
        1.0 + 2.0 * self.c4 * z2 + 3.0 * self.c6 * z2 * z2
    }

    /// True if the restoring force stays inward on (0, |z|].
    pub fn is_bound(&self, amplitude_um: f64) -> bool {
        let w_max = amplitude_um * amplitude_um;
        // force_factor is a quadratic in w = z²; check the endpoint and the
        // vertex if it lies inside the interval.
        if self.force_factor(w_max) <= 0.0 {
            return false;
        }
        if self.c6 != 0.0 {
            let vertex = -self.c4 / (3.0 * self.c6);
            if vertex > 0.0 && vertex < w_max && self.force_factor(vertex) <= 0.0 {
                return false;
            }
        }
        true
    }

    /// Largest amplitude (μm) for which the series correction stays below
    /// [`SERIES_VALIDITY`] of ω_z. Infinite for a harmonic well.
    pub fn validity_radius(&self) -> f64 {
        if self.c4 == 0.0 {
            return f64::INFINITY;
        }
        let corr = |w: f64| series_correction(self.c4, w).abs();
        let mut hi = 1.0;
        while corr(hi) < SERIES_VALIDITY {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if corr(mid) < SERIES_VALIDITY {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo.sqrt()
    }

    /// Key-value report of the model (one `key = value` per line).
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "omega_z_over_2pi_hz = {:e}", hertz(self.omega_z));
        let _ = writeln!(out, "c4_per_um2 = {:e}", self.c4);
        let _ = writeln!(out, "c6_per_um4 = {:e}", self.c6);
        let _ = writeln!(out, "mass_kg = {:e}", self.mass);
        out
    }
}

fn series_correction(c4: f64, z2: f64) -> f64 {
    0.75 * c4 * z2 - 21.0 / 64.0 * c4 * c4 * z2 * z2
}

/// Which coordinates enter the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitWindow {
    /// Every provided sample.
    Full,
    /// Samples with |z| ≤ half-width (μm).
    HalfWidth(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialFit {
    pub model: PotentialModel,
    /// Constant offset of the samples, eV.
    pub offset_ev: f64,
    pub residual_rms_ev: f64,
    pub points_used: usize,
}

impl PotentialFit {
    pub fn report(&self) -> String {
        let mut out = self.model.report();
        let _ = writeln!(out, "offset_ev = {:e}", self.offset_ev);
        let _ = writeln!(out, "residual_rms_ev = {:e}", self.residual_rms_ev);
        let _ = writeln!(out, "points_used = {}", self.points_used);
        out
    }
}

/// Uniform-weight least-squares fit of `U0 + ½mω²(z² + C4z⁴ + C6z⁶)`.
pub fn fit_even_polynomial(
    samples: &PotentialSamples,
    mass: f64,
    window: FitWindow,
) -> Result<PotentialFit> {
    if !(mass > 0.0) {
        return Err(Error::param("potential", "mass must be positive"));
    }
    let used: Vec<(f64, f64)> = samples
        .points
        .iter()
        .copied()
        .filter(|(z, _)| match window {
            FitWindow::Full => true,
            FitWindow::HalfWidth(w) => z.abs() <= w,
        })
        .collect();
    let mut distinct: Vec<f64> = used.iter().map(|(z, _)| z.abs()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::PotentialFit(format!(
            "rank deficient: {} distinct |z| values in window, 4 needed",
            distinct.len()
        )));
    }
    let scale = distinct.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);

    let n = used.len();
    let design = DMatrix::from_fn(n, 4, |i, j| (used[i].0 / scale).powi(2 * j as i32));
    let rhs = DVector::from_iterator(n, used.iter().map(|p| p.1));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::PotentialFit("rank-deficient design matrix".into()));
    }
    let coef = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::PotentialFit(e.to_string()))?;

    let b2 = coef[1] / scale.powi(2);
    let b4 = coef[2] / scale.powi(4);
    let b6 = coef[3] / scale.powi(6);
    let resid = &rhs - &design * &coef;
    let residual_rms_ev = (resid.norm_squared() / n as f64).sqrt();
    let span = used.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
        - used.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if !(b2 > 0.0) || !(span > 0.0) || b2 * scale * scale <= 1e-12 * span {
        return Err(Error::PotentialFit(
            "no confining quadratic term (flat or inverted samples)".into(),
        ));
    }
    // b2 in eV/μm² → ½ m ω² in J/m².
    let omega_z = (2.0 * b2 * EV / (UM * UM) / mass).sqrt();
    Ok(PotentialFit {
        model: PotentialModel::new(omega_z, b4 / b2, b6 / b2, mass)?,
        offset_ev: coef[0],
        residual_rms_ev,
        points_used: n,
    })
}

/// Secular frequency at oscillation amplitude `z_um` from the closed-form
/// series `ω_z [1 + (3C4/4) z² − (21C4²/64) z⁴]` (C6 neglected).
pub fn frequency_at_amplitude(model: &PotentialModel, z_um: f64) -> Result<f64> {
    let corr = series_correction(model.c4, z_um * z_um);
    if !(corr.abs() < SERIES_VALIDITY) {
        return Err(Error::OutOfRange {
            amplitude_um: z_um.abs(),
            radius_um: model.validity_radius(),
        });
    }
    Ok(model.omega_z * (1.0 + corr))
}

/// RK4 steps per harmonic period for the brute-force path.
const BRUTE_FORCE_STEPS: f64 = 20_000.0;

/// Secular frequency at amplitude `z_um` by integrating
/// `z̈ = −ω_z²(z + 2C4z³ + 3C6z⁵)` from the turning point to the first zero
/// crossing (a quarter period for an even potential). Includes C6.
pub fn frequency_brute_force(model: &PotentialModel, z_um: f64) -> Result<f64> {
    let amp = z_um.abs();
    if amp == 0.0 {
        return Ok(model.omega_z);
    }
    if !model.is_bound(amp) {
        return Err(Error::Unbound { amplitude_um: amp });
    }
    // Dimensionless time s = ω_z t.
    let accel = |x: f64| -x * model.force_factor(x * x);
    let h = TAU / BRUTE_FORCE_STEPS;
    let (mut x, mut v) = (amp, 0.0);
    let mut s = 0.0;
    let max_steps = (BRUTE_FORCE_STEPS * 1000.0) as usize;
    for _ in 0..max_steps {
        let (x0, v0) = (x, v);
        let k1 = (v, accel(x));
        let k2 = (v + 0.5 * h * k1.1, accel(x + 0.5 * h * k1.0));
        let k3 = (v + 0.5 * h * k2.1, accel(x + 0.5 * h * k2.0));
        let k4 = (v + h * k3.1, accel(x + h * k3.0));
        x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if x <= 0.0 {
            // Cubic Hermite interpolation of the crossing inside the step.
            let frac = hermite_root(x0, v0 * h, x, v * h);
            let quarter = s + frac * h;
            return Ok(model.omega_z * TAU / (4.0 * quarter));
        }
        s += h;
    }
    Err(Error::Unbound { amplitude_um: amp })
}

fn hermite_root(p0: f64, m0: f64, p1: f64, m1: f64) -> f64 {
    let eval = |t: f64| {
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Series where it is valid, brute force beyond the validity radius.
pub fn frequency_at_amplitude_any(model: &PotentialModel, z_um: f64) -> Result<f64> {
    match frequency_at_amplitude(model, z_um) {
        Err(Error::OutOfRange { .. }) => frequency_brute_force(model, z_um),
        other => other,
    }
}

/// Harmonic thermal position spread `sqrt(k_B T / (m ω_z²))` in μm.
pub fn thermal_amplitude(model: &PotentialModel, temperature: f64) -> Result<f64> {
    if !(temperature >= 0.0) {
        return Err(Error::param("potential", "temperature must be non-negative"));
    }
    Ok((BOLTZMANN * temperature / model.mass).sqrt() / model.omega_z / UM)
}

/// Frequency shift at one thermal standard deviation, rad/s.
pub fn inhomogeneous_linewidth(model: &PotentialModel, temperature: f64) -> Result<f64> {
    let sigma = thermal_amplitude(model, temperature)?;
    Ok((frequency_at_amplitude_any(model, sigma)? - model.omega_z).abs())
}

/// Full width at half maximum of the Boltzmann-weighted distribution of
/// frequency shifts, rad/s.
///
/// In one dimension A² is exponentially distributed with mean 2σ², so the
/// density of shifts falls to half its peak at `A = σ·sqrt(2 ln 2)`. Exact to
/// first order in C4.
pub fn boltzmann_fwhm_linewidth(model: &PotentialModel, temperature: f64) -> Result<f64> {
    let sigma = thermal_amplitude(model, temperature)?;
    let amp = sigma * (2.0 * LN_2).sqrt();
    Ok((frequency_at_amplitude_any(model, amp)? - model.omega_z).abs())
}

/// One equal-population slice of a thermal ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBin {
    pub amplitude_um: f64,
    /// Fraction of the ensemble in the slice.
    pub weight: f64,
    /// ω(A)/ω_z.
    pub relative_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyDistribution {
    pub bins: Vec<FrequencyBin>,
    /// Population above the well barrier, dropped from `bins`.
    pub unbound_fraction: f64,
}

/// Partitions a thermal ensemble into `count` equal-probability amplitude
/// slices (midpoint quantiles of the exponential A² distribution) and
/// evaluates each slice's secular frequency.
pub fn frequency_distribution(
    model: &PotentialModel,
    temperature: f64,
    count: usize,
) -> Result<FrequencyDistribution> {
    if count == 0 {
        return Err(Error::param("potential", "bin count must be positive"));
    }
    let sigma = thermal_amplitude(model, temperature)?;
    let weight = 1.0 / count as f64;
    let mut bins = Vec::with_capacity(count);
    let mut unbound = 0.0;
    for k in 0..count {
        let p = (k as f64 + 0.5) * weight;
        let amp = sigma * (-2.0 * (1.0 - p).ln()).sqrt();
        match frequency_at_amplitude_any(model, amp) {
            Ok(w) => bins.push(FrequencyBin {
                amplitude_um: amp,
                weight,
                relative_frequency: w / model.omega_z,
            }),
            Err(Error::Unbound { .. }) => unbound += weight,
            Err(e) => return Err(e),
        }
    }
    Ok(FrequencyDistribution {
        bins,
        unbound_fraction: unbound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::{angular, ELECTRON_MASS};

    fn paper_model() -> PotentialModel {
        PotentialModel::new(angular(619e6), -1.5e-5, 0.0, ELECTRON_MASS).unwrap()
    }

    fn grid(half: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn samples_validation() {
        let pts = |v: &[f64]| v.iter().map(|&z| (z, z * z)).collect::<Vec<_>>();
        assert!(PotentialSamples::new(Axis::Z, pts(&[-3., -2., -1., 0., 1., 2.])).is_err());
        assert!(PotentialSamples::new(Axis::Z, pts(&[-3., -2., -1., 0., 1., 2., 2.])).is_err());
        assert!(PotentialSamples::new(Axis::Z, pts(&[1., 2., 3., 4., 5., 6., 7.])).is_err());
        assert!(PotentialSamples::new(Axis::Z, pts(&[-3., -2., -1., 0., 1., 2., 3.])).is_ok());
    }

    #[test]
    fn round_trip_fit() {
        let model = paper_model();
        let samples = model.synthesize(Axis::Z, &grid(50.0, 101)).unwrap();
        let fit = fit_even_polynomial(&samples, ELECTRON_MASS, FitWindow::Full).unwrap();
        assert!((fit.model.omega_z / model.omega_z - 1.0).abs() < 1e-6);
        assert!((fit.model.c4 / model.c4 - 1.0).abs() < 1e-6);
        assert!(fit.model.c6.abs() < 1e-6 * model.c4.abs() / 50.0);
    }

    #[test]
    fn harmonic_samples_give_zero_anharmonicity() {
        let model = PotentialModel::new(angular(619e6), 0.0, 0.0, ELECTRON_MASS).unwrap();
        let samples = model.synthesize(Axis::R, &grid(40.0, 81)).unwrap();
        let fit = fit_even_polynomial(&samples, ELECTRON_MASS, FitWindow::Full).unwrap();
        assert!(fit.model.c4.abs() < 1e-12);
        assert!(fit.model.c6.abs() < 1e-14);
    }

    #[test]
    fn flat_samples_are_a_fit_error() {
        let s = PotentialSamples::new(Axis::Z, grid(10.0, 11).into_iter().map(|z| (z, 0.3)).collect())
            .unwrap();
        assert!(matches!(
            fit_even_polynomial(&s, ELECTRON_MASS, FitWindow::Full),
            Err(Error::PotentialFit(_))
        ));
    }

    #[test]
    fn too_few_distinct_abs_coordinates() {
        let s = PotentialSamples::new(
            Axis::Z,
            [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0].iter().map(|&z| (z, z * z)).collect(),
        )
        .unwrap();
        assert!(matches!(
            fit_even_polynomial(&s, ELECTRON_MASS, FitWindow::HalfWidth(2.0)),
            Err(Error::PotentialFit(_))
        ));
    }

    #[test]
    fn field_map_text_round_trip_and_errors() {
        let model = paper_model();
        let s = model.synthesize(Axis::R, &grid(30.0, 13)).unwrap();
        let back = PotentialSamples::parse(&s.to_text()).unwrap();
        assert_eq!(back, s);
        assert!(PotentialSamples::parse("0,1\n1,2\n").is_err());
        assert!(PotentialSamples::parse("# only comments\n").is_err());
    }

    #[test]
    fn series_frequency_basics() {
        let m = paper_model();
        assert_eq!(frequency_at_amplitude(&m, 0.0).unwrap(), m.omega_z);
        let shift = m.omega_z - frequency_at_amplitude(&m, 17.3).unwrap();
        assert!((hertz(shift) / 2e6 - 1.0).abs() < 0.05, "shift {} Hz", hertz(shift));
        assert!(matches!(frequency_at_amplitude(&m, 150.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn validity_radius_is_where_correction_hits_ten_percent() {
        let m = paper_model();
        let r = m.validity_radius();
        let corr = |z: f64| series_correction(m.c4, z * z).abs();
        assert!(corr(r * 0.999) < SERIES_VALIDITY && corr(r * 1.001) > SERIES_VALIDITY);
        let h = PotentialModel::new(1.0, 0.0, 0.0, 1.0).unwrap();
        assert!(h.validity_radius().is_infinite());
    }

    #[test]
    fn thermal_amplitude_values() {
        let m = paper_model();
        assert!((thermal_amplitude(&m, 300.0).unwrap() / 17.3 - 1.0).abs() < 0.01);
        assert_eq!(thermal_amplitude(&m, 0.0).unwrap(), 0.0);
        let hot = thermal_amplitude(&m, 2950.0).unwrap();
        assert!((hot - 17.34 * (2950.0f64 / 300.0).sqrt()).abs() < 0.1);
    }

    #[test]
    fn linewidth_values() {
        let m = paper_model();
        let lw = hertz(inhomogeneous_linewidth(&m, 300.0).unwrap());
        assert!((lw / 2e6 - 1.0).abs() < 0.06, "{lw}");
        let sigma = thermal_amplitude(&m, 300.0).unwrap();
        let first_order = hertz(m.omega_z * 0.75 * m.c4.abs() * sigma * sigma);
        assert!((first_order / 2.08e6 - 1.0).abs() < 0.01, "{first_order}");
        let h = PotentialModel::new(m.omega_z, 0.0, 0.0, m.mass).unwrap();
        assert_eq!(inhomogeneous_linewidth(&h, 300.0).unwrap(), 0.0);
    }

    #[test]
    fn brute_force_unbound_above_barrier() {
        let m = paper_model();
        // Force vanishes at z² = 1/(2|C4|) ≈ (182.6 um)².
        assert!(matches!(frequency_brute_force(&m, 190.0), Err(Error::Unbound { .. })));
        assert!(frequency_brute_force(&m, 150.0).unwrap() < m.omega_z);
    }

    #[test]
    fn distribution_is_equal_weight_and_red_shifted() {
        let m = paper_model();
        let d = frequency_distribution(&m, 300.0, 64).unwrap();
        assert_eq!(d.bins.len(), 64);
        assert_eq!(d.unbound_fraction, 0.0);
        assert!(d.bins.iter().all(|b| b.relative_frequency < 1.0));
        assert!(d.bins.windows(2).all(|w| w[1].relative_frequency < w[0].relative_frequency));
    }
}
