use std::f64::consts::PI;

use proptest::prelude::*;
use trapsim::consts::{angular, Particle};
use trapsim::mathieu::{
    beta_continued_fraction, default_time_step, extract_frequency, integrate_equation_of_motion,
    monodromy, pseudo_potential, secular_frequency, stability_boundary, stability_parameters,
    IntegrationOptions, MathieuParams, TrapDrive,
};

const DRIVE_HZ: f64 = 3.105e9;

/// β from a Mathieu monodromy built with a plain RK4 in the test itself:
/// `cos(πβ) = trace / 2` over one period of `cos 2τ`.
fn beta_reference(a: f64, q: f64) -> f64 {
    let steps = 20_000;
    let h = PI / steps as f64;
    let f = |t: f64, y: [f64; 2]| [y[1], -(a - 2.0 * q * (2.0 * t).cos()) * y[0]];
    let propagate = |mut y: [f64; 2]| {
        let mut t = 0.0;
        for _ in 0..steps {
            let k1 = f(t, y);
            let k2 = f(t + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = f(t + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = f(t + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            t += h;
        }
        y
    };
    let c = propagate([1.0, 0.0]);
    let s = propagate([0.0, 1.0]);
    ((c[0] + s[1]) / 2.0).acos() / PI
}

fn drive_at(q: f64) -> TrapDrive {
    TrapDrive::calibrated(angular(DRIVE_HZ), 1.0, q, angular(619e6), Particle::electron()).unwrap()
}

#[test]
fn continued_fraction_matches_reference_monodromy() {
    for &q in &[0.05, 0.2, 0.4, 0.56, 0.7, 0.85] {
        let cf = beta_continued_fraction(MathieuParams::new(0.0, q), 1e-13).unwrap();
        let reference = beta_reference(0.0, q);
        assert!((cf - reference).abs() < 1e-8, "q = {q}: {cf} vs {reference}");
    }
}

#[test]
fn library_monodromy_agrees_with_continued_fraction() {
    for i in 0..50 {
        let q = 0.8 * (i as f64 + 0.5) / 50.0;
        let p = MathieuParams::new(0.0, q);
        let cf = beta_continued_fraction(p, 1e-13).unwrap();
        let fl = monodromy(p, 4096).beta().unwrap();
        assert!((cf - fl).abs() < 1e-6, "q = {q}: {cf} vs {fl}");
    }
}

#[test]
fn stability_boundary_near_0_908() {
    let q = stability_boundary(0.0, 0.5, 1.0, 1e-4).unwrap();
    assert!((0.90..=0.92).contains(&q), "boundary at {q}");
    assert!((q - 0.908).abs() < 1e-3);
}

#[test]
fn integrated_trajectory_frequency_matches_secular_frequency() {
    let omega = angular(DRIVE_HZ);
    for &q in &[0.1, 0.3] {
        let drive = drive_at(q);
        let p = stability_parameters(&drive, &Particle::electron()).unwrap();
        let expected = secular_frequency(p, omega).unwrap();
        let periods = 200.0;
        let duration = periods * std::f64::consts::TAU / expected;
        let traj = integrate_equation_of_motion(
            &drive,
            &Particle::electron(),
            (1e-6, 0.0),
            duration,
            default_time_step(&drive),
            &IntegrationOptions::default(),
        )
        .unwrap();
        let measured = extract_frequency(&traj).unwrap();
        assert!(
            ((measured - expected) / expected).abs() < 1e-3,
            "q = {q}: {measured} vs {expected}"
        );
    }
}

/// Centred one-period boxcar: trapezoid weights over `n + 1` samples so the
/// window is symmetric about each output sample and removes linear trends.
fn centred_boxcar(values: &[f64], n: usize) -> Vec<f64> {
    values
        .windows(n + 1)
        .map(|w| (w[1..n].iter().sum::<f64>() + 0.5 * (w[0] + w[n])) / n as f64)
        .collect()
}

/// Mean micromotion kinetic energy, taken as the velocity about its centred
/// one-period boxcar, divided by the mean pseudo-potential at the boxcar
/// position.
fn micromotion_ratio(q: f64) -> f64 {
    let e = Particle::electron();
    let drive = drive_at(q);
    let omega = drive.drive_angular_frequency;
    let dt = default_time_step(&drive);
    let per_period = (std::f64::consts::TAU / omega / dt).round() as usize;
    let p = stability_parameters(&drive, &e).unwrap();
    let secular = secular_frequency(p, omega).unwrap();
    let duration = 20.0 * std::f64::consts::TAU / secular;
    let traj = integrate_equation_of_motion(&drive, &e, (20e-6, 0.0), duration, dt, &IntegrationOptions::default())
        .unwrap();
    let x: Vec<f64> = traj.positions().collect();
    let v: Vec<f64> = traj.velocities().collect();
    let x_mean = centred_boxcar(&x, per_period);
    let v_mean = centred_boxcar(&v, per_period);
    let half = per_period / 2;
    let kinetic: f64 = v[half..]
        .iter()
        .zip(&v_mean)
        .map(|(v, m)| 0.5 * e.mass * (v - m).powi(2))
        .sum();
    let pseudo: f64 = x_mean
        .iter()
        .map(|&xm| pseudo_potential(drive.field_gradient() * xm, omega, &e).unwrap())
        .sum();
    kinetic / pseudo
}

#[test]
fn micromotion_energy_matches_pseudo_potential_for_small_q() {
    for &q in &[0.05, 0.1, 0.2, 0.3] {
        let ratio = micromotion_ratio(q);
        assert!((ratio - 1.0).abs() < 0.05, "q = {q}: ratio {ratio}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_increases_with_q(q in 0.01f64..0.88, dq in 1e-4f64..0.02) {
        let lo = beta_continued_fraction(MathieuParams::new(0.0, q), 1e-13).unwrap();
        let hi = beta_continued_fraction(MathieuParams::new(0.0, (q + dq).min(0.9)), 1e-13).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn beta_stays_in_unit_interval(q in 0.0f64..0.9) {
        let b = beta_continued_fraction(MathieuParams::new(0.0, q), 1e-13).unwrap();
        prop_assert!((0.0..1.0).contains(&b));
    }
}
