use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::Path;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trapsim::consts::{angular, ELECTRON_MASS};
use trapsim::potential::{
    fit_even_polynomial, frequency_at_amplitude, frequency_brute_force, inhomogeneous_linewidth,
    thermal_amplitude, Axis, FitWindow, PotentialSamples, PotentialModel,
};

fn reference_model() -> PotentialModel {
    PotentialModel::new(angular(619e6), -1.5e-5, 0.0, ELECTRON_MASS).unwrap()
}

/// Oscillation frequency from the period integral of the even potential
/// `U ∝ z² + C4 z⁴ + C6 z⁶`, with `z = A sin θ` removing the turning-point
/// singularity, and midpoint quadrature on a fine grid.
fn period_integral_frequency(omega_z: f64, c4: f64, c6: f64, amp: f64) -> f64 {
    let u = |z: f64| {
        let z2 = z * z;
        z2 + c4 * z2 * z2 + c6 * z2 * z2 * z2
    };
    let n = 200_000;
    let h = FRAC_PI_2 / n as f64;
    let mut integral = 0.0;
    for i in 0..n {
        let theta = (i as f64 + 0.5) * h;
        let z = amp * theta.sin();
        // dz / sqrt(U(A) - U(z)) with dz = A cos θ dθ.
        integral += amp * theta.cos() / (u(amp) - u(z)).sqrt() * h;
    }
    // ½ż² = ½ω_z²(U(A) − U(z)) ⇒ T = 4 ∫ dz / (ω_z sqrt(U(A) − U(z))).
    let period = 4.0 * integral / omega_z;
    TAU / period
}

#[test]
fn series_shift_at_thermal_amplitude_is_two_megahertz() {
    let m = reference_model();
    let shift = (frequency_at_amplitude(&m, 17.3).unwrap() - m.omega_z).abs() / TAU;
    assert!((shift - 2.0e6).abs() < 0.1e6, "shift {shift} Hz");
}

#[test]
fn series_agrees_with_period_integral_at_10_um() {
    let m = reference_model();
    let series = frequency_at_amplitude(&m, 10.0).unwrap();
    let oracle = period_integral_frequency(m.omega_z, m.c4, m.c6, 10.0);
    assert!(((series - oracle) / oracle).abs() < 0.01);
}

#[test]
fn brute_force_agrees_with_period_integral() {
    let m = PotentialModel::new(angular(619e6), -1.5e-5, 2e-11, ELECTRON_MASS).unwrap();
    for &amp in &[5.0, 17.3, 54.3, 120.0] {
        let brute = frequency_brute_force(&m, amp).unwrap();
        let oracle = period_integral_frequency(m.omega_z, m.c4, m.c6, amp);
        assert!(((brute - oracle) / oracle).abs() < 1e-6, "A = {amp}: {brute} vs {oracle}");
    }
}

#[test]
fn series_shift_within_five_percent_of_brute_force_at_17_3_um() {
    let m = reference_model();
    let series = frequency_at_amplitude(&m, 17.3).unwrap() - m.omega_z;
    let brute = frequency_brute_force(&m, 17.3).unwrap() - m.omega_z;
    assert!(((series - brute) / brute).abs() < 0.05);
}

#[test]
fn thermal_amplitude_values_and_scaling() {
    let m = reference_model();
    let s300 = thermal_amplitude(&m, 300.0).unwrap();
    assert!(((s300 - 17.3) / 17.3).abs() < 0.01, "σ = {s300}");
    let s2950 = thermal_amplitude(&m, 2950.0).unwrap();
    assert!((s2950 / s300 - (2950.0f64 / 300.0).sqrt()).abs() < 1e-12);
    let doubled = PotentialModel::new(2.0 * m.omega_z, m.c4, 0.0, ELECTRON_MASS).unwrap();
    assert!((thermal_amplitude(&doubled, 300.0).unwrap() * 2.0 - s300).abs() < 1e-12);
}

#[test]
fn linewidth_leading_term_by_hand() {
    let m = reference_model();
    let sigma = thermal_amplitude(&m, 300.0).unwrap();
    let leading = m.omega_z * 0.75 * m.c4.abs() * sigma * sigma / TAU;
    assert!(((leading - 2.08e6) / 2.08e6).abs() < 0.01, "leading term {leading} Hz");
    let full = inhomogeneous_linewidth(&m, 300.0).unwrap() / TAU;
    assert!(((full - leading) / leading).abs() < 0.01);
}

#[test]
fn noisy_samples_recover_coefficients() {
    let m = PotentialModel::new(angular(619e6), -1.5e-5, 1e-10, ELECTRON_MASS).unwrap();
    let coords: Vec<f64> = (0..201).map(|i| -100.0 + i as f64).collect();
    let clean = m.synthesize(Axis::Z, &coords).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noisy: Vec<(f64, f64)> = clean
        .points()
        .iter()
        .map(|&(z, u)| (z, u * (1.0 + 1e-3 * (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt())))
        .collect();
    let samples = PotentialSamples::new(Axis::Z, noisy).unwrap();
    let fit = fit_even_polynomial(&samples, ELECTRON_MASS, FitWindow::Full).unwrap();
    assert!(((fit.model.omega_z - m.omega_z) / m.omega_z).abs() < 0.05);
    assert!(((fit.model.c4 - m.c4) / m.c4).abs() < 0.05);
}

#[test]
fn shipped_field_map_fits_reference_coefficients() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/fieldmap_z.txt");
    let samples = PotentialSamples::read(path).unwrap();
    let fit = fit_even_polynomial(&samples, ELECTRON_MASS, FitWindow::HalfWidth(50.0)).unwrap();
    assert!(((fit.model.c4 + 1.5e-5) / 1.5e-5).abs() < 1e-4, "c4 {}", fit.model.c4);
    assert!(((fit.model.omega_z - angular(619e6)) / angular(619e6)).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn series_frequency_is_even(z in 0.0f64..40.0) {
        let m = reference_model();
        prop_assert_eq!(frequency_at_amplitude(&m, z).unwrap(), frequency_at_amplitude(&m, -z).unwrap());
    }

    #[test]
    fn series_frequency_falls_with_amplitude_for_negative_c4(z in 0.1f64..40.0, dz in 0.01f64..5.0) {
        let m = reference_model();
        prop_assert!(frequency_at_amplitude(&m, z + dz).unwrap() < frequency_at_amplitude(&m, z).unwrap());
    }

    #[test]
    fn series_and_oracle_agree_where_correction_is_small(z in 0.5f64..57.0) {
        let m = reference_model();
        prop_assume!(m.c4.abs() * z * z < 0.05);
        let series = frequency_at_amplitude(&m, z).unwrap();
        let oracle = period_integral_frequency(m.omega_z, m.c4, 0.0, z);
        prop_assert!(((series - oracle) / oracle).abs() < 0.01);
    }
}
