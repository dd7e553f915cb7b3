use num_complex::Complex64;
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use trapsim::cavity::{
    cooling_rate, filter_budget, noise_floor, Baths, CavityMode, CouplingParams, FilterChain,
    FilterStage, Propagator,
};
use trapsim::consts::angular;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Classic RK4 on `ȧe = (−iΔ − γ0/2) ae − iG ap`, `ȧp = −iG ae − (κ/2) ap`.
fn rk4_coupled(
    g: f64,
    delta: f64,
    kappa: f64,
    gamma0: f64,
    mut y: [Complex64; 2],
    duration: f64,
    steps: usize,
) -> [Complex64; 2] {
    let h = duration / steps as f64;
    let f = |y: [Complex64; 2]| {
        [
            (-I * delta - gamma0 / 2.0) * y[0] - I * g * y[1],
            -I * g * y[0] - kappa / 2.0 * y[1],
        ]
    };
    let add = |a: [Complex64; 2], b: [Complex64; 2], s: f64| [a[0] + b[0] * s, a[1] + b[1] * s];
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(add(y, k1, h / 2.0));
        let k3 = f(add(y, k2, h / 2.0));
        let k4 = f(add(y, k3, h));
        for j in 0..2 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    y
}

#[test]
fn propagator_matches_independent_integration() {
    let kappa: f64 = 1.0;
    for &(g, delta, gamma0) in &[(0.05, 0.0, 0.0), (0.2, 0.3, 0.01), (0.4, -2.0, 0.1), (0.01, 40.0, 0.0)] {
        let dt = 0.05 / kappa.max(g);
        let baths = Baths { electron_damping: gamma0, ..Baths::default() };
        let prop = Propagator::new(g, delta, kappa, &baths, dt).unwrap();
        let (mut ae, mut ap) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5));
        let steps = 400;
        for _ in 0..steps {
            prop.apply::<ChaCha8Rng>(&mut ae, &mut ap, None);
        }
        let reference = rk4_coupled(
            g,
            delta,
            kappa,
            gamma0,
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5)],
            steps as f64 * dt,
            200_000,
        );
        assert!((ae - reference[0]).norm() < 1e-8, "g {g}, Δ {delta}: {ae} vs {}", reference[0]);
        assert!((ap - reference[1]).norm() < 1e-8);
    }
}

#[test]
fn reference_cooling_rate() {
    let gamma = cooling_rate(&CouplingParams::new(angular(54e3), 0.0), angular(476e3)).unwrap();
    assert!((gamma / angular(24.5e3) - 1.0).abs() < 0.01, "{}", gamma / angular(1.0));
}

#[test]
fn detuning_of_62_mhz_suppresses_cooling_by_three_decades() {
    let kappa = angular(476e3);
    let g = 8.65e3;
    let on = cooling_rate(&CouplingParams::new(g, 0.0), kappa).unwrap();
    let off = cooling_rate(&CouplingParams::new(g, angular(62e6)), kappa).unwrap();
    assert!(on / off >= 1e3, "suppression {}", on / off);

    // Simulated energy loss over 1/γ at each detuning.
    let decay = |delta: f64| {
        let dt = 0.05 / kappa;
        let steps = (1.0 / on / dt).ceil() as usize;
        let prop = Propagator::new(g, delta, kappa, &Baths::default(), dt).unwrap();
        let (mut ae, mut ap) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        for _ in 0..steps {
            prop.apply::<ChaCha8Rng>(&mut ae, &mut ap, None);
        }
        -ae.norm_sqr().ln() / (steps as f64 * dt)
    };
    let simulated = decay(0.0) / decay(angular(62e6));
    assert!(simulated >= 1e3, "simulated suppression {simulated}");
}

#[test]
fn floor_scales_with_bandwidth() {
    let mode = CavityMode::new(angular(619e6), 1300.0, 20000.0, 300.0).unwrap();
    let chain = FilterChain::reference();
    let a = noise_floor(&mode, 1.0, &chain, 0.87).unwrap();
    let b = noise_floor(&mode, 10.0, &chain, 0.87).unwrap();
    assert!((b.total() / a.total() - 10.0).abs() < 1e-12);
    assert!((a.thermal_share() - 0.87).abs() < 1e-12);
}

fn stage(name: &str, db: f64) -> FilterStage {
    FilterStage {
        name: name.into(),
        suppression_db: db,
        transmission_db: -0.1 * db,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cooling_rate_is_even_in_detuning(g in 1.0f64..1e5, delta in -1e9f64..1e9, kappa in 1e3f64..1e7) {
        let plus = cooling_rate(&CouplingParams::new(g, delta), kappa).unwrap();
        let minus = cooling_rate(&CouplingParams::new(g, -delta), kappa).unwrap();
        prop_assert_eq!(plus, minus);
    }

    #[test]
    fn cooling_rate_times_lorentzian_denominator_is_constant(g in 1.0f64..1e5, delta in -1e9f64..1e9, kappa in 1e3f64..1e7) {
        let rate = cooling_rate(&CouplingParams::new(g, delta), kappa).unwrap();
        let product = rate * (kappa * kappa + 4.0 * delta * delta);
        let expected = 4.0 * g * g * kappa;
        prop_assert!((product / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_is_order_independent_and_additive(
        dbs in proptest::collection::vec(0.0f64..100.0, 0..8),
        rotate in 0usize..8,
        extra in 0.0f64..50.0,
    ) {
        let stages: Vec<FilterStage> = dbs.iter().enumerate().map(|(i, d)| stage(&format!("s{i}"), *d)).collect();
        let chain = FilterChain { stages: stages.clone(), gain_db: 62.0 };
        let mut rotated = stages.clone();
        if !rotated.is_empty() {
            let k = rotate % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
        }
        let permuted = FilterChain { stages: rotated, gain_db: 62.0 };
        prop_assert!((filter_budget(&chain) - filter_budget(&permuted)).abs() < 1e-9);
        let mut longer = chain.clone();
        longer.stages.push(stage("extra", extra));
        prop_assert!((filter_budget(&longer) - filter_budget(&chain) - extra).abs() < 1e-9);
    }
}
