//! Floquet analysis of the Mathieu equation through the one-period
//! monodromy matrix.
//!
//! Two independent solutions, started from (x, x') = (1, 0) and (0, 1), are
//! integrated over one drive period `τ ∈ [0, π]`. The columns of the
//! resulting 2×2 matrix map any initial state to its state one period later;
//! its eigenvalues are `exp(±iπβ)` inside a stability region, so
//! `trace = 2 cos(πβ)` and `|trace| > 2` means unbounded motion.

use std::f64::consts::PI;

use super::MathieuParams;
use crate::error::{Error, Result};

/// RK4 steps per drive period. Local error ~ (π/N)^5 keeps β accurate to
/// well below 1e-9 for q < 0.9.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monodromy {
    /// Row-major [[x1, x2], [x1', x2']].
    pub matrix: [[f64; 2]; 2],
}

impl Monodromy {
    pub fn trace(&self) -> f64 {
        self.matrix[0][0] + self.matrix[1][1]
    }

    pub fn determinant(&self) -> f64 {
        self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0]
    }

    pub fn is_stable(&self) -> bool {
        self.trace().abs() <= 2.0
    }

    /// Largest Floquet multiplier magnitude.
    pub fn spectral_radius(&self) -> f64 {
        let t = self.trace();
        let d = self.determinant();
        let disc = t * t / 4.0 - d;
        if disc <= 0.0 {
            d.abs().sqrt()
        } else {
            (t / 2.0).abs() + disc.sqrt()
        }
    }

    /// Characteristic exponent in the lowest region, `acos(trace/2)/π`.
    pub fn beta(&self) -> Result<f64> {
        let half = self.trace() / 2.0;
        if half.abs() > 1.0 {
            return Err(Error::param(
                "mathieu",
                format!("monodromy trace {} outside [-2, 2]: unstable", self.trace()),
            ));
        }
        Ok(half.acos() / PI)
    }
}

fn rhs(params: MathieuParams, tau: f64, state: [f64; 2]) -> [f64; 2] {
    let k = params.a - 2.0 * params.q * (2.0 * tau).cos();
    [state[1], -k * state[0]]
}

fn rk4_period(params: MathieuParams, mut y: [f64; 2], steps: usize) -> [f64; 2] {
    let h = PI / steps as f64;
    for n in 0..steps {
        let t = n as f64 * h;
        let k1 = rhs(params, t, y);
        let k2 = rhs(params, t + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = rhs(params, t + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = rhs(params, t + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    }
    y
}

/// One-period monodromy matrix of `x'' + (a - 2q cos 2τ)x = 0`.
pub fn monodromy(params: MathieuParams, steps_per_period: usize) -> Monodromy {
    let steps = steps_per_period.max(16);
    let c1 = rk4_period(params, [1.0, 0.0], steps);
    let c2 = rk4_period(params, [0.0, 1.0], steps);
    Monodromy {
        matrix: [[c1[0], c2[0]], [c1[1], c2[1]]],
    }
}

/// Locates the upper edge of the lowest stability region along q at fixed
/// `a` by bisection on `|trace| > 2`, starting from a stable `q_lo` and an
/// unstable `q_hi`.
pub fn stability_boundary(a: f64, q_lo: f64, q_hi: f64, tolerance: f64) -> Result<f64> {
    let unstable = |q: f64| !monodromy(MathieuParams::new(a, q), DEFAULT_STEPS_PER_PERIOD).is_stable();
    if unstable(q_lo) || !unstable(q_hi) {
        return Err(Error::param(
            "mathieu",
            format!("[{q_lo}, {q_hi}] does not bracket the stability edge at a = {a}"),
        ));
    }
    let (mut lo, mut hi) = (q_lo, q_hi);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if unstable(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
