use std::f64::consts::{PI, TAU};

use rustfft::{num_complex::Complex, FftPlanner};

use super::Trajectory;
use crate::error::{Error, Result};

/// Minimum number of oscillation periods the record must span.
pub const MIN_PERIODS: f64 = 16.0;

/// Peak-to-median spectral power ratio below which no oscillation is
/// reported.
const DETECTION_RATIO: f64 = 100.0;

/// Dominant oscillation frequency (rad/s) of the position record.
///
/// Hann-windowed, zero-padded FFT; the peak is refined by a parabola through
/// the log-magnitudes of the three bins around it, which is exact for a
/// Gaussian-like main lobe and well inside a quarter bin for Hann. When the
/// trajectory carries its drive frequency, the search is limited to the
/// band below Ω/2 so micromotion sidebands are never selected.
pub fn extract_frequency(trajectory: &Trajectory) -> Result<f64> {
    let n = trajectory.samples.len();
    if n < 8 {
        return Err(Error::param("mathieu", "trajectory too short for a spectrum"));
    }
    let mean = trajectory.positions().sum::<f64>() / n as f64;
    let padded = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = trajectory
        .positions()
        .enumerate()
        .map(|(i, x)| {
            let w = 0.5 - 0.5 * (TAU * i as f64 / (n - 1) as f64).cos();
            Complex::new((x - mean) * w, 0.0)
        })
        .collect();
    buf.resize(padded, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);

    let sample_rate = 1.0 / trajectory.time_step;
    let bin_hz = sample_rate / padded as f64;
    let mut top = padded / 2;
    if let Some(omega) = trajectory.drive_angular_frequency {
        let limit = omega / TAU / 2.0;
        top = top.min((limit / bin_hz).floor() as usize);
    }
    if top < 4 {
        return Err(Error::NoOscillation);
    }
    let power: Vec<f64> = buf[..=top].iter().map(|c| c.norm_sqr()).collect();
    let (peak, &peak_power) = power[1..top]
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1, p))
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty band");

    let mut sorted = power[1..top].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(peak_power > 0.0) || peak_power < DETECTION_RATIO * median {
        return Err(Error::NoOscillation);
    }

    let (l, c, r) = (power[peak - 1], peak_power, power[peak + 1]);
    let offset = if l > 0.0 && r > 0.0 {
        let (l, c, r) = (l.ln(), c.ln(), r.ln());
        let denom = l - 2.0 * c + r;
        if denom < 0.0 {
            (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let freq_hz = (peak as f64 + offset) * bin_hz;
    let record = trajectory.duration();
    if freq_hz * record < MIN_PERIODS {
        return Err(Error::param(
            "mathieu",
            format!(
                "record spans {:.1} periods; at least {MIN_PERIODS} are needed",
                freq_hz * record
            ),
        ));
    }
    Ok(2.0 * PI * freq_hz)
}
