use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Amplitude- and frequency-modulated three-harmonic sawtooth parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RespirationParams {
    /// Breathing rate (Hz).
    pub f0: f64,
    /// Sawtooth amplitude.
    pub a: f64,
    /// Amplitude modulation depth.
    pub delta_a: f64,
    /// Amplitude modulation frequency (Hz).
    pub f_a: f64,
    /// Frequency deviation (Hz).
    pub delta_fd: f64,
    /// Frequency modulation rate (Hz).
    pub f_m: f64,
}

impl RespirationParams {
    pub fn new(f0: f64) -> Self {
        Self { f0, a: 1.0, delta_a: 0.3, f_a: 0.1, delta_fd: 0.05, f_m: 0.1 }
    }
}

/// `β(t) = Σ_{j=1..3} a_j(t)·sin(jω₀t + (Δf_d/f_m)·sin(ω_m t))` with
/// `a_j(t) = 2/(jπ)·(a + Δa·sin(ω_a t))`.
pub fn respiration_waveform(p: &RespirationParams, n: usize, fs: f64) -> Result<Vec<f64>> {
    if !(p.f0 > 0.0) || !(fs > 0.0) {
        return Err(Error::invalid("breathing rate and sampling rate must be positive"));
    }
    let w0 = 2.0 * PI * p.f0;
    let wm = 2.0 * PI * p.f_m;
    let wa = 2.0 * PI * p.f_a;
    let fm_index = if p.f_m != 0.0 { p.delta_fd / p.f_m } else { 0.0 };
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let amp = p.a + p.delta_a * (wa * t).sin();
            let fm = fm_index * (wm * t).sin();
            (1..=3)
                .map(|j| {
                    let j = j as f64;
                    2.0 / (j * PI) * amp * (j * w0 * t + fm).sin()
                })
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{power_spectrum, SpectrumMethod};

    #[test]
    fn starts_at_zero() {
        let p = RespirationParams { delta_a: 0.0, delta_fd: 0.0, ..RespirationParams::new(0.3) };
        assert_eq!(respiration_waveform(&p, 1, 100.0).unwrap()[0], 0.0);
    }

    #[test]
    fn unmodulated_is_three_harmonics() {
        let p = RespirationParams { a: 0.7, delta_a: 0.0, delta_fd: 0.0, ..RespirationParams::new(0.25) };
        let fs = 50.0;
        let b = respiration_waveform(&p, 500, fs).unwrap();
        for (i, v) in b.iter().enumerate() {
            let t = i as f64 / fs;
            let w = 2.0 * PI * 0.25 * t;
            let expected = 1.4 / PI * w.sin() + 0.7 / PI * (2.0 * w).sin() + 1.4 / (3.0 * PI) * (3.0 * w).sin();
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_frequency_is_breathing_rate() {
        let fs = 50.0;
        let b = respiration_waveform(&RespirationParams::new(0.25), 3000, fs).unwrap();
        let s = power_spectrum(&b, fs, SpectrumMethod::Periodogram).unwrap();
        let bin = fs / 3000.0;
        assert!((s.peak_frequency() - 0.25).abs() <= bin + 1e-12);
    }
}
