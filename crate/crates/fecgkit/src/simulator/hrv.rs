use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Heart-rate modulation profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HrKind {
    /// Constant heart rate.
    None,
    /// Normal sinus rhythm variability only.
    #[default]
    Nsr,
    /// Smooth step of `acc` bpm centred at `t0`.
    Tanh,
    /// Mexican-hat excursion peaking at `acc` bpm.
    Mexhat,
    /// Gaussian bump of `acc` bpm.
    Gauss,
}

/// Parameters of the heart-rate generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrParams {
    /// Size of the acceleration (positive) or deceleration (negative), bpm.
    pub acc_bpm: f64,
    /// Centre of the profile (s).
    pub t0_s: f64,
    /// Width of the profile (s): time constant for tanh, σ otherwise.
    pub width_s: f64,
    /// Standard deviation of the sinus-rhythm fluctuation (bpm).
    pub hrv_std_bpm: f64,
    /// Mayer-wave peak (Hz).
    pub lf_hz: f64,
    /// Respiratory peak (Hz).
    pub hf_hz: f64,
    /// Width of both spectral peaks (Hz).
    pub c_hz: f64,
    /// Power ratio of the low- to high-frequency peak.
    pub lf_hf: f64,
}

impl Default for HrParams {
    fn default() -> Self {
        Self { acc_bpm: 0.0, t0_s: 30.0, width_s: 5.0, hrv_std_bpm: 1.0, lf_hz: 0.1, hf_hz: 0.25, c_hz: 0.01, lf_hf: 0.5 }
    }
}

/// `2/(√(3σ)·π^¼)·(1 − t²/σ²)·exp(−t²/2σ²)`.
pub fn mexican_hat(t: f64, sigma: f64) -> f64 {
    2.0 / ((3.0 * sigma).sqrt() * PI.powf(0.25)) * (1.0 - t * t / (sigma * sigma)) * (-t * t / (2.0 * sigma * sigma)).exp()
}

/// Deterministic modulation of the chosen profile at time `t`, in bpm.
pub fn profile(kind: HrKind, p: &HrParams, t: f64) -> f64 {
    let u = t - p.t0_s;
    match kind {
        HrKind::None | HrKind::Nsr => 0.0,
        HrKind::Tanh => p.acc_bpm * 0.5 * (1.0 + (u / p.width_s).tanh()),
        HrKind::Mexhat => p.acc_bpm * mexican_hat(u, p.width_s) / mexican_hat(0.0, p.width_s),
        HrKind::Gauss => p.acc_bpm * (-u * u / (2.0 * p.width_s * p.width_s)).exp(),
    }
}

/// Zero-mean beat-indexed fluctuation whose spectrum is a mixture of two
/// Gaussians, synthesised as a sum of random-phase sinusoids and scaled to `std`.
pub fn sinus_rhythm_fluctuation<R: Rng>(p: &HrParams, mean_bpm: f64, n_beats: usize, rng: &mut R) -> Vec<f64> {
    if n_beats < 2 || p.hrv_std_bpm == 0.0 {
        return vec![0.0; n_beats];
    }
    let fs_beat = mean_bpm / 60.0;
    let n_freq = n_beats.max(256);
    let df = fs_beat / (2.0 * n_freq as f64);
    let (s_hf, s_lf) = (1.0, p.lf_hf);
    let gauss = |f: f64, f0: f64| (-(f - f0).powi(2) / (2.0 * p.c_hz * p.c_hz)).exp() / (2.0 * PI * p.c_hz * p.c_hz).sqrt();
    let comps: Vec<(f64, f64, f64)> = (1..=n_freq)
        .map(|m| {
            let f = m as f64 * df;
            let s = s_lf * gauss(f, p.lf_hz) + s_hf * gauss(f, p.hf_hz);
            (f, (2.0 * s * df).sqrt(), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let mut x: Vec<f64> = (0..n_beats)
        .map(|k| {
            let t = k as f64 / fs_beat;
            comps.iter().map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).cos()).sum()
        })
        .collect();
    let mean = x.iter().sum::<f64>() / n_beats as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_beats as f64).sqrt();
    let scale = if sd > 0.0 { p.hrv_std_bpm / sd } else { 0.0 };
    x.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    x
}

/// Per-beat heart rate (bpm).
///
/// `None` gives a constant series, `Nsr` adds the sinus-rhythm fluctuation and
/// the other kinds add their profile on top of it, evaluated at the running
/// beat times.
pub fn hr_series(mean_bpm: f64, kind: HrKind, p: &HrParams, n_beats: usize, seed: u64) -> Result<Vec<f64>> {
    hr_series_with(mean_bpm, kind, p, n_beats, seed, |_| 0.0)
}

/// As [`hr_series`], with an extra time-dependent modulation in bpm.
pub fn hr_series_with<F: Fn(f64) -> f64>(
    mean_bpm: f64,
    kind: HrKind,
    p: &HrParams,
    n_beats: usize,
    seed: u64,
    extra: F,
) -> Result<Vec<f64>> {
    if !(mean_bpm > 0.0 && mean_bpm.is_finite()) {
        return Err(Error::invalid("mean heart rate must be positive"));
    }
    if n_beats == 0 {
        return Err(Error::invalid("at least one beat is required"));
    }
    if kind != HrKind::None && kind != HrKind::Nsr && !(p.width_s > 0.0) {
        return Err(Error::invalid("profile width must be positive"));
    }
    if kind == HrKind::None {
        let mut t = 0.0;
        return Ok((0..n_beats)
            .map(|_| {
                let hr = (mean_bpm + extra(t)).max(0.2 * mean_bpm);
                t += 60.0 / hr;
                hr
            })
            .collect());
    }
    let mut rng = crate::rng::rng_from_seed(seed);
    let fluct = sinus_rhythm_fluctuation(p, mean_bpm, n_beats, &mut rng);
    let mut t = 0.0;
    Ok(fluct
        .iter()
        .map(|f| {
            let hr = (mean_bpm + f + profile(kind, p, t) + extra(t)).max(0.2 * mean_bpm);
            t += 60.0 / hr;
            hr
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::welch;

    #[test]
    fn mexican_hat_values() {
        assert!((mexican_hat(0.0, 1.0) - 2.0 / (3.0f64.sqrt() * PI.powf(0.25))).abs() < 1e-15);
        assert!((mexican_hat(0.0, 1.0) - 0.8673).abs() < 1e-4);
        assert!(mexican_hat(1.0, 1.0).abs() < 1e-15);
        assert!(mexican_hat(-1.0, 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_kind() {
        let hr = hr_series(140.0, HrKind::None, &HrParams::default(), 50, 1).unwrap();
        assert!(hr.iter().all(|&h| h == 140.0));
        assert!(hr_series(0.0, HrKind::None, &HrParams::default(), 50, 1).is_err());
    }

    #[test]
    fn sinus_rhythm_has_two_spectral_peaks() {
        let p = HrParams { hrv_std_bpm: 3.0, ..HrParams::default() };
        for seed in 0..5 {
            let hr = hr_series(140.0, HrKind::Nsr, &p, 300, seed).unwrap();
            let rr: Vec<f64> = hr.iter().map(|h| 60.0 / h).collect();
            let mean = rr.iter().sum::<f64>() / rr.len() as f64;
            let centred: Vec<f64> = rr.iter().map(|v| v - mean).collect();
            let s = welch(&centred, 140.0 / 60.0, 128).unwrap();
            let local_max = |target: f64| {
                (1..s.power.len() - 1).any(|i| {
                    (s.frequencies[i] - target).abs() <= 0.05
                        && s.power[i] >= s.power[i - 1]
                        && s.power[i] >= s.power[i + 1]
                })
            };
            assert!(local_max(0.10), "seed {seed}");
            assert!(local_max(0.25), "seed {seed}");
        }
    }

    #[test]
    fn profiles_shape_the_series() {
        let p = HrParams { acc_bpm: -30.0, t0_s: 20.0, width_s: 3.0, hrv_std_bpm: 0.0, ..HrParams::default() };
        let hr = hr_series(140.0, HrKind::Mexhat, &p, 100, 3).unwrap();
        let min = hr.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - 110.0).abs() < 1.0);
        assert!((hr[0] - 140.0).abs() < 0.1);
        let p = HrParams { acc_bpm: 20.0, t0_s: 10.0, width_s: 1.0, hrv_std_bpm: 0.0, ..HrParams::default() };
        let hr = hr_series(120.0, HrKind::Tanh, &p, 80, 3).unwrap();
        assert!((hr[0] - 120.0).abs() < 0.01);
        assert!((hr[79] - 140.0).abs() < 0.01);
    }
}
