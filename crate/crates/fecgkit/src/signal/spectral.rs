use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// All-pole model `x[n] = -Σ a[i] x[n-i] + e[n]` with `a[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    /// Prediction-error filter coefficients, `coeffs[0] == 1`.
    pub coeffs: Vec<f64>,
    /// Driving noise variance.
    pub variance: f64,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Power spectral density at `f` Hz for sampling rate `fs`.
    pub fn psd(&self, f: f64, fs: f64) -> f64 {
        let w = -2.0 * PI * f / fs;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in self.coeffs.iter().enumerate() {
            acc += Complex64::from_polar(*c, w * k as f64);
        }
        self.variance / fs / acc.norm_sqr()
    }

    /// Roots of `z^p + a1 z^(p-1) + ... + ap` (the model poles).
    pub fn poles(&self) -> Vec<Complex64> {
        polynomial_roots(&self.coeffs)
    }
}

/// Roots of the monic polynomial `c[0] z^p + c[1] z^(p-1) + ... + c[p]` (Durand–Kerner).
pub(crate) fn polynomial_roots(c: &[f64]) -> Vec<Complex64> {
    let p = c.len() - 1;
    if p == 0 {
        return Vec::new();
    }
    let lead = c[0];
    let coef: Vec<Complex64> = c.iter().map(|v| Complex64::new(v / lead, 0.0)).collect();
    let eval = |z: Complex64| coef.iter().fold(Complex64::new(0.0, 0.0), |acc, a| acc * z + a);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..p).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..p {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..p {
                if i != j {
                    den *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / den;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots
}

/// Fits an AR model of the given order with Burg's method.
pub fn ar_fit_burg(x: &[f64], order: usize) -> Result<ArModel> {
    if order == 0 {
        return Err(Error::invalid("AR order must be positive"));
    }
    if x.len() <= 2 * order {
        return Err(Error::invalid(format!(
            "Burg fit of order {order} needs more than {} samples",
            2 * order
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample in AR fit input"));
    }
    let n = x.len();
    let mut f = x.to_vec();
    let mut b = x.to_vec();
    let mut a = vec![1.0];
    let mut e = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    for m in 0..order {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in (m + 1)..n {
            num += f[i] * b[i - 1];
            den += f[i] * f[i] + b[i - 1] * b[i - 1];
        }
        let k = if den > 0.0 { -2.0 * num / den } else { 0.0 };
        let mut next = a.clone();
        next.push(0.0);
        for i in 1..=m + 1 {
            next[i] += k * a.get(m + 1 - i).copied().unwrap_or(0.0);
        }
        a = next;
        for i in ((m + 1)..n).rev() {
            let fi = f[i];
            let bi = b[i - 1];
            f[i] = fi + k * bi;
            b[i] = bi + k * fi;
        }
        e *= 1.0 - k * k;
    }
    Ok(ArModel { coeffs: a, variance: e })
}

/// Spectral estimator selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpectrumMethod {
    /// Burg autoregressive spectrum of the given order.
    Burg { order: usize },
    /// Raw one-sided periodogram.
    Periodogram,
    /// Welch average of Hann-windowed, half-overlapping segments.
    Welch { segment: usize },
}

/// Power spectral density on a frequency grid over `[0, fs/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    pub method: SpectrumMethod,
}

impl SpectralEstimate {
    /// Frequency of the largest density value.
    pub fn peak_frequency(&self) -> f64 {
        let k = (0..self.power.len())
            .max_by(|&a, &b| self.power[a].total_cmp(&self.power[b]))
            .unwrap_or(0);
        self.frequencies[k]
    }
}

/// Grid spacing used for Burg spectra.
const BURG_RESOLUTION_HZ: f64 = 0.05;

/// Estimates the power spectrum of `x`.
pub fn power_spectrum(x: &[f64], fs: f64, method: SpectrumMethod) -> Result<SpectralEstimate> {
    if x.len() < 32 {
        return Err(Error::invalid("spectrum needs at least 32 samples"));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("spectrum of an all-zero signal is undefined"));
    }
    match method {
        SpectrumMethod::Burg { order } => {
            let model = ar_fit_burg(x, order)?;
            let n = ((fs / 2.0 / BURG_RESOLUTION_HZ).ceil() as usize).max(512) + 1;
            let frequencies: Vec<f64> = (0..n).map(|k| k as f64 * fs / 2.0 / (n - 1) as f64).collect();
            let power = frequencies.iter().map(|&f| model.psd(f, fs)).collect();
            Ok(SpectralEstimate { frequencies, power, method })
        }
        SpectrumMethod::Periodogram => Ok(periodogram(x, fs, None)),
        SpectrumMethod::Welch { segment } => welch(x, fs, segment),
    }
}

fn periodogram(x: &[f64], fs: f64, window: Option<&[f64]>) -> SpectralEstimate {
    let n = x.len();
    let mut buf: Vec<Complex64> = match window {
        Some(w) => x.iter().zip(w).map(|(v, w)| Complex64::new(v * w, 0.0)).collect(),
        None => x.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    };
    let wpow = window.map_or(n as f64, |w| w.iter().map(|v| v * v).sum());
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let frequencies = (0..=half).map(|k| k as f64 * fs / n as f64).collect();
    let power = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() / (fs * wpow);
            if k == 0 || (n % 2 == 0 && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    SpectralEstimate { frequencies, power, method: SpectrumMethod::Periodogram }
}

/// Welch spectrum with Hann windows of `segment` samples and 50% overlap.
pub fn welch(x: &[f64], fs: f64, segment: usize) -> Result<SpectralEstimate> {
    if segment < 8 || segment > x.len() {
        return Err(Error::invalid("Welch segment must be in [8, len]"));
    }
    let window: Vec<f64> = (0..segment)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / segment as f64).cos())
        .collect();
    let step = (segment / 2).max(1);
    let mut acc: Option<SpectralEstimate> = None;
    let mut count = 0usize;
    let mut start = 0;
    while start + segment <= x.len() {
        let seg = &x[start..start + segment];
        let m = seg.iter().sum::<f64>() / segment as f64;
        let centered: Vec<f64> = seg.iter().map(|v| v - m).collect();
        let p = periodogram(&centered, fs, Some(&window));
        match acc.as_mut() {
            None => acc = Some(p),
            Some(a) => a.power.iter_mut().zip(&p.power).for_each(|(u, v)| *u += v),
        }
        count += 1;
        start += step;
    }
    let mut out = acc.ok_or_else(|| Error::invalid("signal shorter than one segment"))?;
    out.power.iter_mut().for_each(|v| *v /= count as f64);
    out.method = SpectrumMethod::Welch { segment };
    Ok(out)
}

/// Trapezoidal integral of the density over `[f_lo, f_hi]` restricted to grid points.
pub fn band_power(spec: &SpectralEstimate, f_lo: f64, f_hi: f64) -> f64 {
    let mut total = 0.0;
    for k in 1..spec.frequencies.len() {
        let (f0, f1) = (spec.frequencies[k - 1], spec.frequencies[k]);
        if f0 >= f_lo && f1 <= f_hi {
            total += 0.5 * (spec.power[k - 1] + spec.power[k]) * (f1 - f0);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::rng_from_seed(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn burg_white_noise_small_coefficients() {
        let x = noise(20_000, 3);
        let m = ar_fit_burg(&x, 12).unwrap();
        assert!(m.coeffs[1..].iter().all(|c| c.abs() < 0.1));
        assert!((m.variance - 1.0).abs() < 0.05);
    }

    #[test]
    fn burg_recovers_ar2_poles() {
        // poles at 0.95·exp(±iπ/4): a1 = -2·0.95·cos(π/4), a2 = 0.95²
        let r: f64 = 0.95;
        let th = PI / 4.0;
        let a1 = -2.0 * r * th.cos();
        let a2 = r * r;
        let e = noise(50_000, 4);
        let mut x = vec![0.0; e.len()];
        for n in 0..e.len() {
            let x1 = if n >= 1 { x[n - 1] } else { 0.0 };
            let x2 = if n >= 2 { x[n - 2] } else { 0.0 };
            x[n] = e[n] - a1 * x1 - a2 * x2;
        }
        let m = ar_fit_burg(&x, 2).unwrap();
        for p in m.poles() {
            assert!((p.norm() - r).abs() < 0.02);
            assert!((p.arg().abs() - th).abs() < 0.02);
        }
    }

    #[test]
    fn burg_rejects_short_or_zero_order() {
        assert!(ar_fit_burg(&[1.0; 10], 0).is_err());
        assert!(ar_fit_burg(&[1.0; 24], 12).is_err());
        assert!(ar_fit_burg(&[], 1).is_err());
    }

    #[test]
    fn burg_poles_inside_unit_circle() {
        let x: Vec<f64> = noise(5000, 5)
            .iter()
            .enumerate()
            .map(|(i, v)| v + 3.0 * (i as f64 * 0.3).sin())
            .collect();
        let m = ar_fit_burg(&x, 12).unwrap();
        assert!(m.poles().iter().all(|p| p.norm() < 1.0));
    }

    #[test]
    fn sinusoid_peak_located() {
        let fs = 500.0;
        let x: Vec<f64> = (0..5000).map(|i| (2.0 * PI * 12.0 * i as f64 / fs).sin()).collect();
        for method in [SpectrumMethod::Periodogram, SpectrumMethod::Burg { order: 11 }] {
            let s = power_spectrum(&x, fs, method).unwrap();
            let df = s.frequencies[1] - s.frequencies[0];
            assert!((s.peak_frequency() - 12.0).abs() <= df + 1e-9, "{method:?}");
        }
    }

    #[test]
    fn white_noise_burg_spectrum_is_flat() {
        let x = noise(20_000, 6);
        let s = power_spectrum(&x, 250.0, SpectrumMethod::Burg { order: 11 }).unwrap();
        let arith = s.power.iter().sum::<f64>() / s.power.len() as f64;
        let geo = (s.power.iter().map(|p| p.ln()).sum::<f64>() / s.power.len() as f64).exp();
        assert!(geo / arith > 0.8, "{}", geo / arith);
    }

    #[test]
    fn two_tones_give_two_local_maxima() {
        let fs = 100.0;
        let n = 16_000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 0.25 * t).sin() + (2.0 * PI * 10.0 * t).sin()
            })
            .collect();
        let s = power_spectrum(&x, fs, SpectrumMethod::Periodogram).unwrap();
        let bin = |f: f64| (f * n as f64 / fs).round() as usize;
        for f in [0.25, 10.0] {
            let k = bin(f);
            assert!(s.power[k] > s.power[k - 1] && s.power[k] > s.power[k + 1]);
        }
    }

    #[test]
    fn zero_or_short_input_rejected() {
        assert!(power_spectrum(&[0.0; 100], 10.0, SpectrumMethod::Periodogram).is_err());
        assert!(power_spectrum(&[1.0; 10], 10.0, SpectrumMethod::Periodogram).is_err());
    }

    #[test]
    fn periodogram_parseval() {
        let x = noise(4096, 7);
        let fs = 256.0;
        let s = power_spectrum(&x, fs, SpectrumMethod::Periodogram).unwrap();
        let df = fs / x.len() as f64;
        let total: f64 = s.power.iter().sum::<f64>() * df;
        let p = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((total - p).abs() / p < 1e-9);
    }
}
