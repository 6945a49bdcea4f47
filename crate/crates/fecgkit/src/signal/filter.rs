use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::record::SignalRecord;
use super::spectral::welch;
use crate::{Error, Result};

/// Order of the low-pass Butterworth stage of the band-pass prefilter.
pub const LOWPASS_ORDER: usize = 5;
/// Order of the high-pass Butterworth stage of the band-pass prefilter.
pub const HIGHPASS_ORDER: usize = 3;

/// Second-order section in direct form II transposed, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sos {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Sos {
    fn order(&self) -> usize {
        if self.a[2] == 0.0 && self.b[2] == 0.0 {
            1
        } else {
            2
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Lowpass,
    Highpass,
}

/// Digital Butterworth filter as second-order sections (bilinear transform with prewarping).
pub fn butterworth(order: usize, cutoff: f64, fs: f64, kind: FilterKind) -> Result<Vec<Sos>> {
    if order == 0 {
        return Err(Error::invalid("filter order must be at least 1"));
    }
    if !(cutoff > 0.0 && cutoff < fs / 2.0) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff} Hz must lie in (0, {}) Hz",
            fs / 2.0
        )));
    }
    let k2 = 2.0 * fs;
    let wc = k2 * (PI * cutoff / fs).tan();
    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for k in 0..order / 2 {
        let theta = PI * (2 * k + 1 + order) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let s = match kind {
            FilterKind::Lowpass => p * wc,
            FilterKind::Highpass => Complex64::new(wc, 0.0) / p,
        };
        let z = (k2 + s) / (k2 - s);
        let a = [1.0, -2.0 * z.re, z.norm_sqr()];
        let b = match kind {
            FilterKind::Lowpass => [1.0, 2.0, 1.0],
            FilterKind::Highpass => [1.0, -2.0, 1.0],
        };
        sections.push(normalized(b, a, kind));
    }
    if order % 2 == 1 {
        let z = (k2 - wc) / (k2 + wc);
        let a = [1.0, -z, 0.0];
        let b = match kind {
            FilterKind::Lowpass => [1.0, 1.0, 0.0],
            FilterKind::Highpass => [1.0, -1.0, 0.0],
        };
        sections.push(normalized(b, a, kind));
    }
    Ok(sections)
}

fn normalized(b: [f64; 3], a: [f64; 3], kind: FilterKind) -> Sos {
    let g = match kind {
        FilterKind::Lowpass => (b[0] + b[1] + b[2]) / (a[0] + a[1] + a[2]),
        FilterKind::Highpass => (b[0] - b[1] + b[2]) / (a[0] - a[1] + a[2]),
    };
    Sos { b: [b[0] / g, b[1] / g, b[2] / g], a }
}

/// Causal filtering through a cascade of sections with initial states `zi`.
pub fn sosfilt(sos: &[Sos], x: &[f64], zi: Option<&[[f64; 2]]>) -> Vec<f64> {
    let mut y = x.to_vec();
    for (k, s) in sos.iter().enumerate() {
        let (mut s1, mut s2) = zi.map_or((0.0, 0.0), |z| (z[k][0], z[k][1]));
        for v in y.iter_mut() {
            let xin = *v;
            let out = s.b[0] * xin + s1;
            s1 = s.b[1] * xin - s.a[1] * out + s2;
            s2 = s.b[2] * xin - s.a[2] * out;
            *v = out;
        }
    }
    y
}

/// Steady-state section states for a unit step input.
fn sos_zi(sos: &[Sos]) -> Vec<[f64; 2]> {
    let mut level = 1.0;
    sos.iter()
        .map(|s| {
            let g = s.dc_gain();
            let z2 = s.b[2] - s.a[2] * g;
            let z1 = s.b[1] - s.a[1] * g + z2;
            let out = [level * z1, level * z2];
            level *= g;
            out
        })
        .collect()
}

fn forward_backward(sos: &[Sos], x: &[f64], padlen: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = padlen.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let zi = sos_zi(sos);
    let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();
    let mut y = sosfilt(sos, &ext, Some(&scaled(ext[0])));
    y.reverse();
    let mut y = sosfilt(sos, &y, Some(&scaled(y[0])));
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Zero-phase filtering: forward then backward pass with reflective padding of
/// three times the filter order.
///
/// The result is averaged with the mirrored run on the time-reversed input so
/// that the operator commutes exactly with time reversal.
pub fn filtfilt(sos: &[Sos], x: &[f64]) -> Vec<f64> {
    let order: usize = sos.iter().map(Sos::order).sum();
    let padlen = 3 * order;
    let a = forward_backward(sos, x, padlen);
    let xr: Vec<f64> = x.iter().rev().copied().collect();
    let mut b = forward_backward(sos, &xr, padlen);
    b.reverse();
    a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect()
}

/// Zero-phase Butterworth high-pass of a single channel.
pub fn highpass_zero_phase(x: &[f64], fs: f64, fc: f64, order: usize) -> Result<Vec<f64>> {
    Ok(filtfilt(&butterworth(order, fc, fs, FilterKind::Highpass)?, x))
}

/// Zero-phase Butterworth low-pass of a single channel.
pub fn lowpass_zero_phase(x: &[f64], fs: f64, fc: f64, order: usize) -> Result<Vec<f64>> {
    Ok(filtfilt(&butterworth(order, fc, fs, FilterKind::Lowpass)?, x))
}

/// Zero-phase band-pass: high-pass order 3 at `fb`, low-pass order 5 at `fh`.
pub fn bandpass_zero_phase(record: &SignalRecord, fb: f64, fh: f64) -> Result<SignalRecord> {
    bandpass_zero_phase_with_orders(record, fb, fh, HIGHPASS_ORDER, LOWPASS_ORDER)
}

/// Band-pass with explicit high-pass and low-pass orders.
pub fn bandpass_zero_phase_with_orders(
    record: &SignalRecord,
    fb: f64,
    fh: f64,
    hp_order: usize,
    lp_order: usize,
) -> Result<SignalRecord> {
    let fs = record.fs_f64();
    if !(fb > 0.0 && fb < fh) {
        return Err(Error::invalid(format!("need 0 < fb < fh, got fb={fb}, fh={fh}")));
    }
    if fh >= fs / 2.0 {
        return Err(Error::invalid(format!("fh={fh} Hz is not below Nyquist {}", fs / 2.0)));
    }
    let mut sos = butterworth(hp_order, fb, fs, FilterKind::Highpass)?;
    sos.extend(butterworth(lp_order, fh, fs, FilterKind::Lowpass)?);
    record.map_channels(|c| Ok(filtfilt(&sos, c)))
}

/// Result of the mains interference check.
#[derive(Debug, Clone, PartialEq)]
pub struct NotchOutcome {
    pub signal: Vec<f64>,
    pub applied: bool,
    pub mains: Option<f64>,
}

/// Second-order notch at `f0` with −3 dB bandwidth `bw` Hz, run forward and backward.
pub fn notch_zero_phase(x: &[f64], fs: f64, f0: f64, bw: f64) -> Result<Vec<f64>> {
    if !(f0 > 0.0 && f0 < fs / 2.0 && bw > 0.0) {
        return Err(Error::invalid("notch frequency must lie below Nyquist"));
    }
    let w0 = 2.0 * PI * f0 / fs;
    let beta = (PI * bw / fs).tan();
    let gain = 1.0 / (1.0 + beta);
    let sos = Sos {
        b: [gain, -2.0 * gain * w0.cos(), gain],
        a: [1.0, -2.0 * gain * w0.cos(), 2.0 * gain - 1.0],
    };
    Ok(filtfilt(&[sos], x))
}

/// Minimum ratio between the band peak and the band median for the peak to
/// count as interference.
const NOTCH_PROMINENCE: f64 = 10.0;

/// Applies a 50 or 60 Hz notch when the spectral peak within ±4 Hz of the
/// mains frequency lies within ±1 Hz of it and stands out of the band.
pub fn notch_if_needed(x: &[f64], fs: f64) -> Result<NotchOutcome> {
    if fs <= 130.0 {
        return Err(Error::invalid("mains check needs fs > 130 Hz"));
    }
    if x.len() < 32 || x.iter().all(|&v| v == 0.0) {
        return Ok(NotchOutcome { signal: x.to_vec(), applied: false, mains: None });
    }
    let seg = ((4.0 * fs) as usize).min(x.len());
    let spec = welch(x, fs, seg)?;
    let mut best: Option<(f64, f64)> = None;
    for mains in [50.0, 60.0] {
        let band: Vec<(f64, f64)> = spec
            .frequencies
            .iter()
            .zip(&spec.power)
            .filter(|(f, _)| (**f - mains).abs() <= 4.0)
            .map(|(f, p)| (*f, *p))
            .collect();
        let floor = crate::stats::median(&band.iter().map(|b| b.1).collect::<Vec<_>>());
        let peak = band.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((f, p)) = peak {
            let prominent = p >= NOTCH_PROMINENCE * floor;
            if (f - mains).abs() <= 1.0 && prominent && best.is_none_or(|(_, bp)| p > bp) {
                best = Some((mains, p));
            }
        }
    }
    match best {
        Some((mains, _)) => Ok(NotchOutcome {
            signal: notch_zero_phase(x, fs, mains, 1.0)?,
            applied: true,
            mains: Some(mains),
        }),
        None => Ok(NotchOutcome { signal: x.to_vec(), applied: false, mains: None }),
    }
}

const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Divides by the amplitude range over the `[1 s, 5 s]` window, subtracts the
/// window mean and applies `tanh`.
pub fn normalize(x: &[f64], fs: f64) -> Result<Vec<f64>> {
    let lo = fs.round() as usize;
    let hi = (5.0 * fs).round() as usize;
    if x.len() < hi || lo >= hi {
        return Err(Error::invalid("normalisation needs at least 5 s of signal"));
    }
    let win = &x[lo..hi];
    let max = win.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = win.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::invalid("zero amplitude range in normalisation window"));
    }
    let offset = win.iter().map(|v| v / range).sum::<f64>() / win.len() as f64;
    Ok(x.iter()
        .map(|v| (v / range - offset).tanh().clamp(-BELOW_ONE, BELOW_ONE))
        .collect())
}
