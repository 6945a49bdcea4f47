//! Single-lead signal-quality indices and quality-based masking.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::detection::{QrsDetector, MATERNAL_REFRACTORY_MS};
use crate::scoring::{match_beats, MATCH_WINDOW_MS};
use crate::signal::{band_power, highpass_zero_phase, power_spectrum, BeatAnnotations, SpectrumMethod};
use crate::{Error, Result};

pub const SQI_BURG_ORDER: usize = 11;
/// Baseline removal before the moment-based indices.
pub const SQI_HP_HZ: f64 = 0.7;
pub const SQI_HP_ORDER: usize = 2;
pub const PCA_SQI_COMPONENTS: usize = 5;
pub const PCA_SQI_HALF_WINDOW_MS: f64 = 100.0;
pub const DEFAULT_WINDOW_S: f64 = 10.0;
pub const DEFAULT_OVERLAP_S: f64 = 9.0;
pub const MASK_THRESHOLD: f64 = 0.8;

/// The seven indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SqiKind {
    K,
    S,
    P,
    Bas,
    B,
    Q,
    Pca,
}

impl SqiKind {
    pub const ALL: [SqiKind; 7] = [SqiKind::K, SqiKind::S, SqiKind::P, SqiKind::Bas, SqiKind::B, SqiKind::Q, SqiKind::Pca];

    pub fn token(self) -> &'static str {
        match self {
            SqiKind::K => "k",
            SqiKind::S => "s",
            SqiKind::P => "p",
            SqiKind::Bas => "bas",
            SqiKind::B => "b",
            SqiKind::Q => "q",
            SqiKind::Pca => "pca",
        }
    }

    pub fn name(self) -> String {
        format!("{}SQI", self.token())
    }
}

impl fmt::Display for SqiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for SqiKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_end_matches("SQI").trim_end_matches("sqi");
        SqiKind::ALL
            .into_iter()
            .find(|k| k.token().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::invalid(format!("unknown SQI kind '{s}'")))
    }
}

/// Parses `all` or a comma-separated list of kinds.
pub fn parse_kinds(s: &str) -> Result<Vec<SqiKind>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(SqiKind::ALL.to_vec());
    }
    s.split(',').map(str::parse).collect()
}

/// Index values of one window; failed indices are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqiReport {
    pub start_s: f64,
    pub length_s: f64,
    pub values: BTreeMap<String, Option<f64>>,
}

/// Fraction of the 99th percentile of `|x - median|` a peak must reach in the amplitude detector.
pub const AMPLITUDE_FRACTION: f64 = 0.5;

/// Plain amplitude detector compared against the energy detector by bSQI and qSQI:
/// greatest deviations from the median, at least one refractory period apart,
/// reaching `AMPLITUDE_FRACTION` of the 99th percentile deviation.
pub fn amplitude_detect(x: &[f64], fs: u32) -> Result<BeatAnnotations> {
    if fs == 0 || x.is_empty() {
        return Err(Error::invalid("amplitude detection needs samples and fs > 0"));
    }
    let med = crate::stats::median(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    let mut sorted = dev.clone();
    sorted.sort_by(f64::total_cmp);
    let p99 = sorted[((sorted.len() - 1) as f64 * 0.99).round() as usize];
    if !(p99 > 0.0) {
        return Ok(BeatAnnotations::empty(fs));
    }
    let level = AMPLITUDE_FRACTION * p99;
    let r = ((MATERNAL_REFRACTORY_MS * fs as f64 / 1000.0).round() as usize).max(1);
    let mut order: Vec<usize> = (0..dev.len()).filter(|&i| dev[i] >= level).collect();
    order.sort_by(|&a, &b| dev[b].total_cmp(&dev[a]).then(a.cmp(&b)));
    let mut taken = std::collections::BTreeSet::new();
    for i in order {
        let near = taken.range(i.saturating_sub(r - 1)..i + r).next().is_some();
        if !near {
            taken.insert(i);
        }
    }
    BeatAnnotations::new(taken.into_iter().collect(), fs)
}

fn standardized_moment(x: &[f64], fs: f64, order: i32) -> Result<f64> {
    let y = highpass_zero_phase(x, fs, SQI_HP_HZ, SQI_HP_ORDER)?;
    let n = y.len() as f64;
    let mu = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::invalid("zero-variance signal"));
    }
    Ok(y.iter().map(|v| (v - mu).powi(order)).sum::<f64>() / n / var.powf(order as f64 / 2.0))
}

fn band_ratio(x: &[f64], fs: f64, num: (f64, f64), den: (f64, f64)) -> Result<f64> {
    if fs < 2.0 * den.1 {
        return Err(Error::invalid(format!("sampling rate must reach {} Hz", 2.0 * den.1)));
    }
    let spec = power_spectrum(x, fs, SpectrumMethod::Burg { order: SQI_BURG_ORDER })?;
    let d = band_power(&spec, den.0, den.1);
    if !(d > 0.0) {
        return Err(Error::numerical("no power in the reference band"));
    }
    Ok(band_power(&spec, num.0, num.1) / d)
}

fn detections(x: &[f64], fs: u32) -> Result<(BeatAnnotations, BeatAnnotations)> {
    Ok((QrsDetector::new(MATERNAL_REFRACTORY_MS).detect(x, fs)?, amplitude_detect(x, fs)?))
}

/// Symmetric detector agreement `2·matched / (nA + nB)`.
pub fn beat_agreement(a: &BeatAnnotations, b: &BeatAnnotations) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::invalid("no beats detected"));
    }
    let m = match_beats(a, b, MATCH_WINDOW_MS);
    Ok(2.0 * m.tp as f64 / (a.len() + b.len()) as f64)
}

/// Ratio of energy-detector to amplitude-detector beat counts.
pub fn beat_count_ratio(a: &BeatAnnotations, b: &BeatAnnotations) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("no beats detected by one of the detectors"));
    }
    Ok(a.len() as f64 / b.len() as f64)
}

/// Energy fraction of the leading principal components of the cycles cut around each beat.
pub fn pca_energy_fraction(x: &[f64], beats: &BeatAnnotations, half: usize) -> Result<f64> {
    let cycles: Vec<&[f64]> = beats
        .indices()
        .iter()
        .filter(|&&r| r >= half && r + half < x.len())
        .map(|&r| &x[r - half..=r + half])
        .collect();
    if cycles.is_empty() {
        return Err(Error::invalid("no complete cycle around the detected beats"));
    }
    let m = DMatrix::from_fn(cycles.len(), 2 * half + 1, |i, j| cycles[i][j]);
    let gram = &m * m.transpose();
    let mut eig: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = eig.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("cycles carry no energy"));
    }
    Ok(eig.iter().take(PCA_SQI_COMPONENTS).sum::<f64>() / total)
}

/// One index of one window.
pub fn compute_sqi(channel: &[f64], fs: u32, kind: SqiKind) -> Result<f64> {
    if channel.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite samples"));
    }
    let fsf = fs as f64;
    match kind {
        SqiKind::K => standardized_moment(channel, fsf, 4),
        SqiKind::S => standardized_moment(channel, fsf, 3),
        SqiKind::P => band_ratio(channel, fsf, (5.0, 15.0), (5.0, 40.0)),
        SqiKind::Bas => band_ratio(channel, fsf, (1.0, 40.0), (0.0, 40.0)),
        SqiKind::B => {
            let (a, b) = detections(channel, fs)?;
            beat_agreement(&a, &b)
        }
        SqiKind::Q => {
            let (a, b) = detections(channel, fs)?;
            beat_count_ratio(&a, &b)
        }
        SqiKind::Pca => {
            let (a, _) = detections(channel, fs)?;
            let half = (PCA_SQI_HALF_WINDOW_MS * fsf / 1000.0).round() as usize;
            pca_energy_fraction(channel, &a, half)
        }
    }
}

/// Indices over sliding windows of `window_s` seconds overlapping by `overlap_s`.
pub fn sqi_windows(channel: &[f64], fs: u32, kinds: &[SqiKind], window_s: f64, overlap_s: f64) -> Result<Vec<SqiReport>> {
    if !(window_s > 0.0 && overlap_s >= 0.0 && overlap_s < window_s) || fs == 0 {
        return Err(Error::invalid("need window > overlap >= 0 and fs > 0"));
    }
    let fsf = fs as f64;
    let w = (window_s * fsf).round() as usize;
    let step = ((window_s - overlap_s) * fsf).round().max(1.0) as usize;
    if channel.len() < w {
        return Err(Error::invalid("signal shorter than one window"));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + w <= channel.len() {
        let seg = &channel[start..start + w];
        let values = kinds.iter().map(|&k| (k.name(), compute_sqi(seg, fs, k).ok())).collect();
        out.push(SqiReport { start_s: start as f64 / fsf, length_s: window_s, values });
        start += step;
    }
    Ok(out)
}

/// Second-by-second mask: second `s` is kept when every 10 s window (1 s hop)
/// containing it has a bSQI reaching `threshold`.
pub fn mask_low_quality(reference: &[f64], fs: u32, threshold: f64) -> Result<Vec<bool>> {
    let w_s = DEFAULT_WINDOW_S as usize;
    let fsu = fs as usize;
    if fs == 0 || reference.len() < w_s * fsu {
        return Err(Error::invalid("quality masking needs at least 10 s of signal"));
    }
    let seconds = reference.len() / fsu;
    let windows: Vec<f64> = (0..=seconds - w_s)
        .map(|k| compute_sqi(&reference[k * fsu..(k + w_s) * fsu], fs, SqiKind::B).unwrap_or(0.0))
        .collect();
    Ok((0..seconds)
        .map(|s| {
            let first = (s + 1).saturating_sub(w_s);
            let last = s.min(windows.len() - 1);
            windows[first..=last].iter().all(|&q| q >= threshold)
        })
        .collect())
}
