//! QRS detection, fiducial adjustment, channel selection and RR smoothing.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::scoring::{match_beats, MATCH_WINDOW_MS};
use crate::signal::BeatAnnotations;
use crate::stats::median;
use crate::{Error, Result};

/// Refractory period used for maternal beats.
pub const MATERNAL_REFRACTORY_MS: f64 = 250.0;
/// Refractory period used for fetal beats.
pub const FETAL_REFRACTORY_MS: f64 = 150.0;
/// Half-width of the fiducial adjustment window.
pub const ADJUST_WINDOW_MS: f64 = 30.0;
/// Candidates matching the maternal series at or above this fraction are excluded.
pub const BCM_THRESHOLD: f64 = 0.4;
/// Heart-rate jump counted by the smoothing indicator.
pub const SMI_THRESHOLD_BPM: f64 = 29.0;

/// Energy-based QRS detector with an adaptive threshold and search-back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrsDetector {
    pub refractory_ms: f64,
    /// Fraction of the running median peak energy a candidate must reach.
    pub threshold: f64,
    /// Number of past peaks kept for the running medians.
    pub history: usize,
    /// Search back when the gap exceeds this multiple of the median RR.
    pub searchback: f64,
    /// Width of the centered moving integration.
    pub integration_ms: f64,
    /// Mexican-hat width as a fraction of the refractory period.
    pub sigma_fraction: f64,
}

impl QrsDetector {
    pub fn new(refractory_ms: f64) -> Self {
        Self {
            refractory_ms,
            threshold: 0.6,
            history: 8,
            searchback: 1.66,
            integration_ms: 100.0,
            sigma_fraction: 0.04,
        }
    }

    /// Energy envelope: Mexican-hat matched filter, derivative, square, integrate.
    pub fn envelope(&self, x: &[f64], fs: f64) -> Vec<f64> {
        let sigma = (self.sigma_fraction * self.refractory_ms * fs / 1000.0).max(0.5);
        let half = (4.0 * sigma).ceil() as usize;
        let mut kernel: Vec<f64> = (0..=2 * half)
            .map(|k| {
                let t = (k as f64 - half as f64) / sigma;
                (1.0 - t * t) * (-0.5 * t * t).exp()
            })
            .collect();
        let km = kernel.iter().sum::<f64>() / kernel.len() as f64;
        kernel.iter_mut().for_each(|v| *v -= km);
        let n = x.len();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                kernel
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * x[(i + k).saturating_sub(half).min(n - 1)])
                    .sum()
            })
            .collect();
        let d: Vec<f64> = (0..n)
            .map(|i| {
                let a = y[i.saturating_sub(1)];
                let b = y[(i + 1).min(n - 1)];
                (b - a) * (b - a)
            })
            .collect();
        let w = ((self.integration_ms * fs / 1000.0).round() as usize).max(1);
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + d[i];
        }
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(w / 2);
                let hi = (i + w - w / 2).min(n);
                (prefix[hi] - prefix[lo]) / w as f64
            })
            .collect()
    }

    /// Detects R-peaks in `x`. A flat channel yields no beats.
    pub fn detect(&self, x: &[f64], fs: u32) -> Result<BeatAnnotations> {
        let fsf = fs as f64;
        if fs == 0 || x.len() < 2 * fs as usize {
            return Err(Error::invalid("QRS detection needs at least two seconds of signal"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite sample in detector input"));
        }
        if !(self.refractory_ms > 0.0) {
            return Err(Error::invalid("refractory period must be positive"));
        }
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= 0.0 {
            return Ok(BeatAnnotations::empty(fs));
        }
        let r = ((self.refractory_ms * fsf / 1000.0).round() as usize).max(1);
        let env = self.envelope(x, fsf);
        let env_max = env.iter().copied().fold(0.0, f64::max);
        if !(env_max > 0.0) {
            return Ok(BeatAnnotations::empty(fs));
        }
        let floor = env_max * 1e-9;
        let candidates = suppress_non_maxima(&env, r, floor);
        let accepted = self.threshold_scan(&env, &candidates, r, 2 * fs as usize);
        if accepted.is_empty() {
            return Ok(BeatAnnotations::empty(fs));
        }
        let half = ((0.3 * self.refractory_ms * fsf / 1000.0).round() as usize).max(1);
        let sign = majority_polarity(x, &accepted, half);
        let mut located: Vec<usize> = accepted.iter().map(|&p| extremum(x, p, half, sign)).collect();
        located.sort_unstable();
        let mut out: Vec<usize> = Vec::with_capacity(located.len());
        for p in located {
            match out.last() {
                Some(&q) if p - q < r => {
                    if sign * x[p] > sign * x[q] {
                        *out.last_mut().unwrap() = p;
                    }
                }
                _ => out.push(p),
            }
        }
        BeatAnnotations::new(out, fs)
    }

    fn threshold_scan(&self, env: &[f64], candidates: &[usize], r: usize, window: usize) -> Vec<usize> {
        let mut maxima: Vec<f64> = env
            .chunks(window)
            .map(|c| c.iter().copied().fold(0.0, f64::max))
            .collect();
        let seed = median(&maxima);
        maxima.clear();
        let h = self.history.max(1);
        let mut heights: VecDeque<f64> = std::iter::repeat(seed).take(h).collect();
        let mut rr: VecDeque<f64> = VecDeque::with_capacity(h);
        let mut accepted: Vec<usize> = Vec::new();
        let mut pending: Vec<usize> = Vec::new();
        let push = |v: &mut VecDeque<f64>, x: f64| {
            if v.len() == h {
                v.pop_front();
            }
            v.push_back(x);
        };
        for &c in candidates {
            let thr = self.threshold * median(heights.make_contiguous());
            if let (Some(&last), false) = (accepted.last(), rr.is_empty()) {
                let med_rr = median(rr.make_contiguous());
                if (c - last) as f64 > self.searchback * med_rr {
                    let best = pending
                        .iter()
                        .copied()
                        .filter(|&p| env[p] >= 0.5 * thr && p - last >= r && c - p >= r)
                        .max_by(|a, b| env[*a].total_cmp(&env[*b]));
                    if let Some(p) = best {
                        push(&mut rr, (p - last) as f64);
                        push(&mut heights, env[p]);
                        accepted.push(p);
                        pending.clear();
                    }
                }
            }
            if env[c] >= thr {
                if let Some(&last) = accepted.last() {
                    push(&mut rr, (c - last) as f64);
                }
                push(&mut heights, env[c]);
                accepted.push(c);
                pending.clear();
            } else {
                pending.push(c);
            }
        }
        accepted
    }
}

/// Local maxima of `env` above `floor`, thinned so that no two lie closer than `r`.
fn suppress_non_maxima(env: &[f64], r: usize, floor: f64) -> Vec<usize> {
    let n = env.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || env[i] > env[i - 1];
            let right = i + 1 == n || env[i] >= env[i + 1];
            left && right && env[i] > floor
        })
        .collect();
    peaks.sort_by(|a, b| env[*b].total_cmp(&env[*a]).then(a.cmp(b)));
    let mut kept = BTreeSet::new();
    for p in peaks {
        let lo = p.saturating_sub(r - 1);
        if kept.range(lo..p + r).next().is_none() {
            kept.insert(p);
        }
    }
    kept.into_iter().collect()
}

fn window(x: &[f64], p: usize, half: usize) -> (usize, usize) {
    (p.saturating_sub(half), (p + half + 1).min(x.len()))
}

/// +1 when most windows are dominated by a positive deflection, else -1.
fn majority_polarity(x: &[f64], peaks: &[usize], half: usize) -> f64 {
    let mut votes = 0i64;
    for &p in peaks {
        let (lo, hi) = window(x, p, half);
        let w = &x[lo..hi];
        let mid = median(w);
        let up = w.iter().copied().fold(f64::NEG_INFINITY, f64::max) - mid;
        let down = mid - w.iter().copied().fold(f64::INFINITY, f64::min);
        votes += if up >= down { 1 } else { -1 };
    }
    if votes >= 0 {
        1.0
    } else {
        -1.0
    }
}

/// Position of the extremum of the given sign within `p ± half`; first on ties.
fn extremum(x: &[f64], p: usize, half: usize, sign: f64) -> usize {
    let (lo, hi) = window(x, p, half);
    let mut best = lo;
    for i in lo..hi {
        if sign * x[i] > sign * x[best] {
            best = i;
        }
    }
    best
}

/// Detects R-peaks with the default detector settings.
pub fn detect_qrs(channel: &[f64], fs: u32, refractory_ms: f64) -> Result<BeatAnnotations> {
    QrsDetector::new(refractory_ms).detect(channel, fs)
}

/// Moves each fiducial to the extremum of the majority polarity within
/// ±30 ms, unless that would lower the absolute amplitude at the fiducial.
pub fn adjust_peaks(channel: &[f64], anns: &BeatAnnotations) -> Result<BeatAnnotations> {
    anns.check_bounds(channel.len())?;
    if anns.is_empty() {
        return Ok(anns.clone());
    }
    let half = (ADJUST_WINDOW_MS * anns.fs_f64() / 1000.0).round() as usize;
    let sign = majority_polarity(channel, anns.indices(), half);
    let moved = anns
        .indices()
        .iter()
        .map(|&p| {
            let q = extremum(channel, p, half, sign);
            if channel[q].abs() >= channel[p].abs() {
                q
            } else {
                p
            }
        })
        .collect();
    BeatAnnotations::from_unsorted(moved, anns.fs())
}

/// Counting rule for the smoothing indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmiRule {
    pub threshold_bpm: f64,
    /// Count only jumps strictly above the threshold.
    pub strict: bool,
}

impl Default for SmiRule {
    fn default() -> Self {
        Self { threshold_bpm: SMI_THRESHOLD_BPM, strict: false }
    }
}

/// Number of consecutive instantaneous heart-rate changes of at least 29 bpm.
pub fn smoothing_indicator(anns: &BeatAnnotations) -> Result<usize> {
    smoothing_indicator_with(anns, SmiRule::default())
}

pub fn smoothing_indicator_with(anns: &BeatAnnotations, rule: SmiRule) -> Result<usize> {
    if anns.len() < 3 {
        return Err(Error::invalid("smoothing indicator needs at least three beats"));
    }
    let fs = anns.fs_f64();
    let hr: Vec<f64> = anns.rr_samples().iter().map(|&rr| 60.0 * fs / rr as f64).collect();
    Ok(hr
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .filter(|&d| if rule.strict { d > rule.threshold_bpm } else { d >= rule.threshold_bpm })
        .count())
}

/// Per-candidate regularity and maternal overlap, and the chosen candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSelectionReport {
    /// `None` for candidates with fewer than three beats.
    pub smi: Vec<Option<usize>>,
    pub bcm: Vec<f64>,
    pub chosen: Option<usize>,
}

/// Fraction of `candidate` beats matching `mqrs` within 50 ms.
pub fn beat_comparison(candidate: &BeatAnnotations, mqrs: &BeatAnnotations) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    match_beats(mqrs, candidate, MATCH_WINDOW_MS).tp as f64 / candidate.len() as f64
}

/// Excludes candidates with BCM ≥ 0.4 and picks the lowest SMI, first on ties.
pub fn select_channel(candidates: &[BeatAnnotations], mqrs: &BeatAnnotations) -> ChannelSelectionReport {
    let smi: Vec<Option<usize>> = candidates.iter().map(|c| smoothing_indicator(c).ok()).collect();
    let bcm: Vec<f64> = candidates.iter().map(|c| beat_comparison(c, mqrs)).collect();
    let mut chosen: Option<usize> = None;
    for (i, s) in smi.iter().enumerate() {
        if let Some(s) = s {
            if bcm[i] >= BCM_THRESHOLD {
                continue;
            }
            if chosen.map_or(true, |c| *s < smi[c].unwrap()) {
                chosen = Some(i);
            }
        }
    }
    ChannelSelectionReport { smi, bcm, chosen }
}

/// RR-smoothed beats with a flag for each inserted beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedBeats {
    pub annotations: BeatAnnotations,
    pub inserted: Vec<bool>,
}

/// Left-to-right removal of extra beats and insertion of missed beats, driven
/// by the median of the past five RR intervals when it lies in (0.35, 0.5)·fs.
pub fn smooth_rr(anns: &BeatAnnotations) -> SmoothedBeats {
    let fs = anns.fs_f64();
    let (min_rr, max_rr) = (0.35 * fs, 0.5 * fs);
    let mut beats: Vec<(usize, bool)> = anns.indices().iter().map(|&i| (i, false)).collect();
    let mut q = 5;
    while q + 2 < beats.len() {
        let rr: Vec<f64> = beats[q - 5..=q].windows(2).map(|w| (w[1].0 - w[0].0) as f64).collect();
        let med = median(&rr);
        if med > min_rr && med < max_rr {
            let plus = (beats[q + 1].0 - beats[q].0) as f64;
            let minus = (beats[q].0 - beats[q - 1].0) as f64;
            if plus < 0.7 * med && minus < 1.2 * med {
                beats.remove(q + 1);
            } else if plus > 1.75 * med && minus > 0.7 * med {
                let missed = (beats[q].0 as f64 + med).round() as usize;
                beats.insert(q + 1, (missed, true));
            } else {
                q += 1;
            }
        } else {
            q += 1;
        }
    }
    let (idx, inserted): (Vec<usize>, Vec<bool>) = beats.into_iter().unzip();
    SmoothedBeats {
        annotations: BeatAnnotations::new(idx, anns.fs()).expect("smoothing keeps beats ordered"),
        inserted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecg_model::{generate_vcg, CycleModel};
    use crate::scoring::f1_score;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn anns(v: Vec<usize>, fs: u32) -> BeatAnnotations {
        BeatAnnotations::new(v, fs).unwrap()
    }

    /// Synthetic single-lead ECG with slight RR variability and white noise.
    fn ecg(seed: u64, bpm: f64, secs: f64, fs: u32, noise: f64) -> (Vec<f64>, BeatAnnotations) {
        let mut rng = crate::rng::rng_from_seed(seed);
        let n_beats = (secs * bpm / 60.0) as usize + 2;
        let rr: Vec<f64> = (0..n_beats).map(|_| 60.0 / bpm * rng.random_range(0.96..1.04)).collect();
        let m = CycleModel::reference_cycle();
        let vcg = generate_vcg(&[m.clone(), m.clone(), m], &rr, fs as f64).unwrap();
        let n = (secs * fs as f64) as usize;
        let offset = (0.3 * fs as f64) as usize;
        let nd = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let x: Vec<f64> = (0..n)
            .map(|i| vcg.axes[0][i + offset] + if noise > 0.0 { nd.sample(&mut rng) } else { 0.0 })
            .collect();
        let truth = vcg.r_peaks.iter().filter(|&&p| p >= offset && p < n + offset).map(|p| p - offset).collect();
        (x, anns(truth, fs))
    }

    #[test]
    fn refractory_merges_close_impulses() {
        let mut x = vec![0.0; 2000];
        x[1000] = 1.0;
        x[1100] = 1.0;
        let d = detect_qrs(&x, 1000, 250.0).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn flat_signal_gives_no_beats() {
        assert!(detect_qrs(&vec![0.3; 5000], 1000, 250.0).unwrap().is_empty());
        assert!(detect_qrs(&vec![0.0; 100], 1000, 250.0).is_err());
    }

    #[test]
    fn clean_ecg_detected() {
        for (seed, bpm, refr) in [(1, 80.0, 250.0), (2, 140.0, 150.0)] {
            let (x, truth) = ecg(seed, bpm, 60.0, 1000, 0.01);
            let d = detect_qrs(&x, 1000, refr).unwrap();
            assert!(f1_score(&truth, &d) >= 0.99, "bpm {bpm}: {} vs {}", d.len(), truth.len());
        }
    }

    #[test]
    fn inverted_ecg_lands_on_negative_extrema() {
        let (x, _) = ecg(3, 90.0, 30.0, 500, 0.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let up = detect_qrs(&x, 500, 250.0).unwrap();
        let down = detect_qrs(&neg, 500, 250.0).unwrap();
        assert_eq!(up.len(), down.len());
        for &p in down.indices() {
            let lo = p.saturating_sub(10);
            let hi = (p + 11).min(x.len());
            let min = neg[lo..hi].iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(neg[p], min);
            assert!(neg[p] < 0.0);
        }
    }

    #[test]
    fn adjust_examples() {
        let (x, truth) = ecg(4, 75.0, 20.0, 1000, 0.0);
        assert_eq!(adjust_peaks(&x, &truth).unwrap(), truth);
        let shifted = anns(truth.indices().iter().map(|p| p + 20).filter(|&p| p < x.len()).collect(), 1000);
        let back = adjust_peaks(&x, &shifted).unwrap();
        assert_eq!(back.indices(), &truth.indices()[..back.len()]);
    }

    #[test]
    fn adjust_recovers_jittered_truth() {
        let (x, truth) = ecg(5, 130.0, 60.0, 1000, 0.005);
        let mut rng = crate::rng::rng_from_seed(55);
        let jittered: Vec<usize> = truth
            .indices()
            .iter()
            .map(|&p| (p as i64 + rng.random_range(-25..=25)).clamp(0, x.len() as i64 - 1) as usize)
            .collect();
        let adj = adjust_peaks(&x, &BeatAnnotations::from_unsorted(jittered, 1000).unwrap()).unwrap();
        let m = match_beats(&truth, &adj, 50.0);
        let offsets: Vec<f64> = m
            .pairs
            .iter()
            .map(|&(i, j)| truth.indices()[i].abs_diff(adj.indices()[j]) as f64)
            .collect();
        assert!(median(&offsets) <= 2.0);
    }

    #[test]
    fn smi_examples() {
        let regular = anns((0..20).map(|k| k * 400).collect(), 1000);
        assert_eq!(smoothing_indicator(&regular).unwrap(), 0);
        let mut extra: Vec<usize> = (0..20).map(|k| k * 400).collect();
        extra.insert(10, 9 * 400 + 200);
        assert!(smoothing_indicator(&anns(extra, 1000)).unwrap() >= 2);
        assert!(smoothing_indicator(&anns(vec![0, 400], 1000)).is_err());
    }

    #[test]
    fn smi_threshold_inclusive_by_default() {
        // 60 -> 89 bpm is a jump of exactly 29
        let fs = 60 * 89;
        let a = anns(vec![0, fs as usize, fs as usize + 60 * 60], fs);
        assert_eq!(smoothing_indicator(&a).unwrap(), 1);
        let strict = SmiRule { strict: true, ..SmiRule::default() };
        assert_eq!(smoothing_indicator_with(&a, strict).unwrap(), 0);
    }

    #[test]
    fn smi_matches_naive_count() {
        let mut rng = crate::rng::rng_from_seed(77);
        for _ in 0..50 {
            let mut v = vec![0usize];
            for _ in 0..100 {
                v.push(v.last().unwrap() + rng.random_range(250..600));
            }
            let a = anns(v.clone(), 1000);
            let mut count = 0;
            for k in 2..v.len() {
                let h1 = 60.0 / ((v[k - 1] - v[k - 2]) as f64 / 1000.0);
                let h2 = 60.0 / ((v[k] - v[k - 1]) as f64 / 1000.0);
                if (h2 - h1).abs() >= 29.0 {
                    count += 1;
                }
            }
            assert_eq!(smoothing_indicator(&a).unwrap(), count);
        }
    }

    #[test]
    fn selection_excludes_maternal_echo() {
        let mqrs = anns((0..60).map(|k| 200 + k * 800).collect(), 1000);
        let fetal = anns((0..110).map(|k| 100 + k * 430).collect(), 1000);
        let r = select_channel(&[mqrs.clone(), fetal], &mqrs);
        assert_eq!(r.bcm[0], 1.0);
        assert_eq!(r.chosen, Some(1));
    }

    #[test]
    fn selection_first_minimum() {
        let mqrs = anns((0..60).map(|k| 200 + k * 800).collect(), 1000);
        let a = anns((0..100).map(|k| 100 + k * 430).collect(), 1000);
        let mut jumpy: Vec<usize> = (0..100).map(|k| 100 + k * 430).collect();
        for k in [20, 40, 60] {
            jumpy[k] += 150;
        }
        let b = anns(jumpy, 1000);
        let r = select_channel(&[a.clone(), b.clone()], &mqrs);
        assert_eq!(r.smi[0], Some(0));
        assert!(r.smi[1].unwrap() >= 5);
        assert_eq!(r.chosen, Some(0));
        assert_eq!(select_channel(&[a.clone(), a], &mqrs).chosen, Some(0));
        assert_eq!(select_channel(&[mqrs.clone()], &mqrs).chosen, None);
    }

    fn grid(skip: &[usize], extra: &[usize]) -> BeatAnnotations {
        let mut v: Vec<usize> = (0..15).map(|k| k * 400).filter(|p| !skip.contains(p)).collect();
        v.extend_from_slice(extra);
        BeatAnnotations::from_unsorted(v, 1000).unwrap()
    }

    /// The six extra/missed configurations with the number of missed beats.
    fn canonical_cases() -> Vec<(&'static str, BeatAnnotations, usize)> {
        vec![
            ("extra just after a beat", grid(&[], &[2100]), 0),
            ("extra at mid interval", grid(&[], &[2200]), 0),
            ("one missed", grid(&[2400], &[]), 1),
            ("two missed in a row", grid(&[2400, 2800], &[]), 2),
            ("extra then missed", grid(&[2800], &[2100]), 1),
            ("two extras in one interval", grid(&[], &[2100, 2250]), 0),
        ]
    }

    #[test]
    fn smoothing_canonical_cases() {
        let full = grid(&[], &[]);
        for (name, case, missed) in canonical_cases() {
            let s = smooth_rr(&case);
            assert_eq!(s.annotations, full, "{name}");
            assert_eq!(s.inserted.iter().filter(|&&b| b).count(), missed, "{name}");
            assert_eq!(smooth_rr(&s.annotations).annotations, s.annotations, "{name}");
        }
    }

    #[test]
    fn smoothing_hand_traces() {
        let s = smooth_rr(&grid(&[2400, 2800], &[]));
        let flagged: Vec<usize> = s
            .annotations
            .indices()
            .iter()
            .zip(&s.inserted)
            .filter(|(_, &f)| f)
            .map(|(&p, _)| p)
            .collect();
        assert_eq!(flagged, vec![2400, 2800]);
        assert!(smooth_rr(&grid(&[], &[2100])).inserted.iter().all(|&f| !f));
    }

    #[test]
    fn smoothing_inactive_outside_physiological_range() {
        // 600 ms median is above 0.5·fs
        let mut v: Vec<usize> = (0..15).map(|k| k * 600).collect();
        v.push(3100);
        let a = BeatAnnotations::from_unsorted(v, 1000).unwrap();
        assert_eq!(smooth_rr(&a).annotations, a);
        let short = anns(vec![0, 400, 800], 1000);
        assert_eq!(smooth_rr(&short).annotations, short);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn detections_respect_refractory(seed in 0u64..10_000, refr in 100.0f64..400.0) {
            let mut rng = crate::rng::rng_from_seed(seed);
            let nd = Normal::new(0.0, 1.0).unwrap();
            let mut x: Vec<f64> = (0..3000).map(|_| 0.05 * nd.sample(&mut rng)).collect();
            for _ in 0..20 {
                let p = rng.random_range(0..3000);
                x[p] += rng.random_range(-3.0..3.0);
            }
            let d = detect_qrs(&x, 500, refr).unwrap();
            let r = (refr * 500.0 / 1000.0).round() as usize;
            prop_assert!(d.indices().windows(2).all(|w| w[1] - w[0] >= r));
        }

        #[test]
        fn adjust_moves_little_and_never_lowers_amplitude(seed in 0u64..10_000) {
            let mut rng = crate::rng::rng_from_seed(seed);
            let nd = Normal::new(0.0, 1.0).unwrap();
            let x: Vec<f64> = (0..4000).map(|_| nd.sample(&mut rng)).collect();
            let idx: Vec<usize> = (0..30).map(|k| 50 + k * 130 + rng.random_range(0..40)).collect();
            let a = BeatAnnotations::from_unsorted(idx, 1000).unwrap();
            let out = adjust_peaks(&x, &a).unwrap();
            // the map is per fiducial; compare through the unsorted mapping
            let half = 30;
            for &q in out.indices() {
                let src: Vec<usize> = a.indices().iter().copied().filter(|p| p.abs_diff(q) <= half).collect();
                prop_assert!(!src.is_empty());
                prop_assert!(src.iter().any(|&p| x[q].abs() >= x[p].abs()));
            }
        }

        #[test]
        fn selection_never_returns_maternal_overlap(
            seeds in proptest::collection::vec(0u64..1000, 1..6),
        ) {
            let mqrs = anns((0..70).map(|k| 150 + k * 850).collect(), 1000);
            let cands: Vec<BeatAnnotations> = seeds
                .iter()
                .map(|&s| {
                    let mut rng = crate::rng::rng_from_seed(s);
                    let mut v: Vec<usize> = mqrs.indices().iter().filter(|_| rng.random_bool(0.5)).copied().collect();
                    let step = rng.random_range(380..480);
                    v.extend((0..rng.random_range(0..120)).map(|k| 40 + k * step));
                    BeatAnnotations::from_unsorted(v, 1000).unwrap()
                })
                .collect();
            let r = select_channel(&cands, &mqrs);
            if let Some(c) = r.chosen {
                prop_assert!(r.bcm[c] < BCM_THRESHOLD);
                for (i, s) in r.smi.iter().enumerate() {
                    if let Some(s) = s {
                        if r.bcm[i] < BCM_THRESHOLD {
                            prop_assert!(r.smi[c].unwrap() <= *s);
                        }
                    }
                }
            }
        }
    }
}
