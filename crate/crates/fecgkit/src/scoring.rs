//! Beat matching and evaluation statistics: Se/PPV/F1, heart-rate match and
//! the E1/E2/E3 interval scores.

use serde::{Deserialize, Serialize};

use crate::signal::BeatAnnotations;
use crate::{Error, Result};

/// Default matching tolerance.
pub const MATCH_WINDOW_MS: f64 = 50.0;

/// Outcome of matching test beats against reference beats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `(reference position, test position)` pairs, by position in each series.
    pub pairs: Vec<(usize, usize)>,
    pub window_ms: f64,
}

/// Matching window in samples for sampling rate `fs`.
pub fn window_samples(window_ms: f64, fs: f64) -> usize {
    (window_ms * fs / 1000.0).round() as usize
}

/// One-to-one matching within `window_ms`.
///
/// Among all non-crossing matchings the one with the most pairs is kept, and
/// among those the one with the smallest total offset; remaining ties leave
/// the later reference beat unmatched.
pub fn match_beats(reference: &BeatAnnotations, test: &BeatAnnotations, window_ms: f64) -> MatchResult {
    let w = window_samples(window_ms, reference.fs_f64());
    let r = reference.indices();
    let t = test.indices();
    let mut pairs = Vec::new();
    // split at gaps wider than the window: no pair can straddle them
    let (mut i0, mut j0) = (0, 0);
    while i0 < r.len() && j0 < t.len() {
        let (mut i1, mut j1) = (i0, j0);
        let mut last = r[i0].min(t[j0]);
        loop {
            let nr = r.get(i1).copied();
            let nt = t.get(j1).copied();
            let next = match (nr, nt) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => break,
            };
            if next > last + w {
                break;
            }
            last = next;
            if nr == Some(next) {
                i1 += 1;
            } else {
                j1 += 1;
            }
        }
        match_block(&r[i0..i1], &t[j0..j1], w, i0, j0, &mut pairs);
        i0 = i1;
        j0 = j1;
    }
    let tp = pairs.len();
    MatchResult { tp, fp: t.len() - tp, fn_: r.len() - tp, pairs, window_ms }
}

fn match_block(r: &[usize], t: &[usize], w: usize, ri: usize, tj: usize, pairs: &mut Vec<(usize, usize)>) {
    let (n, m) = (r.len(), t.len());
    if n == 0 || m == 0 {
        return;
    }
    // value = (pairs, -total offset), compared lexicographically
    let mut f = vec![vec![(0usize, 0i64); m + 1]; n + 1];
    let better = |a: (usize, i64), b: (usize, i64)| a.0 > b.0 || (a.0 == b.0 && a.1 > b.1);
    for i in 1..=n {
        for j in 1..=m {
            let mut v = f[i - 1][j];
            if better(f[i][j - 1], v) {
                v = f[i][j - 1];
            }
            let d = r[i - 1].abs_diff(t[j - 1]);
            if d <= w {
                let c = (f[i - 1][j - 1].0 + 1, f[i - 1][j - 1].1 - d as i64);
                if better(c, v) {
                    v = c;
                }
            }
            f[i][j] = v;
        }
    }
    let (mut i, mut j) = (n, m);
    let mut block = Vec::new();
    while i > 0 && j > 0 {
        if f[i][j] == f[i - 1][j] {
            i -= 1;
        } else if f[i][j] == f[i][j - 1] {
            j -= 1;
        } else {
            block.push((ri + i - 1, tj + j - 1));
            i -= 1;
            j -= 1;
        }
    }
    block.reverse();
    pairs.extend(block);
}

/// Sensitivity, positive predictive value and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub se: f64,
    pub ppv: f64,
    pub f1: f64,
}

/// `Se = TP/(TP+FN)`, `PPV = TP/(TP+FP)`, `F1 = 2TP/(2TP+FN+FP)`.
pub fn f1_se_ppv(m: &MatchResult) -> Result<DetectionMetrics> {
    if m.tp + m.fn_ == 0 {
        return Err(Error::invalid("empty reference series"));
    }
    if m.tp + m.fp == 0 {
        return Err(Error::invalid("empty test series"));
    }
    let tp = m.tp as f64;
    Ok(DetectionMetrics {
        se: tp / (tp + m.fn_ as f64),
        ppv: tp / (tp + m.fp as f64),
        f1: 2.0 * tp / (2.0 * tp + m.fn_ as f64 + m.fp as f64),
    })
}

/// F1 of `test` against `reference`, 0 when the test series is empty.
pub fn f1_score(reference: &BeatAnnotations, test: &BeatAnnotations) -> f64 {
    let m = match_beats(reference, test, MATCH_WINDOW_MS);
    f1_se_ppv(&m).map(|d| d.f1).unwrap_or(0.0)
}

fn instantaneous_hr(a: &BeatAnnotations) -> (Vec<f64>, Vec<f64>) {
    let fs = a.fs_f64();
    let idx = a.indices();
    let times = idx[1..].iter().map(|&i| i as f64).collect();
    let hr = idx.windows(2).map(|w| 60.0 * fs / (w[1] - w[0]) as f64).collect();
    (times, hr)
}

fn interpolate(x: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= x[0] {
        return y[0];
    }
    if at >= x[x.len() - 1] {
        return y[y.len() - 1];
    }
    let k = x.partition_point(|&v| v <= at) - 1;
    let f = (at - x[k]) / (x[k + 1] - x[k]);
    y[k] + f * (y[k + 1] - y[k])
}

/// Percentage of reference instants where the interpolated test heart rate is
/// within `tol_bpm` of the reference heart rate.
pub fn hr_match(reference: &BeatAnnotations, test: &BeatAnnotations, tol_bpm: f64) -> Result<f64> {
    if reference.len() < 2 || test.len() < 2 {
        return Err(Error::invalid("heart-rate match needs at least two beats in each series"));
    }
    let (rt, rh) = instantaneous_hr(reference);
    let (tt, th) = instantaneous_hr(test);
    let hits = rt
        .iter()
        .zip(&rh)
        .filter(|(t, h)| (interpolate(&tt, &th, **t) - **h).abs() <= tol_bpm)
        .count();
    Ok(100.0 * hits as f64 / rt.len() as f64)
}

/// Interval scores for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeScores {
    /// Mean squared heart-rate difference over the twelve segments (bpm²).
    pub e1: Option<f64>,
    /// Segments skipped because either series had fewer than two beats.
    pub e1_invalid_segments: usize,
    /// RMS difference of matched RR intervals (ms).
    pub e2: Option<f64>,
    /// Squared QT difference (ms²).
    pub e3: Option<f64>,
}

/// Edge exclusion applied to interval scores.
pub const EDGE_EXCLUSION_S: f64 = 2.0;
/// Number of heart-rate segments in E1.
pub const E1_SEGMENTS: usize = 12;

fn segment_hr(idx: &[usize], lo: f64, hi: f64, fs: f64) -> Option<f64> {
    let inside: Vec<usize> = idx.iter().copied().filter(|&i| (i as f64) >= lo && (i as f64) < hi).collect();
    if inside.len() < 2 {
        return None;
    }
    let span = (inside[inside.len() - 1] - inside[0]) as f64 / fs;
    Some(60.0 * (inside.len() - 1) as f64 / span)
}

/// E1 over twelve equal segments spanning the record without its first and
/// last two seconds, E2 over matched RR pairs in the same span, and E3 from a
/// `(reference, test)` QT pair in ms.
pub fn challenge_scores(
    reference: &BeatAnnotations,
    test: &BeatAnnotations,
    n_samples: usize,
    qt: Option<(f64, f64)>,
) -> ChallengeScores {
    let fs = reference.fs_f64();
    let lo = EDGE_EXCLUSION_S * fs;
    let hi = n_samples as f64 - EDGE_EXCLUSION_S * fs;
    let mut e1 = None;
    let mut invalid = 0;
    if hi > lo {
        let seg = (hi - lo) / E1_SEGMENTS as f64;
        let mut acc = 0.0;
        let mut valid = 0;
        for s in 0..E1_SEGMENTS {
            let a = lo + s as f64 * seg;
            let b = a + seg;
            match (segment_hr(reference.indices(), a, b, fs), segment_hr(test.indices(), a, b, fs)) {
                (Some(hr), Some(ht)) => {
                    acc += (hr - ht).powi(2);
                    valid += 1;
                }
                _ => invalid += 1,
            }
        }
        if valid > 0 {
            e1 = Some(acc / valid as f64);
        }
    } else {
        invalid = E1_SEGMENTS;
    }
    let m = match_beats(reference, test, MATCH_WINDOW_MS);
    let r = reference.indices();
    let t = test.indices();
    let mut sq = 0.0;
    let mut count = 0;
    for w in m.pairs.windows(2) {
        let ((ri, ti), (rj, tj)) = (w[0], w[1]);
        let inside = (r[ri] as f64) >= lo && (r[rj] as f64) < hi;
        if rj == ri + 1 && inside {
            let d = (t[tj] as f64 - t[ti] as f64) - (r[rj] as f64 - r[ri] as f64);
            sq += (d * 1000.0 / fs).powi(2);
            count += 1;
        }
    }
    let e2 = (count > 0).then(|| (sq / count as f64).sqrt());
    let e3 = qt.map(|(q_ref, q_test)| (q_test - q_ref).powi(2));
    ChallengeScores { e1, e1_invalid_segments: invalid, e2, e3 }
}

/// Combined comparison report for one record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    pub se: Option<f64>,
    pub ppv: Option<f64>,
    pub f1: Option<f64>,
    pub tp: Option<usize>,
    pub fp: Option<usize>,
    #[serde(rename = "fn")]
    pub fn_: Option<usize>,
    pub hrm: Option<f64>,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub e3: Option<f64>,
    pub snr: Option<f64>,
}
