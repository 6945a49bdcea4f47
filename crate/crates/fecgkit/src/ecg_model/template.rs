use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::signal::BeatAnnotations;
use crate::stats::{median, pearson};
use crate::{Error, Result};

/// Default number of phase bins.
pub const DEFAULT_BINS: usize = 250;
/// Cycles whose correlation with the reference does not exceed this are rejected.
pub const GATING_CORRELATION: f64 = 0.8;

/// Phase-wrapped average cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateCycle {
    /// Mean amplitude per phase bin.
    pub bins: Vec<f64>,
    /// Per-bin standard deviation across the accepted cycles.
    pub stddev: Vec<f64>,
    pub cycles_used: usize,
}

impl TemplateCycle {
    /// Phase of every bin centre.
    pub fn phases(&self) -> Vec<f64> {
        phase_grid(self.bins.len())
    }
}

/// Bin centres `−π + (k + ½)·2π/bins`.
pub fn phase_grid(bins: usize) -> Vec<f64> {
    (0..bins)
        .map(|k| -PI + (k as f64 + 0.5) * 2.0 * PI / bins as f64)
        .collect()
}

fn lerp(x: &[f64], t: f64) -> f64 {
    let i = t.floor() as usize;
    if i + 1 >= x.len() {
        return x[x.len() - 1];
    }
    let f = t - i as f64;
    x[i] * (1.0 - f) + x[i + 1] * f
}

/// Linearly time-warps each annotated cycle onto the phase grid and averages
/// the cycles whose correlation with the median cycle exceeds 0.8.
pub fn build_template(channel: &[f64], anns: &BeatAnnotations, bins: usize) -> Result<TemplateCycle> {
    build_template_gated(channel, anns, bins, Some(GATING_CORRELATION))
}

/// As [`build_template`] with a configurable gate; `None` averages every complete cycle.
pub fn build_template_gated(
    channel: &[f64],
    anns: &BeatAnnotations,
    bins: usize,
    min_correlation: Option<f64>,
) -> Result<TemplateCycle> {
    let a = anns.indices();
    if a.len() < 2 {
        return Err(Error::invalid("template needs at least two annotated beats"));
    }
    if bins < 4 {
        return Err(Error::invalid("template needs at least four bins"));
    }
    anns.check_bounds(channel.len())?;
    let grid = phase_grid(bins);
    let last = (channel.len() - 1) as f64;
    let mut cycles: Vec<Vec<f64>> = Vec::new();
    for k in 0..a.len() {
        let rr_prev = if k > 0 { a[k] - a[k - 1] } else { a[1] - a[0] } as f64;
        let rr_next = if k + 1 < a.len() { a[k + 1] - a[k] } else { a[k] - a[k - 1] } as f64;
        let pos = |phi: f64| a[k] as f64 + phi / (2.0 * PI) * if phi < 0.0 { rr_prev } else { rr_next };
        if pos(grid[0]) < 0.0 || pos(grid[bins - 1]) > last {
            continue;
        }
        cycles.push(grid.iter().map(|&phi| lerp(channel, pos(phi))).collect());
    }
    if cycles.is_empty() {
        return Err(Error::invalid("no complete cycle inside the signal"));
    }
    let reference: Vec<f64> = (0..bins)
        .map(|b| median(&cycles.iter().map(|c| c[b]).collect::<Vec<_>>()))
        .collect();
    let accepted: Vec<&Vec<f64>> = cycles
        .iter()
        .filter(|c| {
            let Some(gate) = min_correlation else { return true };
            let flat_ref = reference.iter().all(|v| *v == reference[0]);
            if flat_ref {
                c.iter().zip(&reference).all(|(u, v)| u == v)
            } else {
                pearson(c, &reference) > gate
            }
        })
        .collect();
    if accepted.is_empty() {
        return Err(Error::numerical("all cycles rejected by correlation gating"));
    }
    let n = accepted.len() as f64;
    let mean: Vec<f64> = (0..bins).map(|b| accepted.iter().map(|c| c[b]).sum::<f64>() / n).collect();
    let stddev = (0..bins)
        .map(|b| (accepted.iter().map(|c| (c[b] - mean[b]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    Ok(TemplateCycle { bins: mean, stddev, cycles_used: accepted.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecg_model::{synthesize_cycle, CycleModel};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn periodic(model: &CycleModel, rr: usize, beats: usize) -> (Vec<f64>, Vec<usize>) {
        let n = rr * beats;
        let x = (0..n)
            .map(|i| {
                let j = i % rr;
                model.value(-PI + 2.0 * PI * j as f64 / rr as f64)
            })
            .collect();
        let peaks = (0..beats).map(|k| k * rr + rr / 2).collect();
        (x, peaks)
    }

    #[test]
    fn identical_cycles_reproduce_the_cycle() {
        let m = CycleModel::reference_cycle();
        let (x, peaks) = periodic(&m, 1000, 8);
        let anns = BeatAnnotations::new(peaks, 1000).unwrap();
        let t = build_template(&x, &anns, 250).unwrap();
        // bin centres fall on integer samples for rr = 1000, bins = 250
        let truth = synthesize_cycle(&m, &phase_grid(250));
        let scale = truth.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in t.bins.iter().zip(&truth) {
            assert!((a - b).abs() / scale < 1e-6);
        }
        assert!(t.stddev.iter().all(|s| *s < 1e-9));
    }

    #[test]
    fn inverted_cycle_rejected() {
        let m = CycleModel::reference_cycle();
        let rr = 500;
        let (mut x, peaks) = periodic(&m, rr, 10);
        for v in &mut x[4 * rr..5 * rr] {
            *v = -*v;
        }
        let anns = BeatAnnotations::new(peaks, 500).unwrap();
        let t = build_template(&x, &anns, 250).unwrap();
        assert_eq!(t.cycles_used, 9);
    }

    #[test]
    fn noise_statistics_follow_sample_count() {
        let m = CycleModel::reference_cycle();
        let sigma = 0.05;
        let truth = synthesize_cycle(&m, &phase_grid(250));
        let mut errs = Vec::new();
        for &beats in &[10usize, 40] {
            let mut acc = 0.0;
            let mut sd = 0.0;
            let trials = 20;
            for seed in 0..trials {
                let mut rng = crate::rng::rng_from_seed(100 + seed);
                let (mut x, peaks) = periodic(&m, 1000, beats);
                x.iter_mut().for_each(|v| *v += sigma * rng.sample::<f64, _>(StandardNormal));
                let anns = BeatAnnotations::new(peaks, 1000).unwrap();
                let t = build_template(&x, &anns, 250).unwrap();
                assert_eq!(t.cycles_used, beats);
                let rms = (t.bins.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 250.0).sqrt();
                acc += rms;
                sd += t.stddev.iter().sum::<f64>() / 250.0;
            }
            errs.push(acc / trials as f64);
            let mean_sd = sd / trials as f64;
            assert!((mean_sd - sigma).abs() < 0.1 * sigma, "{mean_sd}");
        }
        // four times the cycles halves the error
        let ratio = errs[0] / errs[1];
        assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn errors_on_bad_inputs() {
        let anns = BeatAnnotations::new(vec![10], 100).unwrap();
        assert!(build_template(&[0.0; 100], &anns, 250).is_err());
        let anns = BeatAnnotations::new(vec![10, 200], 100).unwrap();
        assert!(build_template(&[0.0; 100], &anns, 250).is_err());
    }
}
