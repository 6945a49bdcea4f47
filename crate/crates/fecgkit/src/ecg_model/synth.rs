use std::f64::consts::PI;

use super::kernel::CycleModel;
use crate::stats::wrap_angle;
use crate::{Error, Result};

/// Closed-form Gaussian sum on a phase grid.
pub fn synthesize_cycle(model: &CycleModel, phases: &[f64]) -> Vec<f64> {
    phases.iter().map(|&t| model.value(t)).collect()
}

/// Euler integration of the dynamical model, starting at phase `theta0` and
/// amplitude `z0`, with angular velocity `omega` (rad/s) and step `1/fs`.
pub fn euler_integrate(model: &CycleModel, omega: f64, fs: f64, n: usize, theta0: f64, z0: f64) -> Vec<f64> {
    let dt = 1.0 / fs;
    let mut out = Vec::with_capacity(n);
    let mut theta = theta0;
    let mut z = z0;
    for _ in 0..n {
        out.push(z);
        let dz: f64 = model
            .kernels()
            .iter()
            .map(|k| {
                let d = wrap_angle(theta - k.xi);
                -dt * k.alpha * omega / (k.b * k.b) * d * (-d * d / (2.0 * k.b * k.b)).exp()
            })
            .sum();
        z += dz;
        theta = wrap_angle(theta + omega * dt);
    }
    out
}

/// Three-axis dipole trajectory with its R-peak positions and phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Vcg {
    pub axes: [Vec<f64>; 3],
    pub r_peaks: Vec<usize>,
    pub phase: Vec<f64>,
}

/// Renders consecutive beats of `round(RR·fs)` samples each; beat `k` starts at
/// its R-peak (phase 0).  Samples with negative phase belong to the following
/// beat's P wave and use that beat's models.
pub fn render_beats<'a, F>(rr: &[f64], fs: f64, models_for: F) -> Result<Vcg>
where
    F: Fn(usize) -> &'a [CycleModel; 3],
{
    if rr.is_empty() {
        return Err(Error::invalid("RR series is empty"));
    }
    if rr.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::invalid("RR intervals must be positive"));
    }
    let lengths: Vec<usize> = rr.iter().map(|r| ((r * fs).round() as usize).max(1)).collect();
    let n: usize = lengths.iter().sum();
    let mut axes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut phase = Vec::with_capacity(n);
    let mut r_peaks = Vec::with_capacity(lengths.len());
    let mut start = 0;
    for (k, &len) in lengths.iter().enumerate() {
        r_peaks.push(start);
        let own = models_for(k);
        let next = models_for((k + 1).min(lengths.len() - 1));
        for j in 0..len {
            let th = wrap_angle(2.0 * PI * j as f64 / len as f64);
            let m = if th >= 0.0 { own } else { next };
            for (ax, model) in axes.iter_mut().zip(m.iter()) {
                ax.push(model.value(th));
            }
            phase.push(th);
        }
        start += len;
    }
    Ok(Vcg { axes, r_peaks, phase })
}

/// Dipole trajectory for a sequence of RR intervals (s) sharing one phase across axes.
pub fn generate_vcg(models: &[CycleModel; 3], rr: &[f64], fs: f64) -> Result<Vcg> {
    render_beats(rr, fs, |_| models)
}
