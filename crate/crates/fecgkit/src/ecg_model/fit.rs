use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{CycleModel, GaussianKernel};
use super::template::{phase_grid, TemplateCycle};
use crate::stats::wrap_angle;
use crate::{Error, Result};

/// Kernel fitting controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_kernels: usize,
    pub max_restarts: usize,
    /// Restarts stop once the normalised RMS falls below this value.
    pub target_nrms: f64,
    pub max_iter: usize,
    /// Lower bound on kernel widths; `None` uses `2π/bins`.
    pub min_width: Option<f64>,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { n_kernels: 7, max_restarts: 100, target_nrms: 0.05, max_iter: 200, min_width: None, seed: 0 }
    }
}

/// Outcome of a kernel fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub model: CycleModel,
    /// ‖template − fit‖ / ‖template‖.
    pub nrms: f64,
    pub restarts: usize,
    /// Best normalised RMS after each restart.
    pub trace: Vec<f64>,
}

/// Fits `n_kernels` Gaussian kernels to a template with default options.
pub fn fit_gaussians(template: &TemplateCycle, n_kernels: usize) -> Result<GaussianFit> {
    fit_gaussians_with(template, &FitOptions { n_kernels, ..FitOptions::default() })
}

/// Fits Gaussian kernels by damped Gauss–Newton with randomised restarts.
pub fn fit_gaussians_with(template: &TemplateCycle, opts: &FitOptions) -> Result<GaussianFit> {
    let t = &template.bins;
    let n = opts.n_kernels;
    if n == 0 {
        return Err(Error::invalid("at least one kernel required"));
    }
    if t.len() < 3 * n {
        return Err(Error::invalid("template too short for the requested kernel count"));
    }
    let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::numerical("cannot fit a flat template"));
    }
    let phases = phase_grid(t.len());
    let bmin = opts.min_width.unwrap_or(2.0 * PI / t.len() as f64);
    let problem = Problem { phases: &phases, target: t, bmin, bmax: PI };
    let fiducial = if n == 7 { Some(fiducial_guess(&phases, t, bmin)) } else { None };
    let greedy = greedy_guess(&phases, t, n, bmin);
    let mut rng = crate::rng::rng_from_seed(opts.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();
    for restart in 0..opts.max_restarts.max(1) {
        let base = match (&fiducial, restart % 2) {
            (Some(f), 0) => f,
            _ => &greedy,
        };
        let mut p = base.clone();
        if restart >= 2 {
            for i in 0..n {
                p[i] *= rng.random_range(0.8..1.2);
                p[n + i] = (p[n + i] * rng.random_range(0.7..1.4)).clamp(bmin, PI);
                p[2 * n + i] = wrap_angle(p[2 * n + i] + rng.random_range(-0.05 * PI..0.05 * PI));
            }
        }
        let (p, cost) = problem.levenberg_marquardt(p, opts.max_iter);
        let nrms = cost.sqrt() / norm;
        if best.as_ref().is_none_or(|(_, b)| nrms < *b) {
            best = Some((p, nrms));
        }
        let current = best.as_ref().map(|b| b.1).unwrap_or(f64::INFINITY);
        trace.push(current);
        if current < opts.target_nrms {
            break;
        }
    }
    let (p, nrms) = best.expect("at least one restart");
    if !(nrms < 1.0) {
        return Err(Error::numerical("kernel fit did not reduce the error below 100%"));
    }
    let kernels = (0..n)
        .map(|i| GaussianKernel::new(p[i], p[n + i], p[2 * n + i]))
        .collect();
    Ok(GaussianFit {
        model: CycleModel::from_unsorted(kernels, None)?,
        nrms,
        restarts: trace.len(),
        trace,
    })
}

struct Problem<'a> {
    phases: &'a [f64],
    target: &'a [f64],
    bmin: f64,
    bmax: f64,
}

impl Problem<'_> {
    fn n(p: &[f64]) -> usize {
        p.len() / 3
    }

    fn cost(&self, p: &[f64]) -> f64 {
        let n = Self::n(p);
        self.phases
            .iter()
            .zip(self.target)
            .map(|(&th, &y)| {
                let m: f64 = (0..n)
                    .map(|i| {
                        let d = wrap_angle(th - p[2 * n + i]);
                        p[i] * (-d * d / (2.0 * p[n + i] * p[n + i])).exp()
                    })
                    .sum();
                (y - m) * (y - m)
            })
            .sum()
    }

    fn jacobian_and_residual(&self, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let n = Self::n(p);
        let m = self.phases.len();
        let mut j = DMatrix::zeros(m, 3 * n);
        let mut r = DVector::zeros(m);
        for (row, (&th, &y)) in self.phases.iter().zip(self.target).enumerate() {
            let mut model = 0.0;
            for i in 0..n {
                let (a, b) = (p[i], p[n + i]);
                let d = wrap_angle(th - p[2 * n + i]);
                let e = (-d * d / (2.0 * b * b)).exp();
                model += a * e;
                j[(row, i)] = e;
                j[(row, n + i)] = a * e * d * d / (b * b * b);
                j[(row, 2 * n + i)] = a * e * d / (b * b);
            }
            r[row] = y - model;
        }
        (j, r)
    }

    fn project(&self, p: &mut [f64]) {
        let n = Self::n(p);
        for i in 0..n {
            p[n + i] = p[n + i].clamp(self.bmin, self.bmax);
            p[2 * n + i] = wrap_angle(p[2 * n + i]);
        }
    }

    fn levenberg_marquardt(&self, mut p: Vec<f64>, max_iter: usize) -> (Vec<f64>, f64) {
        self.project(&mut p);
        let mut cost = self.cost(&p);
        let mut lambda = 1e-3;
        for _ in 0..max_iter {
            let (j, r) = self.jacobian_and_residual(&p);
            let a = j.transpose() * &j;
            let g = j.transpose() * r;
            let mut improved = false;
            while lambda < 1e12 {
                let mut damped = a.clone();
                for k in 0..damped.nrows() {
                    damped[(k, k)] += lambda * a[(k, k)].max(1e-12);
                }
                let Some(step) = damped.lu().solve(&g) else {
                    lambda *= 10.0;
                    continue;
                };
                let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                self.project(&mut trial);
                let c = self.cost(&trial);
                if c < cost {
                    let rel = (cost - c) / cost.max(1e-300);
                    p = trial;
                    cost = c;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = rel > 1e-14;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved || cost < 1e-28 {
                break;
            }
        }
        (p, cost)
    }
}

fn argmax_by<F: Fn(usize) -> f64>(range: impl Iterator<Item = usize>, f: F) -> Option<usize> {
    range.max_by(|&a, &b| f(a).total_cmp(&f(b)))
}

/// Initial guess from the P, Q, R, S and T turning points.
fn fiducial_guess(phases: &[f64], t: &[f64], bmin: f64) -> Vec<f64> {
    let idx = |lo: f64, hi: f64| (0..phases.len()).filter(move |&i| phases[i] >= lo && phases[i] <= hi);
    let r = argmax_by(idx(-0.6, 0.6), |i| t[i].abs())
        .unwrap_or_else(|| argmax_by(0..t.len(), |i| t[i].abs()).unwrap_or(0));
    let s = t[r].signum();
    let th_r = phases[r];
    let q = argmax_by(idx(th_r - 0.35, th_r - 1e-9), |i| -s * t[i]).unwrap_or(r);
    let sw = argmax_by(idx(th_r + 1e-9, th_r + 0.35), |i| -s * t[i]).unwrap_or(r);
    let p = argmax_by(idx(-PI + 0.1, th_r - 0.35), |i| t[i].abs()).unwrap_or(0);
    let tw = argmax_by(idx(th_r + 0.35, PI - 0.1), |i| t[i].abs()).unwrap_or(t.len() - 1);
    let spec = [
        (0.5 * t[p], 0.1, phases[p] - 0.08),
        (0.5 * t[p], 0.1, phases[p] + 0.08),
        (t[q], 0.04, phases[q]),
        (t[r], 0.05, th_r),
        (t[sw], 0.04, phases[sw]),
        (0.6 * t[tw], 0.25, phases[tw] - 0.15),
        (0.5 * t[tw], 0.2, phases[tw] + 0.15),
    ];
    pack(&spec, bmin)
}

/// Initial guess placing kernels one by one on the largest remaining residual.
fn greedy_guess(phases: &[f64], t: &[f64], n: usize, bmin: f64) -> Vec<f64> {
    let mut res = t.to_vec();
    let mut spec = Vec::with_capacity(n);
    let step = 2.0 * PI / phases.len() as f64;
    for _ in 0..n {
        let k = argmax_by(0..res.len(), |i| res[i].abs()).unwrap_or(0);
        let peak = res[k];
        let half = 0.5 * peak.abs();
        let mut w = 1;
        while w < res.len() / 2
            && res[(k + w) % res.len()].abs() > half
            && res[(k + res.len() - w) % res.len()].abs() > half
        {
            w += 1;
        }
        let b = (w as f64 * step / 1.1774).max(bmin);
        let xi = phases[k];
        for (i, v) in res.iter_mut().enumerate() {
            let d = wrap_angle(phases[i] - xi);
            *v -= peak * (-d * d / (2.0 * b * b)).exp();
        }
        spec.push((peak, b, xi));
    }
    pack(&spec, bmin)
}

fn pack(spec: &[(f64, f64, f64)], bmin: f64) -> Vec<f64> {
    let n = spec.len();
    let mut p = vec![0.0; 3 * n];
    for (i, &(a, b, xi)) in spec.iter().enumerate() {
        p[i] = a;
        p[n + i] = b.max(bmin);
        p[2 * n + i] = wrap_angle(xi);
    }
    p
}
