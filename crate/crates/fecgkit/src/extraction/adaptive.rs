//! Adaptive noise cancellation with a reference channel.

use crate::{Error, Result};

pub const LMS_TAPS: usize = 20;
pub const LMS_MU: f64 = 0.1;
pub const RLS_TAPS: usize = 20;
pub const RLS_LAMBDA: f64 = 0.999;
/// Initial inverse correlation is `I / RLS_DELTA`.
pub const RLS_DELTA: f64 = 1e-4;

/// Residual, prediction and final weights of an adaptive canceller.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveOutput {
    pub residual: Vec<f64>,
    pub prediction: Vec<f64>,
    pub weights: Vec<f64>,
}

fn check_inputs(reference: &[f64], target: &[f64], taps: usize) -> Result<()> {
    if reference.len() != target.len() {
        return Err(Error::invalid("reference and target lengths differ"));
    }
    if taps == 0 || taps >= target.len() {
        return Err(Error::invalid("filter length must be in 1..signal length"));
    }
    if reference.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input samples"));
    }
    Ok(())
}

/// Tap vector `[u(n−N+1), …, u(n)]`, zero before the start.
fn taps_at(reference: &[f64], n: usize, u: &mut [f64]) {
    let taps = u.len();
    for (j, v) in u.iter_mut().enumerate() {
        let lag = taps - 1 - j;
        *v = if n >= lag { reference[n - lag] } else { 0.0 };
    }
}

/// Least-mean-squares canceller.
pub fn lms_filter(reference: &[f64], target: &[f64], taps: usize, mu: f64) -> Result<AdaptiveOutput> {
    check_inputs(reference, target, taps)?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid("step size must be positive"));
    }
    let n = target.len();
    let mut w = vec![0.0; taps];
    let mut u = vec![0.0; taps];
    let mut residual = Vec::with_capacity(n);
    let mut prediction = Vec::with_capacity(n);
    for k in 0..n {
        taps_at(reference, k, &mut u);
        let eta: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
        let e = target[k] - eta;
        w.iter_mut().zip(&u).for_each(|(wi, ui)| *wi += mu * e * ui);
        prediction.push(eta);
        residual.push(e);
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("LMS weights diverged; reduce the step size"));
    }
    Ok(AdaptiveOutput { residual, prediction, weights: w })
}

pub fn lms_cancel(reference: &[f64], target: &[f64], taps: usize, mu: f64) -> Result<Vec<f64>> {
    Ok(lms_filter(reference, target, taps, mu)?.residual)
}

/// Exponentially weighted recursive least squares on a regressor stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Rls {
    pub weights: Vec<f64>,
    /// Inverse of the weighted input correlation, row-major.
    p: Vec<f64>,
    lambda: f64,
    pu: Vec<f64>,
}

impl Rls {
    pub fn new(dim: usize, lambda: f64, delta: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::invalid("forgetting factor must be in (0, 1]"));
        }
        if !(delta > 0.0) || dim == 0 {
            return Err(Error::invalid("RLS needs a positive regulariser and dimension"));
        }
        let mut p = vec![0.0; dim * dim];
        for i in 0..dim {
            p[i * dim + i] = 1.0 / delta;
        }
        Ok(Self { weights: vec![0.0; dim], p, lambda, pu: vec![0.0; dim] })
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Self {
        assert_eq!(w.len(), self.weights.len());
        self.weights = w;
        self
    }

    pub fn predict(&self, u: &[f64]) -> f64 {
        self.weights.iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// One update with regressor `u` and target `y`; returns the a priori error.
    pub fn update(&mut self, u: &[f64], y: f64) -> Result<f64> {
        let d = self.weights.len();
        let e = y - self.predict(u);
        for i in 0..d {
            self.pu[i] = (0..d).map(|j| self.p[i * d + j] * u[j]).sum();
        }
        let denom = self.lambda + u.iter().zip(&self.pu).map(|(a, b)| a * b).sum::<f64>();
        if !(denom > 0.0 && denom.is_finite()) {
            return Err(Error::numerical("RLS inverse correlation lost positive definiteness"));
        }
        for i in 0..d {
            let ki = self.pu[i] / denom;
            self.weights[i] += ki * e;
            for j in i..d {
                let v = (self.p[i * d + j] - ki * self.pu[j]) / self.lambda;
                self.p[i * d + j] = v;
                self.p[j * d + i] = v;
            }
        }
        Ok(e)
    }
}

/// Recursive-least-squares canceller with `P(0) = I / delta`.
pub fn rls_filter(reference: &[f64], target: &[f64], taps: usize, lambda: f64, delta: f64) -> Result<AdaptiveOutput> {
    check_inputs(reference, target, taps)?;
    let n = target.len();
    let mut rls = Rls::new(taps, lambda, delta)?;
    let mut u = vec![0.0; taps];
    let mut residual = Vec::with_capacity(n);
    let mut prediction = Vec::with_capacity(n);
    for k in 0..n {
        taps_at(reference, k, &mut u);
        let e = rls.update(&u, target[k]).map_err(|err| Error::numerical(format!("sample {k}: {err}")))?;
        prediction.push(target[k] - e);
        residual.push(e);
    }
    if rls.weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("RLS weights diverged"));
    }
    Ok(AdaptiveOutput { residual, prediction, weights: rls.weights })
}

pub fn rls_cancel(reference: &[f64], target: &[f64], taps: usize, lambda: f64) -> Result<Vec<f64>> {
    Ok(rls_filter(reference, target, taps, lambda, RLS_DELTA)?.residual)
}
