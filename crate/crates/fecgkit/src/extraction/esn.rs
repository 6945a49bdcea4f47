//! Echo state network canceller with a leaky reservoir and RLS readout.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::adaptive::{Rls, RLS_DELTA};
use crate::rng::stream;
use crate::{Error, Result};

/// Reservoir draws attempted before giving up.
pub const ESN_MAX_ATTEMPTS: usize = 10;

/// Reservoir and readout settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsnParams {
    /// Number of reservoir units.
    pub m: usize,
    /// Spectral radius of the reservoir matrix.
    pub rho: f64,
    /// Leakage rate.
    pub alpha: f64,
    /// Fraction of non-zero reservoir weights.
    pub psi: f64,
    /// Input scaling.
    pub gamma: f64,
    /// Readout forgetting factor.
    pub lambda: f64,
    /// Readout training starts after this many seconds.
    pub washout_s: f64,
}

impl Default for EsnParams {
    fn default() -> Self {
        Self { m: 90, rho: 0.4, alpha: 0.4, psi: 0.2, gamma: 1.0, lambda: 0.999, washout_s: 2.0 }
    }
}

impl EsnParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.m == 0 || !(self.rho > 0.0) || !unit(self.alpha) || !(self.psi > 0.0 && self.psi <= 1.0) {
            return Err(Error::invalid("ESN needs m > 0, rho > 0, alpha in [0, 1], psi in (0, 1]"));
        }
        if !(self.gamma > 0.0) || !(self.lambda > 0.0 && self.lambda <= 1.0) || !(self.washout_s >= 0.0) {
            return Err(Error::invalid("ESN needs gamma > 0, lambda in (0, 1], washout >= 0"));
        }
        Ok(())
    }
}

/// Fixed random reservoir with a single input.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoStateNetwork {
    pub w: DMatrix<f64>,
    pub w_in: DVector<f64>,
    pub alpha: f64,
    /// Reservoir draws discarded because their spectral radius vanished.
    pub retries: usize,
}

fn spectral_radius(w: &DMatrix<f64>) -> f64 {
    w.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl EchoStateNetwork {
    /// Sparse uniform reservoir rescaled to spectral radius `rho`; uniform input weights scaled by `gamma`.
    pub fn new(params: &EsnParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let m = params.m;
        for attempt in 0..ESN_MAX_ATTEMPTS {
            let mut rng = stream(seed, &format!("esn/reservoir/{attempt}"));
            let w = DMatrix::from_fn(m, m, |_, _| {
                if rng.random::<f64>() < params.psi {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            });
            let radius = spectral_radius(&w);
            if !(radius > 1e-12 && radius.is_finite()) {
                continue;
            }
            let w_in = DVector::from_fn(m, |_, _| params.gamma * rng.random_range(-1.0..1.0));
            return Ok(Self { w: w * (params.rho / radius), w_in, alpha: params.alpha, retries: attempt });
        }
        Err(Error::numerical(format!("no usable reservoir in {ESN_MAX_ATTEMPTS} draws")))
    }

    pub fn size(&self) -> usize {
        self.w_in.len()
    }

    /// `x(n+1) = (1 − α)x(n) + tanh(W x(n) + W_i u(n+1))`.
    pub fn step(&self, x: &DVector<f64>, u: f64) -> DVector<f64> {
        let mut pre = &self.w * x;
        pre.axpy(u, &self.w_in, 1.0);
        pre.zip_map(x, |a, xi| (1.0 - self.alpha) * xi + a.tanh())
    }

    /// Visits the state after each input sample.
    pub fn drive<F: FnMut(usize, &DVector<f64>)>(&self, input: &[f64], x0: DVector<f64>, mut visit: F) {
        let mut x = x0;
        for (k, &u) in input.iter().enumerate() {
            x = self.step(&x, u);
            visit(k, &x);
        }
    }
}

/// Residual and prediction of the reservoir canceller.
#[derive(Debug, Clone, PartialEq)]
pub struct EsnOutput {
    pub residual: Vec<f64>,
    pub prediction: Vec<f64>,
    pub retries: usize,
}

/// Predicts `target` from the reservoir driven by `reference`; the readout
/// acts on `[x(n), u(n)]` and is trained by RLS after the washout.
pub fn esn_cancel(reference: &[f64], target: &[f64], fs: f64, params: &EsnParams, seed: u64) -> Result<EsnOutput> {
    if reference.len() != target.len() {
        return Err(Error::invalid("reference and target lengths differ"));
    }
    if reference.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input samples"));
    }
    if !(fs > 0.0) {
        return Err(Error::invalid("sampling rate must be positive"));
    }
    let washout = (params.washout_s * fs).round() as usize;
    if target.len() <= washout {
        return Err(Error::invalid("signal shorter than the washout"));
    }
    let esn = EchoStateNetwork::new(params, seed)?;
    let m = esn.size();
    let mut readout = Rls::new(m + 1, params.lambda, RLS_DELTA)?;
    let mut z = vec![0.0; m + 1];
    let mut residual = Vec::with_capacity(target.len());
    let mut prediction = Vec::with_capacity(target.len());
    let mut failure = None;
    esn.drive(reference, DVector::zeros(m), |k, x| {
        if failure.is_some() {
            return;
        }
        if k < washout {
            residual.push(target[k]);
            prediction.push(0.0);
            return;
        }
        z[..m].copy_from_slice(x.as_slice());
        z[m] = reference[k];
        match readout.update(&z, target[k]) {
            Ok(e) => {
                residual.push(e);
                prediction.push(target[k] - e);
            }
            Err(err) => failure = Some(Error::numerical(format!("ESN readout at sample {k}: {err}"))),
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(EsnOutput { residual, prediction, retries: esn.retries })
}
