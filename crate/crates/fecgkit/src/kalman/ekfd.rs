use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ekfs::{
    ekf_ecg_filter, kernel_noise, kernel_terms, model_mismatch_variance, omega_stats, DivergenceGuard, EkfsConfig,
    EkfsOutput, DEFAULT_GAIN_Q, DEFAULT_GAIN_R, ETA_FRACTION, KERNEL_CENTRE_SD, KERNEL_PEAK_FRACTION,
    KERNEL_WIDTH_SD,
};
use super::step::{ekf_step, StateEstimate, StateSpace};
use crate::ecg_model::{
    assign_phase, build_template, build_template_gated, fit_gaussians_with, CycleModel, FitOptions, GaussianKernel,
    DEFAULT_BINS,
};
use crate::signal::{highpass_zero_phase, lowpass_zero_phase, BeatAnnotations};
use crate::stats::wrap_angle;
use crate::{Error, Result};

/// Standard deviations of the fetal kernel random walk, accumulated over one fetal cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelWalk {
    /// Fraction of each kernel amplitude.
    pub alpha_fraction: f64,
    pub b: f64,
    pub xi: f64,
}

impl Default for KernelWalk {
    fn default() -> Self {
        Self { alpha_fraction: KERNEL_PEAK_FRACTION, b: KERNEL_WIDTH_SD, xi: KERNEL_CENTRE_SD }
    }
}

/// Dual filter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfdConfig {
    pub gain_r: f64,
    pub gain_q: f64,
    pub n_kernels: usize,
    pub walk: KernelWalk,
    /// Post-filter pass band (Hz).
    pub band: (f64, f64),
    /// Fetal kernel widths are clamped to at least this value (rad).
    pub min_width: f64,
    /// Amplitude observation variance; estimated from the data when unset.
    pub amplitude_noise: Option<f64>,
    /// Restarts allowed when fitting the priors.
    pub fit_restarts: usize,
    pub seed: u64,
}

impl Default for EkfdConfig {
    fn default() -> Self {
        Self {
            gain_r: DEFAULT_GAIN_R,
            gain_q: DEFAULT_GAIN_Q,
            n_kernels: 7,
            walk: KernelWalk::default(),
            band: (0.7, 100.0),
            min_width: 2.0 * PI / DEFAULT_BINS as f64,
            amplitude_noise: None,
            fit_restarts: 10,
            seed: 0,
        }
    }
}

impl EkfdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain_r > 0.0 && self.gain_q > 0.0) {
            return Err(Error::invalid("covariance gains must be positive"));
        }
        if self.n_kernels == 0 || !(self.min_width > 0.0) {
            return Err(Error::invalid("kernel count and minimum width must be positive"));
        }
        if !(0.0 < self.band.0 && self.band.0 < self.band.1) {
            return Err(Error::invalid("post-filter band must satisfy 0 < low < high"));
        }
        Ok(())
    }
}

/// Dual maternal/fetal model.
///
/// State `[θf, θm, f, m, αf₁..αf_N, bf₁..bf_N, ξf₁..ξf_N]`; noise
/// `[ωf, ωm, ηf, ηm, εα₁..εα_N, εb₁..εb_N, εξ₁..εξ_N, αm₁.., bm₁.., ξm₁..]`;
/// observations `[φf, φm, s, s]`, the last being `m` plus the fetal prior.
#[derive(Debug, Clone, PartialEq)]
pub struct DualDynamics {
    pub n_fetal: usize,
    pub maternal: Vec<GaussianKernel>,
    pub omega_f: f64,
    pub omega_m: f64,
    pub delta: f64,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

const TF: usize = 0;
const TM: usize = 1;
const F: usize = 2;
const M: usize = 3;
const KF: usize = 4;

impl DualDynamics {
    pub fn new(
        n_fetal: usize,
        maternal: Vec<GaussianKernel>,
        omega_f: f64,
        omega_m: f64,
        delta: f64,
        q_diag: &[f64],
        r_diag: [f64; 4],
    ) -> Result<Self> {
        let nw = 4 + 3 * n_fetal + 3 * maternal.len();
        if q_diag.len() != nw {
            return Err(Error::invalid(format!("process noise needs {nw} variances")));
        }
        if q_diag.iter().chain(&r_diag).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("noise variances must be finite and non-negative"));
        }
        Ok(Self {
            n_fetal,
            maternal,
            omega_f,
            omega_m,
            delta,
            q: DMatrix::from_diagonal(&DVector::from_column_slice(q_diag)),
            r: DMatrix::from_diagonal(&DVector::from_column_slice(&r_diag)),
        })
    }

    pub fn state_dim(&self) -> usize {
        KF + 3 * self.n_fetal
    }

    pub fn noise_dim(&self) -> usize {
        4 + 3 * self.n_fetal + 3 * self.maternal.len()
    }

    pub fn fetal_kernel(&self, x: &DVector<f64>, i: usize) -> GaussianKernel {
        let n = self.n_fetal;
        GaussianKernel { alpha: x[KF + i], b: x[KF + n + i], xi: x[KF + 2 * n + i] }
    }

    pub fn fetal_kernels(&self, x: &DVector<f64>) -> Vec<GaussianKernel> {
        (0..self.n_fetal).map(|i| self.fetal_kernel(x, i)).collect()
    }

    pub fn noise_mean(&self) -> DVector<f64> {
        let (nf, nm) = (self.n_fetal, self.maternal.len());
        let mut w = DVector::zeros(self.noise_dim());
        w[0] = self.omega_f;
        w[1] = self.omega_m;
        let base = 4 + 3 * nf;
        for (i, k) in self.maternal.iter().enumerate() {
            w[base + i] = k.alpha;
            w[base + nm + i] = k.b;
            w[base + 2 * nm + i] = k.xi;
        }
        w
    }

    /// State map at an arbitrary noise value.
    pub fn transition_with(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let (nf, nm) = (self.n_fetal, self.maternal.len());
        let dl = self.delta;
        let mut y = x.clone();
        y[TF] = wrap_angle(x[TF] + w[0] * dl);
        y[TM] = wrap_angle(x[TM] + w[1] * dl);
        let mut df = 0.0;
        for i in 0..nf {
            let k = self.fetal_kernel(x, i);
            let (d, e) = kernel_terms(&k, x[TF]);
            df -= dl * k.alpha * w[0] / (k.b * k.b) * d * e;
        }
        let base = 4 + 3 * nf;
        let mut dm = 0.0;
        for i in 0..nm {
            let k = GaussianKernel { alpha: w[base + i], b: w[base + nm + i], xi: w[base + 2 * nm + i] };
            let (d, e) = kernel_terms(&k, x[TM]);
            dm -= dl * k.alpha * w[1] / (k.b * k.b) * d * e;
        }
        y[F] = x[F] + df + w[2];
        y[M] = x[M] + dm + w[3];
        for j in 0..3 * nf {
            y[KF + j] = x[KF + j] + w[4 + j];
        }
        y
    }
}

impl StateSpace for DualDynamics {
    fn transition(&self, x: &DVector<f64>) -> DVector<f64> {
        self.transition_with(x, &self.noise_mean())
    }

    fn transition_jacobians(&self, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (nf, nm) = (self.n_fetal, self.maternal.len());
        let dl = self.delta;
        let mut g = DMatrix::identity(self.state_dim(), self.state_dim());
        let mut l = DMatrix::zeros(self.state_dim(), self.noise_dim());
        l[(TF, 0)] = dl;
        l[(TM, 1)] = dl;
        l[(F, 2)] = 1.0;
        l[(M, 3)] = 1.0;
        let wf = self.omega_f;
        for i in 0..nf {
            let k = self.fetal_kernel(x, i);
            let (d, e) = kernel_terms(&k, x[TF]);
            let b2 = k.b * k.b;
            let shape = (1.0 - d * d / b2) * e;
            g[(F, TF)] -= dl * k.alpha * wf / b2 * shape;
            g[(F, KF + i)] = -dl * wf * d / b2 * e;
            g[(F, KF + nf + i)] = dl * k.alpha * wf * d / (b2 * k.b) * (2.0 - d * d / b2) * e;
            g[(F, KF + 2 * nf + i)] = dl * k.alpha * wf / b2 * shape;
            l[(F, 0)] -= dl * k.alpha * d / b2 * e;
        }
        let wm = self.omega_m;
        let base = 4 + 3 * nf;
        for (i, k) in self.maternal.iter().enumerate() {
            let (d, e) = kernel_terms(k, x[TM]);
            let b2 = k.b * k.b;
            let shape = (1.0 - d * d / b2) * e;
            g[(M, TM)] -= dl * k.alpha * wm / b2 * shape;
            l[(M, base + i)] = -dl * wm * d / b2 * e;
            l[(M, base + nm + i)] = dl * k.alpha * wm * d / (b2 * k.b) * (2.0 - d * d / b2) * e;
            l[(M, base + 2 * nm + i)] = dl * k.alpha * wm / b2 * shape;
            l[(M, 1)] -= dl * k.alpha * d / b2 * e;
        }
        for j in 0..3 * nf {
            l[(KF + j, 4 + j)] = 1.0;
        }
        (g, l)
    }

    fn observation(&self, x: &DVector<f64>) -> DVector<f64> {
        let prior: f64 = (0..self.n_fetal)
            .map(|i| {
                let k = self.fetal_kernel(x, i);
                k.alpha * kernel_terms(&k, x[TF]).1
            })
            .sum();
        DVector::from_vec(vec![x[TF], x[TM], x[M] + x[F], x[M] + prior])
    }

    fn observation_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let nf = self.n_fetal;
        let mut h = DMatrix::zeros(4, self.state_dim());
        h[(0, TF)] = 1.0;
        h[(1, TM)] = 1.0;
        h[(2, F)] = 1.0;
        h[(2, M)] = 1.0;
        h[(3, M)] = 1.0;
        for i in 0..nf {
            let k = self.fetal_kernel(x, i);
            let (d, e) = kernel_terms(&k, x[TF]);
            let b2 = k.b * k.b;
            h[(3, TF)] -= k.alpha * d / b2 * e;
            h[(3, KF + i)] = e;
            h[(3, KF + nf + i)] = k.alpha * d * d / (b2 * k.b) * e;
            h[(3, KF + 2 * nf + i)] = k.alpha * d / b2 * e;
        }
        h
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn observation_noise(&self) -> &DMatrix<f64> {
        &self.r
    }

    fn innovation(&self, y: &DVector<f64>, predicted: &DVector<f64>) -> DVector<f64> {
        let mut nu = y - predicted;
        nu[0] = wrap_angle(nu[0]);
        nu[1] = wrap_angle(nu[1]);
        nu
    }
}

/// Fetal kernels at one fetal fiducial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSnapshot {
    pub sample: usize,
    pub kernels: Vec<GaussianKernel>,
}

/// Dual filter output.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfdOutput {
    /// Post-filtered maternal and fetal estimates.
    pub mecg: Vec<f64>,
    pub fecg: Vec<f64>,
    /// Posterior state amplitudes before post-filtering.
    pub raw_mecg: Vec<f64>,
    pub raw_fecg: Vec<f64>,
    /// `s − m − f` per sample.
    pub residual: Vec<f64>,
    pub trajectory: Vec<KernelSnapshot>,
    /// Number of fetal width updates clamped to the lower bound.
    pub clamped: usize,
}

/// Zero-phase band-pass used after both filters; the upper edge is dropped
/// when it is not below 0.45·fs.
pub fn postfilter(x: &[f64], fs: f64, band: (f64, f64)) -> Result<Vec<f64>> {
    let hp = highpass_zero_phase(x, fs, band.0, 2)?;
    if band.1 < 0.45 * fs {
        lowpass_zero_phase(&hp, fs, band.1, 4)
    } else {
        Ok(hp)
    }
}

/// Dual extended Kalman filter: maternal and fetal amplitudes estimated jointly,
/// with the fetal kernels following a random walk.
pub fn ekfd_filter(
    channel: &[f64],
    mqrs: &BeatAnnotations,
    fqrs: &BeatAnnotations,
    m_model: &CycleModel,
    f_model: &CycleModel,
    cfg: &EkfdConfig,
) -> Result<EkfdOutput> {
    cfg.validate()?;
    if channel.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("channel contains non-finite samples"));
    }
    if mqrs.fs() != fqrs.fs() {
        return Err(Error::invalid("maternal and fetal annotations use different sampling rates"));
    }
    if m_model.is_empty() || f_model.is_empty() {
        return Err(Error::invalid("models need at least one kernel"));
    }
    let n = channel.len();
    mqrs.check_bounds(n)?;
    fqrs.check_bounds(n)?;
    let fs = mqrs.fs_f64();
    let delta = 1.0 / fs;
    let phi_f = assign_phase(fqrs, n)?.phase;
    let phi_m = assign_phase(mqrs, n)?.phase;
    let (omega_f, sd_f) = omega_stats(fqrs)?;
    let (omega_m, sd_m) = omega_stats(mqrs)?;
    let sv2 = cfg.amplitude_noise.unwrap_or_else(|| {
        model_mismatch_variance(channel, &[(m_model, &phi_m), (f_model, &phi_f)])
            .max((ETA_FRACTION * m_model.peak_amplitude()).powi(2))
    });
    let nf = f_model.len();
    let beat_samples = 2.0 * PI / (omega_f * delta);
    let walk: Vec<f64> = f_model
        .kernels()
        .iter()
        .map(|k| (cfg.walk.alpha_fraction * k.alpha).powi(2))
        .chain((0..nf).map(|_| cfg.walk.b.powi(2)))
        .chain((0..nf).map(|_| cfg.walk.xi.powi(2)))
        .collect();
    let mut q = vec![
        sd_f * sd_f,
        sd_m * sd_m,
        (ETA_FRACTION * f_model.peak_amplitude()).powi(2),
        (ETA_FRACTION * m_model.peak_amplitude()).powi(2),
    ];
    q.extend(walk.iter().map(|v| v / beat_samples));
    q.extend(kernel_noise(m_model.kernels()));
    q.iter_mut().for_each(|v| *v *= cfg.gain_q);
    let r = [
        (omega_f * delta).powi(2) / 12.0 * cfg.gain_r,
        (omega_m * delta).powi(2) / 12.0 * cfg.gain_r,
        sv2 * cfg.gain_r,
        sv2 * cfg.gain_r,
    ];
    let dynamics = DualDynamics::new(nf, m_model.kernels().to_vec(), omega_f, omega_m, delta, &q, r)?;

    let dim = dynamics.state_dim();
    let mut x0 = DVector::zeros(dim);
    x0[TF] = phi_f[0];
    x0[TM] = phi_m[0];
    x0[F] = f_model.value(phi_f[0]);
    x0[M] = channel[0] - x0[F];
    for (i, k) in f_model.kernels().iter().enumerate() {
        x0[KF + i] = k.alpha;
        x0[KF + nf + i] = k.b;
        x0[KF + 2 * nf + i] = k.xi;
    }
    let mut p0 = vec![(omega_f * delta).powi(2), (omega_m * delta).powi(2), sv2, sv2];
    p0.extend(walk);
    let mut est = StateEstimate::new(x0, DMatrix::from_diagonal(&DVector::from_vec(p0)))?;

    let mut raw_mecg = vec![0.0; n];
    let mut raw_fecg = vec![0.0; n];
    raw_mecg[0] = est.x[M];
    raw_fecg[0] = est.x[F];
    let mut trajectory = Vec::with_capacity(fqrs.len());
    let mut next_fqrs = 0;
    let fiducials = fqrs.indices();
    let mut clamped = 0;
    let mut guard = DivergenceGuard::new(fs);
    for k in 0..n {
        if k > 0 {
            let y = DVector::from_vec(vec![phi_f[k], phi_m[k], channel[k], channel[k]]);
            let step = ekf_step(&dynamics, &est, &y)?;
            guard.check(step.innovation[2], step.innovation_cov[(2, 2)], k)?;
            est = step.estimate;
            est.x[TF] = wrap_angle(est.x[TF]);
            est.x[TM] = wrap_angle(est.x[TM]);
            for i in 0..nf {
                let b = &mut est.x[KF + nf + i];
                if *b < cfg.min_width {
                    *b = cfg.min_width;
                    clamped += 1;
                }
            }
            raw_mecg[k] = est.x[M];
            raw_fecg[k] = est.x[F];
        }
        while next_fqrs < fiducials.len() && fiducials[next_fqrs] == k {
            trajectory.push(KernelSnapshot { sample: k, kernels: dynamics.fetal_kernels(&est.x) });
            next_fqrs += 1;
        }
    }
    let residual = (0..n).map(|i| channel[i] - raw_mecg[i] - raw_fecg[i]).collect();
    Ok(EkfdOutput {
        mecg: postfilter(&raw_mecg, fs, cfg.band)?,
        fecg: postfilter(&raw_fecg, fs, cfg.band)?,
        raw_mecg,
        raw_fecg,
        residual,
        trajectory,
        clamped,
    })
}

/// Priors, single-source pass and dual pass for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DualExtraction {
    pub maternal_model: CycleModel,
    pub fetal_model: CycleModel,
    /// Band-passed channel that both filters observed.
    pub observed: Vec<f64>,
    pub ekfs: EkfsOutput,
    pub ekfd: EkfdOutput,
}

/// Fits the maternal prior, runs the single-source filter, fits the fetal
/// prior on its residual and runs the dual filter, all on the band-passed channel.
pub fn ekfd_pipeline(
    channel: &[f64],
    mqrs: &BeatAnnotations,
    fqrs: &BeatAnnotations,
    cfg: &EkfdConfig,
) -> Result<DualExtraction> {
    cfg.validate()?;
    let fs = mqrs.fs_f64();
    let observed = postfilter(channel, fs, cfg.band)?;
    let fit = |x: &[f64], anns: &BeatAnnotations, gated: bool, seed: u64| -> Result<CycleModel> {
        let template = if gated {
            build_template(x, anns, DEFAULT_BINS).or_else(|_| build_template_gated(x, anns, DEFAULT_BINS, None))?
        } else {
            build_template_gated(x, anns, DEFAULT_BINS, None)?
        };
        let opts = FitOptions { n_kernels: cfg.n_kernels, max_restarts: cfg.fit_restarts, seed, ..FitOptions::default() };
        Ok(fit_gaussians_with(&template, &opts)?.model)
    };
    let maternal_model = fit(&observed, mqrs, true, cfg.seed)?;
    let ekfs = ekf_ecg_filter(
        &observed,
        mqrs,
        &maternal_model,
        &EkfsConfig { gain_r: cfg.gain_r, gain_q: cfg.gain_q, ..EkfsConfig::default() },
    )?;
    let fetal_model = fit(&ekfs.residual, fqrs, false, cfg.seed.wrapping_add(1))?;
    let ekfd = ekfd_filter(&observed, mqrs, fqrs, &maternal_model, &fetal_model, cfg)?;
    Ok(DualExtraction { maternal_model, fetal_model, observed, ekfs, ekfd })
}
