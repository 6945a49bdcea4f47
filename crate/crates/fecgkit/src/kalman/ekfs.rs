use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::step::{ekf_step, StateEstimate, StateSpace};
use crate::ecg_model::{assign_phase, CycleModel, GaussianKernel};
use crate::signal::BeatAnnotations;
use crate::stats::{mean, variance, wrap_angle};
use crate::{Error, Result};

/// Standard deviation of kernel centres and widths in the process noise (rad).
pub const KERNEL_CENTRE_SD: f64 = 0.05 * PI;
pub const KERNEL_WIDTH_SD: f64 = 0.05 * PI;
/// Kernel amplitude standard deviation as a fraction of the amplitude.
pub const KERNEL_PEAK_FRACTION: f64 = 0.1;
/// Dynamic noise standard deviation as a fraction of the cycle peak.
pub const ETA_FRACTION: f64 = 0.01;
pub const DEFAULT_GAIN_R: f64 = 100.0;
pub const DEFAULT_GAIN_Q: f64 = 5.0;
/// Innovations beyond this many standard deviations count towards divergence.
pub const DIVERGENCE_SIGMA: f64 = 10.0;
pub const DIVERGENCE_S: f64 = 0.5;

/// `(d, e)` with `d = wrap(θ − ξ)` and `e = exp(−d²/2b²)`.
pub(crate) fn kernel_terms(k: &GaussianKernel, theta: f64) -> (f64, f64) {
    let d = wrap_angle(theta - k.xi);
    (d, (-d * d / (2.0 * k.b * k.b)).exp())
}

/// Mean and standard deviation of the beat-to-beat angular frequency (rad/s).
pub fn omega_stats(anns: &BeatAnnotations) -> Result<(f64, f64)> {
    if anns.len() < 2 {
        return Err(Error::invalid("angular frequency needs at least two beats"));
    }
    let fs = anns.fs_f64();
    let w: Vec<f64> = anns.rr_samples().iter().map(|&rr| 2.0 * PI * fs / rr as f64).collect();
    let sd = if w.len() > 1 { variance(&w).sqrt() } else { 0.0 };
    Ok((mean(&w), sd))
}

/// Variance of the observation around the model evaluated at the observed phase.
pub(crate) fn model_mismatch_variance(channel: &[f64], models: &[(&CycleModel, &[f64])]) -> f64 {
    let r: Vec<f64> = (0..channel.len())
        .map(|i| channel[i] - models.iter().map(|(m, ph)| m.value(ph[i])).sum::<f64>())
        .collect();
    variance(&r)
}

/// Single-source dynamical ECG model, state `[θ, z]`, noise
/// `[α₁..α_N, b₁..b_N, ξ₁..ξ_N, ω, η]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgDynamics {
    pub kernels: Vec<GaussianKernel>,
    pub omega: f64,
    pub delta: f64,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl EcgDynamics {
    pub fn new(kernels: Vec<GaussianKernel>, omega: f64, delta: f64, q_diag: &[f64], r_diag: [f64; 2]) -> Result<Self> {
        let nw = 3 * kernels.len() + 2;
        if q_diag.len() != nw {
            return Err(Error::invalid(format!("process noise needs {nw} variances")));
        }
        if q_diag.iter().chain(&r_diag).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("noise variances must be finite and non-negative"));
        }
        Ok(Self {
            kernels,
            omega,
            delta,
            q: DMatrix::from_diagonal(&DVector::from_column_slice(q_diag)),
            r: DMatrix::from_diagonal(&DVector::from_column_slice(&r_diag)),
        })
    }

    /// Mean of the process noise vector.
    pub fn noise_mean(&self) -> DVector<f64> {
        let n = self.kernels.len();
        let mut w = DVector::zeros(3 * n + 2);
        for (i, k) in self.kernels.iter().enumerate() {
            w[i] = k.alpha;
            w[n + i] = k.b;
            w[2 * n + i] = k.xi;
        }
        w[3 * n] = self.omega;
        w
    }

    /// State map at an arbitrary noise value.
    pub fn transition_with(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let n = self.kernels.len();
        let omega = w[3 * n];
        let mut dz = 0.0;
        for i in 0..n {
            let k = GaussianKernel { alpha: w[i], b: w[n + i], xi: w[2 * n + i] };
            let (d, e) = kernel_terms(&k, x[0]);
            dz += -self.delta * k.alpha * omega / (k.b * k.b) * d * e;
        }
        DVector::from_vec(vec![wrap_angle(x[0] + omega * self.delta), x[1] + dz + w[3 * n + 1]])
    }
}

impl StateSpace for EcgDynamics {
    fn transition(&self, x: &DVector<f64>) -> DVector<f64> {
        self.transition_with(x, &self.noise_mean())
    }

    fn transition_jacobians(&self, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.kernels.len();
        let (dl, w) = (self.delta, self.omega);
        let mut g = DMatrix::identity(2, 2);
        let mut l = DMatrix::zeros(2, 3 * n + 2);
        l[(0, 3 * n)] = dl;
        l[(1, 3 * n + 1)] = 1.0;
        for (i, k) in self.kernels.iter().enumerate() {
            let (d, e) = kernel_terms(k, x[0]);
            let b2 = k.b * k.b;
            let shape = (1.0 - d * d / b2) * e;
            g[(1, 0)] -= dl * k.alpha * w / b2 * shape;
            l[(1, i)] = -dl * w * d / b2 * e;
            l[(1, n + i)] = dl * k.alpha * w * d / (b2 * k.b) * (2.0 - d * d / b2) * e;
            l[(1, 2 * n + i)] = dl * k.alpha * w / b2 * shape;
            l[(1, 3 * n)] -= dl * k.alpha * d / b2 * e;
        }
        (g, l)
    }

    fn observation(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn observation_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn observation_noise(&self) -> &DMatrix<f64> {
        &self.r
    }

    fn innovation(&self, y: &DVector<f64>, predicted: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![wrap_angle(y[0] - predicted[0]), y[1] - predicted[1]])
    }
}

/// Single-source filter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfsConfig {
    pub gain_r: f64,
    pub gain_q: f64,
    /// Amplitude observation variance; estimated from the data when unset.
    pub amplitude_noise: Option<f64>,
    /// Initial covariance diagonal `[θ, z]`; defaults to `[(ωδ)², var(channel)]`.
    pub p0: Option<[f64; 2]>,
}

impl Default for EkfsConfig {
    fn default() -> Self {
        Self { gain_r: DEFAULT_GAIN_R, gain_q: DEFAULT_GAIN_Q, amplitude_noise: None, p0: None }
    }
}

/// Filtered maternal estimate and the residual left in the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfsOutput {
    pub filtered: Vec<f64>,
    pub residual: Vec<f64>,
    /// Amplitude innovation per sample.
    pub innovation: Vec<f64>,
}

/// Process noise diagonal for a kernel set, in the order α, b, ξ.
pub(crate) fn kernel_noise(kernels: &[GaussianKernel]) -> Vec<f64> {
    let mut q: Vec<f64> = kernels.iter().map(|k| (KERNEL_PEAK_FRACTION * k.alpha).powi(2)).collect();
    q.extend(kernels.iter().map(|_| KERNEL_WIDTH_SD.powi(2)));
    q.extend(kernels.iter().map(|_| KERNEL_CENTRE_SD.powi(2)));
    q
}

/// Tracks consecutive large innovations and fails once they persist.
pub(crate) struct DivergenceGuard {
    limit: usize,
    run: usize,
}

impl DivergenceGuard {
    pub(crate) fn new(fs: f64) -> Self {
        Self { limit: (DIVERGENCE_S * fs).ceil().max(1.0) as usize, run: 0 }
    }

    pub(crate) fn check(&mut self, nu: f64, var: f64, sample: usize) -> Result<()> {
        if nu.abs() > DIVERGENCE_SIGMA * var.max(0.0).sqrt() {
            self.run += 1;
            if self.run >= self.limit {
                return Err(Error::numerical(format!("filter diverged before sample {sample}")));
            }
        } else {
            self.run = 0;
        }
        Ok(())
    }
}

/// Extended Kalman filtering of one ECG channel with a Gaussian-kernel model.
///
/// Phase observations come from the fiducials; the residual is the channel
/// minus the filtered estimate.
pub fn ekf_ecg_filter(
    channel: &[f64],
    anns: &BeatAnnotations,
    model: &CycleModel,
    cfg: &EkfsConfig,
) -> Result<EkfsOutput> {
    if channel.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("channel contains non-finite samples"));
    }
    if !(cfg.gain_r >= 0.0 && cfg.gain_q >= 0.0) {
        return Err(Error::invalid("covariance gains must be non-negative"));
    }
    if model.is_empty() {
        return Err(Error::invalid("model has no kernels"));
    }
    let n = channel.len();
    anns.check_bounds(n)?;
    let fs = anns.fs_f64();
    let delta = 1.0 / fs;
    let phase = assign_phase(anns, n)?.phase;
    let (omega, omega_sd) = omega_stats(anns)?;
    let sv2 = cfg
        .amplitude_noise
        .unwrap_or_else(|| model_mismatch_variance(channel, &[(model, &phase)]).max((ETA_FRACTION * model.peak_amplitude()).powi(2)));
    let mut q = kernel_noise(model.kernels());
    q.push(omega_sd * omega_sd);
    q.push((ETA_FRACTION * model.peak_amplitude()).powi(2));
    q.iter_mut().for_each(|v| *v *= cfg.gain_q);
    let r = [(omega * delta).powi(2) / 12.0 * cfg.gain_r, sv2 * cfg.gain_r];
    let dynamics = EcgDynamics::new(model.kernels().to_vec(), omega, delta, &q, r)?;
    let p0 = cfg.p0.unwrap_or([(omega * delta).powi(2), variance(channel).max(f64::MIN_POSITIVE)]);
    let mut est = StateEstimate::new(
        DVector::from_vec(vec![phase[0], channel[0]]),
        DMatrix::from_diagonal(&DVector::from_vec(p0.to_vec())),
    )?;
    let mut filtered = vec![channel[0]; n];
    let mut innovation = vec![0.0; n];
    let mut guard = DivergenceGuard::new(fs);
    for k in 1..n {
        let step = ekf_step(&dynamics, &est, &DVector::from_vec(vec![phase[k], channel[k]]))?;
        guard.check(step.innovation[1], step.innovation_cov[(1, 1)], k)?;
        innovation[k] = step.innovation[1];
        est = step.estimate;
        est.x[0] = wrap_angle(est.x[0]);
        filtered[k] = est.x[1];
    }
    let residual = channel.iter().zip(&filtered).map(|(c, f)| c - f).collect();
    Ok(EkfsOutput { filtered, residual, innovation })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ecg_model::{build_template, euler_integrate, fit_gaussians_with, FitOptions, DEFAULT_BINS};
    use crate::kalman::{kf_step, numerical_jacobian, snr_db};
    use crate::rng::rng_from_seed;
    use crate::simulator::{simulate, DipoleScene, ScenarioConfig};
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// `|a − b| ≤ tol·max(|a|, floor)` for every entry.
    pub(crate) fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64, floor: f64, what: &str) {
        assert_eq!(a.shape(), b.shape());
        for (i, (x, y)) in a.iter().zip(b.iter()).enumerate() {
            assert!((x - y).abs() <= tol * x.abs().max(floor), "{what} entry {i}: analytic {x} numeric {y}");
        }
    }

    pub(crate) fn random_kernels(rng: &mut crate::rng::Rng, n: usize, theta: f64) -> Vec<GaussianKernel> {
        loop {
            let ks: Vec<GaussianKernel> = (0..n)
                .map(|_| {
                    GaussianKernel::new(rng.random_range(-1.0..1.0), rng.random_range(0.1..0.5), rng.random_range(-3.0..3.0))
                })
                .collect();
            if ks.iter().all(|k| wrap_angle(theta - k.xi).abs() < PI - 0.3) {
                return ks;
            }
        }
    }

    pub(crate) fn periodic_annotations(first: usize, rr: usize, n: usize, fs: u32) -> BeatAnnotations {
        BeatAnnotations::new((first..n).step_by(rr).collect(), fs).unwrap()
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = rng_from_seed(21);
        for _ in 0..100 {
            let n = rng.random_range(1..=7);
            let theta = rng.random_range(-PI + 0.5..PI - 0.5);
            let kernels = random_kernels(&mut rng, n, theta);
            let omega = rng.random_range(5.0..15.0);
            let dyn_ = EcgDynamics::new(kernels, omega, 1.0 / 250.0, &vec![1.0; 3 * n + 2], [1.0, 1.0]).unwrap();
            let x = DVector::from_vec(vec![theta, rng.random_range(-1.0..1.0)]);
            let w = dyn_.noise_mean();
            let (g, l) = dyn_.transition_jacobians(&x);
            let g_num = numerical_jacobian(|x| dyn_.transition_with(x, &w), &x, 1e-4);
            let l_num = numerical_jacobian(|w| dyn_.transition_with(&x, w), &w, 1e-4);
            assert_close(&g, &g_num, 1e-5, 1e-6, "G");
            assert_close(&l, &l_num, 1e-5, 1e-6, "L");
            let h_num = numerical_jacobian(|x| dyn_.observation(x), &x, 1e-4);
            assert_close(&dyn_.observation_jacobian(&x), &h_num, 1e-5, 1e-6, "H");
        }
    }

    /// A model with constant Jacobians and non-trivial noise mapping.
    struct ConstantModel {
        g: DMatrix<f64>,
        l: DMatrix<f64>,
        h: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    }

    impl StateSpace for ConstantModel {
        fn transition(&self, x: &DVector<f64>) -> DVector<f64> {
            &self.g * x
        }
        fn transition_jacobians(&self, _x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
            (self.g.clone(), self.l.clone())
        }
        fn observation(&self, x: &DVector<f64>) -> DVector<f64> {
            &self.h * x
        }
        fn observation_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            self.h.clone()
        }
        fn process_noise(&self) -> &DMatrix<f64> {
            &self.q
        }
        fn observation_noise(&self) -> &DMatrix<f64> {
            &self.r
        }
    }

    #[test]
    fn extended_filter_on_linear_system_equals_linear_filter() {
        let mut rng = rng_from_seed(4);
        let dl = 1.0 / 250.0;
        let m = ConstantModel {
            g: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.3 * dl, 1.0]),
            l: DMatrix::from_row_slice(2, 3, &[dl, 0.0, 0.0, 0.02, -0.01, 1.0]),
            h: DMatrix::identity(2, 2),
            q: DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.01, 1e-4])),
            r: DMatrix::from_diagonal(&DVector::from_vec(vec![1e-3, 0.02])),
        };
        let q_state = &m.l * &m.q * m.l.transpose();
        let init = StateEstimate::new(DVector::from_vec(vec![0.1, 0.0]), DMatrix::identity(2, 2)).unwrap();
        let (mut a, mut b) = (init.clone(), init);
        for _ in 0..10_000 {
            let y = DVector::from_vec(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            a = ekf_step(&m, &a, &y).unwrap().estimate;
            b = kf_step(&m.g, &m.h, &q_state, &m.r, &b, &y).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn joseph_covariance_stays_symmetric_and_psd() {
        let fs = 250u32;
        let n = 10_000;
        let model = CycleModel::reference_cycle();
        let anns = periodic_annotations(40, 200, n, fs);
        let phase = assign_phase(&anns, n).unwrap().phase;
        let mut rng = rng_from_seed(8);
        let x: Vec<f64> = phase.iter().map(|&p| model.value(p) + 0.05 * rng.sample::<f64, _>(StandardNormal)).collect();
        let (omega, _) = omega_stats(&anns).unwrap();
        let mut q = kernel_noise(model.kernels());
        q.extend([0.01, 1e-4]);
        let q: Vec<f64> = q.iter().map(|v| v * DEFAULT_GAIN_Q).collect();
        let d = EcgDynamics::new(model.kernels().to_vec(), omega, 1.0 / fs as f64, &q, [1e-3, 0.25]).unwrap();
        let mut est = StateEstimate::new(DVector::from_vec(vec![phase[0], x[0]]), DMatrix::identity(2, 2)).unwrap();
        for k in 1..n {
            est = ekf_step(&d, &est, &DVector::from_vec(vec![phase[k], x[k]])).unwrap().estimate;
            assert!(est.asymmetry() < 1e-10, "step {k}: {}", est.asymmetry());
            assert!(est.min_eigenvalue() >= -1e-10, "step {k}: {}", est.min_eigenvalue());
        }
    }

    #[test]
    fn full_model_trust_reproduces_model_dynamics() {
        let fs = 500u32;
        let n = 5000;
        let model = CycleModel::reference_cycle();
        let anns = periodic_annotations(0, 400, n, fs);
        let phase = assign_phase(&anns, n).unwrap().phase;
        let (omega, _) = omega_stats(&anns).unwrap();
        let clean = euler_integrate(&model, omega, fs as f64, n, phase[0], model.value(phase[0]));
        let mut rng = rng_from_seed(2);
        let noisy: Vec<f64> = clean.iter().map(|v| v + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut obs = noisy.clone();
        obs[0] = model.value(phase[0]);
        let cfg = EkfsConfig { gain_q: 0.0, p0: Some([0.0, 0.0]), ..EkfsConfig::default() };
        let out = ekf_ecg_filter(&obs, &anns, &model, &cfg).unwrap();
        let err = out.filtered.iter().zip(&clean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn full_observation_trust_returns_observation() {
        let fs = 250u32;
        let n = 2500;
        let model = CycleModel::reference_cycle();
        let anns = periodic_annotations(30, 210, n, fs);
        let mut rng = rng_from_seed(3);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cfg = EkfsConfig { amplitude_noise: Some(0.0), ..EkfsConfig::default() };
        let out = ekf_ecg_filter(&x, &anns, &model, &cfg).unwrap();
        for (a, b) in out.filtered.iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(out.residual.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn denoises_simulated_maternal_ecg() {
        let cfg = ScenarioConfig { fs: 500, duration: 30.0, ntype: vec![], seed: 5, ..ScenarioConfig::default() };
        let sim = simulate(&cfg, &DipoleScene::default()).unwrap();
        let clean = sim.maternal.channel(0).to_vec();
        let p = crate::stats::power(&clean);
        let sd = (p / 10f64.powf(0.6)).sqrt();
        let mut rng = rng_from_seed(6);
        let noisy: Vec<f64> = clean.iter().map(|v| v + sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let mqrs = sim.mqrs();
        let template = build_template(&noisy, mqrs, DEFAULT_BINS).unwrap();
        let fit = fit_gaussians_with(&template, &FitOptions { max_restarts: 10, ..FitOptions::default() }).unwrap();
        let out = ekf_ecg_filter(&noisy, mqrs, &fit.model, &EkfsConfig::default()).unwrap();
        let fs = 500.0;
        let before = snr_db(&clean, &noisy, fs).unwrap();
        let after = snr_db(&clean, &out.filtered, fs).unwrap();
        assert!((before - 6.0).abs() < 0.5, "{before}");
        assert!(after >= before + 3.0, "before {before} after {after}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = CycleModel::reference_cycle();
        let anns = periodic_annotations(0, 100, 1000, 250);
        let mut x = vec![0.0; 1000];
        x[3] = f64::NAN;
        assert!(ekf_ecg_filter(&x, &anns, &model, &EkfsConfig::default()).is_err());
        let short = periodic_annotations(0, 100, 2000, 250);
        assert!(ekf_ecg_filter(&vec![0.0; 1000], &short, &model, &EkfsConfig::default()).is_err());
    }
}
