use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::signal::{ar_fit_burg, butterworth, sosfilt, ArModel, FilterKind};
use crate::{Error, Result};

/// Recorded noise categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NoiseType {
    /// Muscle artifact.
    MA,
    /// Electrode motion.
    EM,
    /// Baseline wander.
    BW,
}

impl NoiseType {
    pub const ALL: [NoiseType; 3] = [NoiseType::MA, NoiseType::EM, NoiseType::BW];

    /// MA and EM are high-passed before their power is measured.
    pub fn highpass_before_calibration(self) -> bool {
        matches!(self, NoiseType::MA | NoiseType::EM)
    }
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NoiseType::MA => "MA",
            NoiseType::EM => "EM",
            NoiseType::BW => "BW",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for NoiseType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MA" => Ok(NoiseType::MA),
            "EM" => Ok(NoiseType::EM),
            "BW" => Ok(NoiseType::BW),
            _ => Err(Error::invalid(format!("unknown noise type {s}"))),
        }
    }
}

/// AR order of the noise generators.
pub const NOISE_AR_ORDER: usize = 12;
/// Length of the synthetic segments the base models are fitted on.
pub const SEED_SEGMENT_S: f64 = 20.0;
/// Poles are never moved to a radius at or above this value.
pub const MAX_POLE_RADIUS: f64 = 0.9999;
const SEGMENT_SEED: u64 = 0x5eed_2014;

/// Time-varying AR noise generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub base: ArModel,
    /// Standard deviation of each pole step.
    pub walk_step: f64,
    /// Samples between pole updates.
    pub update_every: usize,
}

impl NoiseModel {
    /// Generator with the default random-walk settings around `base`.
    pub fn new(base: ArModel, fs: f64) -> Self {
        Self { base, walk_step: 2e-4, update_every: ((0.1 * fs).round() as usize).max(1) }
    }

    /// Model fitted to the deterministic synthetic segment of `kind` at rate `fs`.
    pub fn for_type(kind: NoiseType, fs: f64) -> Result<Self> {
        let seg = seed_segment(kind, fs)?;
        Ok(Self::new(ar_fit_burg(&seg, NOISE_AR_ORDER)?, fs))
    }
}

/// Deterministic 20 s coloured-noise segment characterising each noise type:
/// MA is broadband 5–45 Hz, EM low-frequency bursts, BW below 1 Hz.
pub fn seed_segment(kind: NoiseType, fs: f64) -> Result<Vec<f64>> {
    let n = (SEED_SEGMENT_S * fs).round() as usize;
    let mut rng = crate::rng::stream(SEGMENT_SEED, &kind.to_string());
    let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nyq = fs / 2.0;
    Ok(match kind {
        NoiseType::MA => {
            let hp = butterworth(2, 5.0, fs, FilterKind::Highpass)?;
            let lp = butterworth(2, 45.0f64.min(0.8 * nyq), fs, FilterKind::Lowpass)?;
            sosfilt(&lp, &sosfilt(&hp, &white, None), None)
        }
        NoiseType::EM => {
            let centres: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..SEED_SEGMENT_S)).collect();
            let bursty: Vec<f64> = white
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let t = i as f64 / fs;
                    let env: f64 = centres.iter().map(|c| (-(t - c).powi(2) / 0.5).exp()).sum();
                    w * (0.2 + 3.0 * env)
                })
                .collect();
            let lp = butterworth(2, 8.0f64.min(0.8 * nyq), fs, FilterKind::Lowpass)?;
            sosfilt(&lp, &bursty, None)
        }
        NoiseType::BW => {
            let lp = butterworth(2, 0.7, fs, FilterKind::Lowpass)?;
            sosfilt(&lp, &white, None)
        }
    })
}

/// Complex poles with non-negative imaginary part plus real poles.
fn split_poles(poles: &[Complex64]) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let tol = 1e-7;
    let complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > tol * (1.0 + p.re.abs())).collect();
    let real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= tol * (1.0 + p.re.abs())).map(|p| p.re).collect();
    if 2 * complex.len() + real.len() != poles.len() {
        return Err(Error::numerical("AR poles are not conjugate-symmetric"));
    }
    Ok((complex, real))
}

/// Prediction-error coefficients `[1, a1, ..., ap]` from conjugate pairs and real poles.
fn coefficients(complex: &[Complex64], real: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    let mul = |c: &Vec<f64>, q: &[f64]| {
        let mut out = vec![0.0; c.len() + q.len() - 1];
        for (i, a) in c.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    };
    for p in complex {
        c = mul(&c, &[1.0, -2.0 * p.re, p.norm_sqr()]);
    }
    for r in real {
        c = mul(&c, &[1.0, -r]);
    }
    c
}

/// Conjugate-symmetric set of AR poles taking random-walk steps inside the unit disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleWalk {
    complex: Vec<Complex64>,
    real: Vec<f64>,
    step: f64,
}

impl PoleWalk {
    pub fn new(base: &ArModel, step: f64) -> Result<Self> {
        let poles = base.poles();
        if poles.iter().any(|p| !(p.norm() < 1.0)) {
            return Err(Error::invalid("base AR model is unstable"));
        }
        let (complex, real) = split_poles(&poles)?;
        Ok(Self { complex, real, step })
    }

    /// Moves every pole by a Gaussian step; a step that would leave the disk
    /// of radius [`MAX_POLE_RADIUS`] (or cross the real axis) is not taken.
    pub fn advance<R: Rng>(&mut self, rng: &mut R) {
        for c in self.complex.iter_mut() {
            let dre: f64 = StandardNormal.sample(rng);
            let dim: f64 = StandardNormal.sample(rng);
            let cand = *c + Complex64::new(dre, dim) * self.step;
            if cand.norm() < MAX_POLE_RADIUS && cand.im > 0.0 {
                *c = cand;
            }
        }
        for r in self.real.iter_mut() {
            let d: f64 = StandardNormal.sample(rng);
            let cand = *r + d * self.step;
            if cand.abs() < MAX_POLE_RADIUS {
                *r = cand;
            }
        }
    }

    /// All poles, conjugates included.
    pub fn poles(&self) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = self.complex.iter().flat_map(|c| [*c, c.conj()]).collect();
        v.extend(self.real.iter().map(|r| Complex64::new(*r, 0.0)));
        v
    }

    pub fn coefficients(&self) -> Vec<f64> {
        coefficients(&self.complex, &self.real)
    }
}

/// Three correlated noise channels: two AR processes sharing one random walk
/// of the poles, and the first principal component of those two.
pub fn generate_noise(model: &NoiseModel, n: usize, seed: u64) -> Result<[Vec<f64>; 3]> {
    if n == 0 {
        return Err(Error::invalid("noise length must be positive"));
    }
    let mut walk = PoleWalk::new(&model.base, model.walk_step)?;
    let mut rng = crate::rng::rng_from_seed(seed);
    let sd = model.base.variance.max(0.0).sqrt();
    let p = model.base.order();
    let mut coeffs = walk.coefficients();
    let mut ch = [vec![0.0; n], vec![0.0; n]];
    let every = model.update_every.max(1);
    for i in 0..n {
        if i > 0 && i % every == 0 && model.walk_step > 0.0 {
            walk.advance(&mut rng);
            coeffs = walk.coefficients();
        }
        for x in ch.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            let mut v = sd * e;
            for k in 1..=p.min(i) {
                v -= coeffs[k] * x[i - k];
            }
            x[i] = v;
        }
    }
    let [a, b] = ch;
    let c = first_principal_component(&a, &b);
    Ok([a, b, c])
}

/// Scores on the leading principal direction of two centred channels; the
/// loading with the larger magnitude is taken positive.
pub fn first_principal_component(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
        sab += (x - ma) * (y - mb);
    }
    let half = 0.5 * (saa - sbb);
    let lambda = 0.5 * (saa + sbb) + (half * half + sab * sab).sqrt();
    let (mut v0, mut v1) = if sab.abs() > 1e-300 {
        (sab, lambda - saa)
    } else if saa >= sbb {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = v0.hypot(v1);
    v0 /= norm;
    v1 /= norm;
    if v0.abs() >= v1.abs() && v0 < 0.0 || v1.abs() > v0.abs() && v1 < 0.0 {
        v0 = -v0;
        v1 = -v1;
    }
    a.iter().zip(b).map(|(x, y)| v0 * (x - ma) + v1 * (y - mb)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, SymmetricEigen};

    #[test]
    fn pole_coefficient_round_trip() {
        let m = NoiseModel::for_type(NoiseType::MA, 500.0).unwrap();
        let (c, r) = split_poles(&m.base.poles()).unwrap();
        let back = coefficients(&c, &r);
        for (x, y) in back.iter().zip(&m.base.coeffs) {
            assert!((x - y).abs() < 1e-6, "{back:?} vs {:?}", m.base.coeffs);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let m = NoiseModel::for_type(NoiseType::EM, 250.0).unwrap();
        assert_eq!(generate_noise(&m, 3000, 4).unwrap(), generate_noise(&m, 3000, 4).unwrap());
        assert_ne!(generate_noise(&m, 3000, 4).unwrap(), generate_noise(&m, 3000, 5).unwrap());
    }

    #[test]
    fn third_channel_is_first_principal_component() {
        let m = NoiseModel::for_type(NoiseType::MA, 250.0).unwrap();
        let [a, b, c] = generate_noise(&m, 5000, 9).unwrap();
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = Matrix2::zeros();
        for (x, y) in a.iter().zip(&b) {
            let v = nalgebra::Vector2::new(x - ma, y - mb);
            cov += v * v.transpose();
        }
        let eig = SymmetricEigen::new(cov);
        let k = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
        let mut v = eig.eigenvectors.column(k).into_owned();
        let big = if v[0].abs() >= v[1].abs() { v[0] } else { v[1] };
        if big < 0.0 {
            v = -v;
        }
        let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for i in 0..a.len() {
            let expected = v[0] * (a[i] - ma) + v[1] * (b[i] - mb);
            assert!((c[i] - expected).abs() < 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn stationary_generator_keeps_base_spectrum() {
        let fs = 500.0;
        for kind in NoiseType::ALL {
            let mut m = NoiseModel::for_type(kind, fs).unwrap();
            m.walk_step = 0.0;
            let [a, _, _] = generate_noise(&m, 200_000, 11).unwrap();
            let refit = ar_fit_burg(&a, NOISE_AR_ORDER).unwrap();
            // normalised spectra on a log-spaced grid inside the band carrying most power
            let grid: Vec<f64> = (0..40).map(|i| 0.5 * (200.0f64 / 0.5).powf(i as f64 / 39.0)).collect();
            let norm = |mdl: &ArModel| {
                let v: Vec<f64> = grid.iter().map(|&f| mdl.psd(f, fs)).collect();
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let (p, q) = (norm(&m.base), norm(&refit));
            let top = p.iter().copied().fold(0.0, f64::max);
            for (x, y) in p.iter().zip(&q) {
                if *x > 0.01 * top {
                    assert!((x / y).ln().abs() < 0.35, "{kind}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn walked_poles_stay_inside_unit_circle() {
        for kind in NoiseType::ALL {
            let m = NoiseModel::for_type(kind, 250.0).unwrap();
            let mut walk = PoleWalk::new(&m.base, 0.01).unwrap();
            let mut rng = crate::rng::rng_from_seed(3);
            for _ in 0..5000 {
                walk.advance(&mut rng);
                let p = walk.poles();
                assert_eq!(p.len(), NOISE_AR_ORDER);
                assert!(p.iter().all(|z| z.norm() < 1.0));
            }
        }
        let mut m = NoiseModel::for_type(NoiseType::BW, 250.0).unwrap();
        m.walk_step = 0.01;
        m.update_every = 1;
        let [a, b, _] = generate_noise(&m, 20_000, 3).unwrap();
        assert!(a.iter().chain(&b).all(|v| v.is_finite()));
    }
}
