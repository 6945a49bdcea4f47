use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::stats::wrap_angle;
use crate::{Error, Result};

/// One Gaussian kernel `α·exp(−Δθ²/2b²)` centred at `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    /// Peak amplitude (mV).
    pub alpha: f64,
    /// Width (rad).
    pub b: f64,
    /// Centre (rad).
    pub xi: f64,
}

impl GaussianKernel {
    pub fn new(alpha: f64, b: f64, xi: f64) -> Self {
        Self { alpha, b, xi: wrap_angle(xi) }
    }

    /// Kernel value at phase `theta`, with the phase difference wrapped.
    pub fn value(&self, theta: f64) -> f64 {
        let d = wrap_angle(theta - self.xi);
        self.alpha * (-d * d / (2.0 * self.b * self.b)).exp()
    }
}

/// Ordered set of Gaussian kernels describing one ECG cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleModel {
    kernels: Vec<GaussianKernel>,
    /// Angular velocity (rad/s), when known.
    pub omega: Option<f64>,
}

impl CycleModel {
    /// Validates kernel count, widths, finite values and centre ordering.
    pub fn new(kernels: Vec<GaussianKernel>, omega: Option<f64>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::invalid("cycle model needs at least one kernel"));
        }
        for k in &kernels {
            if !(k.b > 0.0 && k.b.is_finite() && k.alpha.is_finite() && k.xi.is_finite()) {
                return Err(Error::invalid("kernel widths must be positive and values finite"));
            }
        }
        let kernels: Vec<GaussianKernel> = kernels
            .into_iter()
            .map(|k| GaussianKernel::new(k.alpha, k.b, k.xi))
            .collect();
        if !centres_ordered(&kernels) {
            return Err(Error::invalid("kernel centres must be nondecreasing after unwrapping"));
        }
        Ok(Self { kernels, omega })
    }

    /// Builds a model after sorting the kernels by centre.
    pub fn from_unsorted(mut kernels: Vec<GaussianKernel>, omega: Option<f64>) -> Result<Self> {
        kernels.iter_mut().for_each(|k| k.xi = wrap_angle(k.xi));
        kernels.sort_by(|a, b| a.xi.total_cmp(&b.xi));
        Self::new(kernels, omega)
    }

    /// The seven-kernel reference cycle with the published amplitudes,
    /// centres and widths, sorted by centre.
    pub fn reference_cycle() -> Self {
        let alpha = [0.27, 0.04, -0.13, -0.13, 0.71, 0.37, 0.06];
        let xi = [1.96, 2.16, 1.97, 0.04, 0.02, -0.05, -0.94];
        let b = [0.37, 0.12, 0.59, 0.38, 0.06, 0.06, 0.13];
        let kernels = (0..7).map(|i| GaussianKernel::new(alpha[i], b[i], xi[i])).collect();
        Self::from_unsorted(kernels, None).expect("reference cycle is valid")
    }

    pub fn kernels(&self) -> &[GaussianKernel] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Gaussian sum at phase `theta`.
    pub fn value(&self, theta: f64) -> f64 {
        self.kernels.iter().map(|k| k.value(theta)).sum()
    }

    /// Derivative dz/dθ of the Gaussian sum.
    pub fn dtheta(&self, theta: f64) -> f64 {
        self.kernels
            .iter()
            .map(|k| {
                let d = wrap_angle(theta - k.xi);
                -k.alpha * d / (k.b * k.b) * (-d * d / (2.0 * k.b * k.b)).exp()
            })
            .sum()
    }

    /// Copy with every amplitude multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let kernels = self
            .kernels
            .iter()
            .map(|k| GaussianKernel { alpha: k.alpha * s, ..*k })
            .collect();
        Self { kernels, omega: self.omega }
    }

    /// Largest absolute value over a fine phase grid.
    pub fn peak_amplitude(&self) -> f64 {
        (0..1000)
            .map(|i| self.value(-PI + 2.0 * PI * i as f64 / 1000.0).abs())
            .fold(0.0, f64::max)
    }
}

fn centres_ordered(kernels: &[GaussianKernel]) -> bool {
    let mut offset = 0.0;
    let mut wraps = 0;
    let first = kernels[0].xi;
    let mut prev = first;
    for k in &kernels[1..] {
        let mut x = k.xi + offset;
        if x < prev {
            wraps += 1;
            offset += 2.0 * PI;
            x += 2.0 * PI;
        }
        if wraps > 1 {
            return false;
        }
        prev = x;
    }
    prev - first <= 2.0 * PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_cycle_sorted_and_complete() {
        let m = CycleModel::reference_cycle();
        assert_eq!(m.len(), 7);
        assert!(m.kernels().windows(2).all(|w| w[0].xi <= w[1].xi));
        let r = m.kernels().iter().find(|k| k.alpha == 0.71).unwrap();
        assert_eq!(r.xi, 0.02);
    }

    #[test]
    fn value_at_r_centre_matches_direct_sum() {
        let m = CycleModel::reference_cycle();
        let alpha = [0.27, 0.04, -0.13, -0.13, 0.71, 0.37, 0.06];
        let xi = [1.96, 2.16, 1.97, 0.04, 0.02, -0.05, -0.94];
        let b = [0.37, 0.12, 0.59, 0.38, 0.06, 0.06, 0.13];
        let theta: f64 = 0.02;
        let direct: f64 = (0..7)
            .map(|i| {
                let d: f64 = theta - xi[i];
                alpha[i] * (-d * d / (2.0 * b[i] * b[i])).exp()
            })
            .sum();
        assert!((m.value(theta) - direct).abs() < 1e-12);
        assert!(direct > 0.71);
    }

    #[test]
    fn ordering_rules() {
        let k = |xi| GaussianKernel::new(1.0, 0.1, xi);
        assert!(CycleModel::new(vec![k(0.5), k(0.1), k(0.3), k(0.2)], None).is_err());
        assert!(CycleModel::new(vec![k(0.5), k(0.1)], None).is_ok());
        assert!(CycleModel::new(vec![k(2.9), k(-3.0), k(-2.5)], None).is_ok());
        assert!(CycleModel::new(vec![], None).is_err());
        assert!(CycleModel::new(vec![GaussianKernel::new(1.0, 0.0, 0.0)], None).is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let m = CycleModel::reference_cycle();
        for i in 0..50 {
            let th = -3.0 + 0.12 * i as f64;
            let h = 1e-6;
            let fd = (m.value(th + h) - m.value(th - h)) / (2.0 * h);
            assert!((fd - m.dtheta(th)).abs() < 1e-6);
        }
    }
}
