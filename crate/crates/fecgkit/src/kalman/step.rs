use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// State mean and error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl StateEstimate {
    pub fn new(x: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != x.len() || p.ncols() != x.len() {
            return Err(Error::invalid("covariance shape does not match the state"));
        }
        if x.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("state estimate must be finite"));
        }
        Ok(Self { x, p })
    }

    /// Largest absolute entry of `P − Pᵀ`.
    pub fn asymmetry(&self) -> f64 {
        (&self.p - self.p.transpose()).amax()
    }

    /// Smallest eigenvalue of the symmetric part of `P`.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.p + self.p.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }
}

/// Discrete-time state-space model linearised around the current estimate.
///
/// `x⁺ = g(x, ŵ)` with noise `w ~ (ŵ, Q)` and `y = h(x) + v` with `v ~ (0, R)`.
pub trait StateSpace {
    fn transition(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Jacobians `G = ∂g/∂x` and `L = ∂g/∂w` at `(x, ŵ)`.
    fn transition_jacobians(&self, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>);
    fn observation(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `H = ∂h/∂x`.
    fn observation_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// `Q`, in noise coordinates.
    fn process_noise(&self) -> &DMatrix<f64>;
    fn observation_noise(&self) -> &DMatrix<f64>;
    fn innovation(&self, y: &DVector<f64>, predicted: &DVector<f64>) -> DVector<f64> {
        y - predicted
    }
}

/// Posterior plus the innovation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub estimate: StateEstimate,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

fn correct(
    x: DVector<f64>,
    p: DMatrix<f64>,
    nu: DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<StepOutput> {
    let ht = h.transpose();
    let pht = &p * &ht;
    let s = h * &pht + r;
    let s_inv = s
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::numerical("singular innovation covariance"))?;
    let k = &pht * &s_inv;
    let x_post = x + &k * &nu;
    let ikh = DMatrix::identity(p.nrows(), p.ncols()) - &k * h;
    // Joseph form
    let p_post = &ikh * &p * ikh.transpose() + &k * r * k.transpose();
    if x_post.iter().chain(p_post.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numerical("Kalman update produced non-finite values"));
    }
    Ok(StepOutput { estimate: StateEstimate { x: x_post, p: p_post }, innovation: nu, innovation_cov: s })
}

/// One extended Kalman predict/correct cycle with observation `y`.
pub fn ekf_step<M: StateSpace + ?Sized>(model: &M, est: &StateEstimate, y: &DVector<f64>) -> Result<StepOutput> {
    let (g, l) = model.transition_jacobians(&est.x);
    let x_prior = model.transition(&est.x);
    let p_prior = &g * &est.p * g.transpose() + &l * model.process_noise() * l.transpose();
    let y_pred = model.observation(&x_prior);
    let h = model.observation_jacobian(&x_prior);
    let nu = model.innovation(y, &y_pred);
    correct(x_prior, p_prior, nu, &h, model.observation_noise())
}

/// Linear Gaussian model `x⁺ = G x + w`, `y = H x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl StateSpace for LinearModel {
    fn transition(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.g * x
    }

    fn transition_jacobians(&self, _x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.g.clone(), DMatrix::identity(self.g.nrows(), self.g.nrows()))
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

/// Linear Kalman predict/correct with Joseph-form covariance update.
pub fn kf_step(
    g: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    est: &StateEstimate,
    y: &DVector<f64>,
) -> Result<StateEstimate> {
    let n = est.x.len();
    if g.shape() != (n, n) || q.shape() != (n, n) || h.ncols() != n || r.shape() != (h.nrows(), h.nrows()) {
        return Err(Error::invalid("matrix dimensions are not conformable"));
    }
    if y.len() != h.nrows() {
        return Err(Error::invalid("observation length does not match H"));
    }
    let x_prior = g * &est.x;
    let p_prior = g * &est.p * g.transpose() + q;
    let nu = y - h * &x_prior;
    Ok(correct(x_prior, p_prior, nu, h, r)?.estimate)
}

/// Five-point central differences of `f` with respect to each coordinate of `x`.
pub fn numerical_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, x.len());
    for c in 0..x.len() {
        let at = |d: f64| {
            let mut y = x.clone();
            y[c] += d;
            f(&y)
        };
        let col = (at(-2.0 * h) - at(2.0 * h) + (at(h) - at(-h)) * 8.0) / (12.0 * h);
        j.set_column(c, &col);
    }
    j
}
