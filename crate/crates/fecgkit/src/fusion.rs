//! Probabilistic label aggregation: EM fusion of continuous annotations with
//! per-annotator precision and a linear regression prior on the true label.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-8;
/// Residual variance floor (ms²), keeping precisions finite on exact fits.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Complete annotation design: `y[i][j]` is annotator `j` on record `i`, `x[i]` the features of record `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTable {
    y: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
}

impl AnnotationTable {
    pub fn new(y: Vec<Vec<f64>>, x: Vec<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        if n == 0 || y[0].is_empty() {
            return Err(Error::invalid("annotation table needs at least one record and one annotator"));
        }
        if x.len() != n {
            return Err(Error::invalid(format!("{n} annotation rows but {} feature rows", x.len())));
        }
        let r = y[0].len();
        if y.iter().any(|row| row.len() != r) {
            return Err(Error::invalid("annotation rows differ in length"));
        }
        let d = x[0].len();
        if d == 0 || x.iter().any(|row| row.len() != d) {
            return Err(Error::invalid("feature rows must share a non-zero length"));
        }
        if y.iter().chain(x.iter()).flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite annotation or feature"));
        }
        Ok(Self { y, x })
    }

    /// Default design with features `[1, rr]` (RR in seconds).
    pub fn with_rr(y: Vec<Vec<f64>>, rr: &[f64]) -> Result<Self> {
        Self::new(y, rr.iter().map(|&r| vec![1.0, r]).collect())
    }

    /// Intercept-only design.
    pub fn intercept_only(y: Vec<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        Self::new(y, vec![vec![1.0]; n])
    }

    pub fn n_records(&self) -> usize {
        self.y.len()
    }

    pub fn n_annotators(&self) -> usize {
        self.y[0].len()
    }

    pub fn n_features(&self) -> usize {
        self.x[0].len()
    }

    pub fn annotations(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// Copy with annotator columns reordered: column `k` of the result is column `perm[k]`.
    pub fn permute_annotators(&self, perm: &[usize]) -> Result<Self> {
        let r = self.n_annotators();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("not a permutation of the annotators"));
        }
        let y = self.y.iter().map(|row| perm.iter().map(|&p| row[p]).collect()).collect();
        Ok(Self { y, x: self.x.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub z_hat: Vec<f64>,
    /// Annotator precisions (ms⁻²).
    pub lambda: Vec<f64>,
    pub w: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Negative log-likelihood after initialisation and after each iteration.
    pub nll: Vec<f64>,
}

/// Precision-weighted mean of each record's annotations.
pub fn weighted_labels(y: &[Vec<f64>], lambda: &[f64]) -> Vec<f64> {
    let total: f64 = lambda.iter().sum();
    y.iter().map(|row| row.iter().zip(lambda).map(|(v, l)| v * l).sum::<f64>() / total).collect()
}

/// Negative log-likelihood of `(w, lambda)` under the marginal annotation model.
pub fn negative_log_likelihood(table: &AnnotationTable, w: &[f64], lambda: &[f64]) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    table
        .y
        .iter()
        .zip(&table.x)
        .map(|(row, x)| {
            let pred: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            row.iter().zip(lambda).map(|(v, l)| (two_pi / l).ln() + (v - pred).powi(2) * l).sum::<f64>()
        })
        .sum::<f64>()
        / 2.0
}

struct Regression {
    x: DMatrix<f64>,
    gram: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Regression {
    fn new(table: &AnnotationTable) -> Result<Self> {
        let (n, d) = (table.n_records(), table.n_features());
        let x = DMatrix::from_fn(n, d, |i, k| table.x[i][k]);
        let xtx = x.transpose() * &x;
        let scale = xtx.diagonal().amax().max(f64::MIN_POSITIVE);
        let gram = xtx.cholesky().ok_or_else(|| Error::numerical("singular feature Gram matrix"))?;
        let pivots = gram.l_dirty().diagonal();
        if pivots.iter().any(|p| p * p <= 1e-12 * scale) {
            return Err(Error::numerical("singular feature Gram matrix"));
        }
        Ok(Self { x, gram })
    }

    fn fit(&self, z: &[f64]) -> DVector<f64> {
        self.gram.solve(&(self.x.transpose() * DVector::from_column_slice(z)))
    }
}

fn precisions(table: &AnnotationTable, pred: &DVector<f64>) -> Vec<f64> {
    let n = table.n_records() as f64;
    (0..table.n_annotators())
        .map(|j| {
            let ss: f64 = table.y.iter().zip(pred.iter()).map(|(row, p)| (row[j] - p).powi(2)).sum();
            1.0 / (ss / n).max(MIN_VARIANCE)
        })
        .collect()
}

/// EM fusion. Initial labels are the plain mean over annotators; each
/// iteration recomputes the labels from the precisions, then refits `w`, then
/// the precisions, stopping once every precision moves by less than `tol` relative.
pub fn pla_em(table: &AnnotationTable, max_iter: usize, tol: f64) -> Result<FusionResult> {
    if table.n_records() <= table.n_features() {
        return Err(Error::invalid("need more records than features"));
    }
    if max_iter == 0 || !(tol > 0.0) {
        return Err(Error::invalid("need max_iter >= 1 and tol > 0"));
    }
    let reg = Regression::new(table)?;
    let r = table.n_annotators();
    let mut z = weighted_labels(&table.y, &vec![1.0; r]);
    let mut w = reg.fit(&z);
    let mut lambda = precisions(table, &(&reg.x * &w));
    let mut nll = vec![negative_log_likelihood(table, w.as_slice(), &lambda)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        z = weighted_labels(&table.y, &lambda);
        w = reg.fit(&z);
        let next = precisions(table, &(&reg.x * &w));
        let change = next.iter().zip(&lambda).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
        lambda = next;
        nll.push(negative_log_likelihood(table, w.as_slice(), &lambda));
        if change < tol {
            converged = true;
            break;
        }
    }
    z = weighted_labels(&table.y, &lambda);
    if z.iter().chain(w.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numerical("EM produced non-finite estimates"));
    }
    Ok(FusionResult { z_hat: z, lambda, w: w.as_slice().to_vec(), iterations, converged, nll })
}
