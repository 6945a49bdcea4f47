//! Principal and independent component analysis of multichannel records.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::signal::SignalRecord;
use crate::{Error, Result};

pub const ICA_MAX_ITER: usize = 1000;
pub const ICA_TOL: f64 = 1e-9;
/// Whitening drops directions whose eigenvalue is below this fraction of the largest.
pub const RANK_TOL: f64 = 1e-12;

/// Principal components of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub sources: SignalRecord,
    /// Orthonormal directions as columns, by descending eigenvalue.
    pub basis: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub means: Vec<f64>,
}

impl PcaResult {
    /// `basis · sources + means`, i.e. the input reconstructed from every component.
    pub fn back_project(&self) -> Vec<Vec<f64>> {
        let s = to_matrix(self.sources.channels());
        let x = &self.basis * s;
        x.row_iter().zip(&self.means).map(|(r, m)| r.iter().map(|v| v + m).collect()).collect()
    }
}

/// Independent components of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaResult {
    /// Unit-variance sources.
    pub sources: SignalRecord,
    /// Maps centred channels to sources: `rotation · whitening`.
    pub unmixing: DMatrix<f64>,
    pub whitening: DMatrix<f64>,
    /// Orthonormal rotation found in the whitened space.
    pub rotation: DMatrix<f64>,
    pub means: Vec<f64>,
    /// Convergence flag of each component.
    pub converged: Vec<bool>,
    pub iterations: usize,
}

/// Per-channel ICA diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaReport {
    pub converged: Vec<bool>,
    pub iterations: usize,
}

fn to_matrix(channels: &[Vec<f64>]) -> DMatrix<f64> {
    let n = channels.first().map_or(0, Vec::len);
    DMatrix::from_fn(channels.len(), n, |i, j| channels[i][j])
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Centred data matrix (channels × samples) and channel means.
fn centred(record: &SignalRecord) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if record.n_channels() < 2 {
        return Err(Error::invalid("source separation needs at least two channels"));
    }
    if record.channels().iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("record contains non-finite samples"));
    }
    let mut x = to_matrix(record.channels());
    let means: Vec<f64> = x.row_iter().map(|r| r.mean()).collect();
    for (mut row, m) in x.row_iter_mut().zip(&means) {
        row.add_scalar_mut(-m);
    }
    Ok((x, means))
}

/// Sample covariance `X Xᵀ / N` of centred data.
pub fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x * x.transpose()) / x.ncols() as f64
}

/// Eigen-decomposition sorted by descending eigenvalue.
fn sorted_eigen(c: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(c.clone());
    let mut order: Vec<usize> = (0..c.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(c.nrows(), c.nrows(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

fn labelled(channels: Vec<Vec<f64>>, fs: u32, prefix: &str) -> Result<SignalRecord> {
    let labels = (1..=channels.len()).map(|k| format!("{prefix}{k}")).collect();
    SignalRecord::new(channels, fs, labels)
}

/// Projects centred channels onto the covariance eigenvectors.
pub fn pca_transform(record: &SignalRecord) -> Result<PcaResult> {
    let (x, means) = centred(record)?;
    let (eigenvalues, basis) = sorted_eigen(&covariance(&x));
    let sources = basis.transpose() * &x;
    Ok(PcaResult { sources: labelled(from_matrix(&sources), record.fs(), "pc")?, basis, eigenvalues, means })
}

/// Symmetric decorrelation `(W Wᵀ)^{-1/2} W`.
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sorted_eigen(&(w * w.transpose()));
    let inv_sqrt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt())));
    &vecs * inv_sqrt * vecs.transpose() * w
}

/// Fixed-point kurtosis ICA with symmetric orthogonalisation.
pub fn ica_transform(record: &SignalRecord, seed: u64) -> Result<IcaResult> {
    ica_transform_with(record, seed, ICA_MAX_ITER, ICA_TOL)
}

pub fn ica_transform_with(record: &SignalRecord, seed: u64, max_iter: usize, tol: f64) -> Result<IcaResult> {
    let (x, means) = centred(record)?;
    let n = x.ncols() as f64;
    let (vals, vecs) = sorted_eigen(&covariance(&x));
    let top = vals.first().copied().unwrap_or(0.0);
    let rank = vals.iter().take_while(|v| **v > RANK_TOL * top && **v > 0.0).count();
    if rank == 0 {
        return Err(Error::invalid("record has no variance"));
    }
    let whitening = DMatrix::from_fn(rank, x.nrows(), |i, j| vecs[(j, i)] / vals[i].sqrt());
    let z = &whitening * &x;

    let mut rng = stream(seed, "ica/init");
    let init = DMatrix::from_fn(rank, rank, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);
    let mut converged = vec![false; rank];
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let y = &w * &z;
        let y3 = y.map(|v| v * v * v);
        let mut next = (&y3 * z.transpose()) / n - &w * 3.0;
        next = symmetric_decorrelation(&next);
        for k in 0..rank {
            let dot = next.row(k).dot(&w.row(k)).abs();
            converged[k] = (1.0 - dot).abs() < tol;
        }
        w = next;
        if converged.iter().all(|c| *c) {
            break;
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("ICA iteration produced non-finite weights"));
    }
    let unmixing = &w * &whitening;
    let sources = &unmixing * &x;
    Ok(IcaResult {
        sources: labelled(from_matrix(&sources), record.fs(), "ic")?,
        unmixing,
        whitening,
        rotation: w,
        means,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats::{pearson, variance};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::Normal;

    fn record(ch: Vec<Vec<f64>>) -> SignalRecord {
        SignalRecord::from_channels(ch, 250).unwrap()
    }

    fn toy_sources(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        let sine = (0..n).map(|i| (i as f64 * 0.05).sin()).collect();
        let saw = (0..n).map(|i| ((i as f64 * 0.013) % 1.0) * 2.0 - 1.0).collect();
        let unif = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        vec![sine, saw, unif]
    }

    fn mix(a: &DMatrix<f64>, s: &[Vec<f64>]) -> Vec<Vec<f64>> {
        from_matrix(&(a * to_matrix(s)))
    }

    #[test]
    fn diagonal_covariance_gives_axis_basis() {
        let mut rng = rng_from_seed(1);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let scales = [1.0, 3.0, 2.0];
        // exactly uncorrelated channels: orthogonal rows built by Gram-Schmidt
        let mut rows: Vec<Vec<f64>> = (0..3).map(|_| (0..2000).map(|_| nd.sample(&mut rng)).collect()).collect();
        for i in 0..3 {
            let m = rows[i].iter().sum::<f64>() / 2000.0;
            rows[i].iter_mut().for_each(|v| *v -= m);
            for j in 0..i {
                let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum::<f64>()
                    / rows[j].iter().map(|b| b * b).sum::<f64>();
                let rj = rows[j].clone();
                rows[i].iter_mut().zip(&rj).for_each(|(a, b)| *a -= d * b);
            }
            let sd = variance(&rows[i]).sqrt();
            rows[i].iter_mut().for_each(|v| *v *= scales[i] / sd);
        }
        let p = pca_transform(&record(rows)).unwrap();
        let expected_axis = [1, 2, 0];
        for k in 0..3 {
            for r in 0..3 {
                let want = if r == expected_axis[k] { 1.0 } else { 0.0 };
                assert!((p.basis[(r, k)].abs() - want).abs() < 1e-9, "{}", p.basis);
            }
        }
        assert!((p.eigenvalues[0] - 9.0).abs() < 1e-9);
    }

    #[test]
    fn two_channel_eigenvalues_match_characteristic_roots() {
        let mut rng = rng_from_seed(2);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..5000).map(|_| nd.sample(&mut rng)).collect();
        let b: Vec<f64> = a.iter().map(|v| 0.6 * v + 0.8 * nd.sample(&mut rng)).collect();
        let rec = record(vec![a.clone(), b.clone()]);
        let p = pca_transform(&rec).unwrap();
        let (ma, mb) = (a.iter().sum::<f64>() / 5000.0, b.iter().sum::<f64>() / 5000.0);
        let cov = |x: &[f64], mx: f64, y: &[f64], my: f64| x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum::<f64>() / 5000.0;
        let (caa, cbb, cab) = (cov(&a, ma, &a, ma), cov(&b, mb, &b, mb), cov(&a, ma, &b, mb));
        let tr = caa + cbb;
        let det = caa * cbb - cab * cab;
        let disc = (tr * tr / 4.0 - det).sqrt();
        assert!((p.eigenvalues[0] - (tr / 2.0 + disc)).abs() < 1e-9);
        assert!((p.eigenvalues[1] - (tr / 2.0 - disc)).abs() < 1e-9);
    }

    #[test]
    fn rank_deficient_input_gives_zero_eigenvalue() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 * 0.1).sin()).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let p = pca_transform(&record(vec![a.clone(), b.clone()])).unwrap();
        assert!(p.eigenvalues[1].abs() < 1e-12);
        let ica = ica_transform(&record(vec![a, b]), 0).unwrap();
        assert_eq!(ica.sources.n_channels(), 1);
    }

    #[test]
    fn ica_recovers_toy_sources() {
        let s = toy_sources(10_000, 3);
        let a = DMatrix::from_row_slice(3, 3, &[0.9, 0.4, 0.3, -0.5, 0.8, 0.2, 0.3, -0.6, 1.0]);
        let ica = ica_transform(&record(mix(&a, &s)), 11).unwrap();
        assert!(ica.converged.iter().all(|c| *c));
        let mut used = [false; 3];
        for est in ica.sources.channels() {
            let (best, corr) = (0..3)
                .map(|j| (j, pearson(est, &s[j]).abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(corr > 0.95, "{corr}");
            assert!(!used[best]);
            used[best] = true;
        }
    }

    #[test]
    fn ica_on_separated_sources_is_a_signed_permutation() {
        let s = toy_sources(10_000, 4);
        let ica = ica_transform(&record(s.clone()), 2).unwrap();
        for est in ica.sources.channels() {
            let best = (0..3).map(|j| pearson(est, &s[j]).abs()).fold(0.0, f64::max);
            assert!(best > 0.99, "{best}");
        }
    }

    #[test]
    fn too_few_channels_rejected() {
        let r = record(vec![vec![1.0, 2.0, 3.0]]);
        assert!(pca_transform(&r).is_err());
        assert!(ica_transform(&r, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn pca_invariants(seed in 0u64..1000, c in 2usize..5) {
            let mut rng = rng_from_seed(seed);
            let ch: Vec<Vec<f64>> = (0..c).map(|k| (0..400).map(|i| rng.random_range(-1.0..1.0) + k as f64 * (i as f64 * 0.01).sin()).collect()).collect();
            let rec = record(ch.clone());
            let p = pca_transform(&rec).unwrap();
            let (x, _) = centred(&rec).unwrap();
            let trace = covariance(&x).trace();
            prop_assert!((p.eigenvalues.iter().sum::<f64>() - trace).abs() < 1e-9);
            let gram = p.basis.transpose() * &p.basis;
            prop_assert!((gram - DMatrix::identity(c, c)).amax() < 1e-9);
            let back = p.back_project();
            for (a, b) in back.iter().flatten().zip(ch.iter().flatten()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for w in p.eigenvalues.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn ica_whitening_and_rotation(seed in 0u64..1000) {
            let s = toy_sources(3000, seed);
            let mut rng = rng_from_seed(seed + 1);
            let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(3, 3) * 2.0;
            let rec = record(mix(&a, &s));
            let ica = ica_transform(&rec, seed).unwrap();
            let (x, _) = centred(&rec).unwrap();
            let z = &ica.whitening * &x;
            prop_assert!((covariance(&z) - DMatrix::identity(3, 3)).amax() < 1e-6);
            let r = &ica.rotation;
            prop_assert!((r * r.transpose() - DMatrix::identity(3, 3)).amax() < 1e-6);
            let sc = covariance(&to_matrix(ica.sources.channels()));
            prop_assert!((sc - DMatrix::identity(3, 3)).amax() < 1e-6);
        }
    }
}
