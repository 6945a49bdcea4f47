use std::f64::consts::PI;

use crate::ecg_model::CycleModel;
use crate::{Error, Result};

/// Seconds dropped at each end before measuring output SNR.
pub const SNR_EXCLUSION_S: f64 = 5.0;
pub const QT_ONSET_WIDTHS: f64 = 2.5;
pub const QT_OFFSET_WIDTHS: f64 = 2.0;

/// `20·log10(√(Σr² / Σ(f − r)²))` over the record minus its first and last five seconds.
///
/// Returns `+∞` when the error energy is zero.
pub fn snr_db(reference: &[f64], extracted: &[f64], fs: f64) -> Result<f64> {
    if reference.len() != extracted.len() {
        return Err(Error::invalid("reference and estimate lengths differ"));
    }
    let skip = (SNR_EXCLUSION_S * fs).round() as usize;
    if reference.len() <= 2 * skip {
        return Err(Error::invalid("record must be longer than ten seconds"));
    }
    let range = skip..reference.len() - skip;
    let signal: f64 = reference[range.clone()].iter().map(|r| r * r).sum();
    let error: f64 = range.map(|i| (extracted[i] - reference[i]).powi(2)).sum();
    if !(signal > 0.0) {
        return Err(Error::invalid("reference has zero energy"));
    }
    if error == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (signal / error).sqrt().log10())
}

/// QT interval (ms) from a seven-kernel model ordered P1, P2, Q, R, S, T1, T2.
///
/// Onset is `ξ_Q − c_on·b_Q`, offset `ξ_T2 + c_off·b_T2`, converted with the RR interval `rr` (s).
pub fn qt_from_kernels(model: &CycleModel, rr: f64, c_on: f64, c_off: f64) -> Result<f64> {
    let k = model.kernels();
    if k.len() != 7 {
        return Err(Error::invalid("QT needs a seven-kernel model"));
    }
    if k.windows(2).any(|w| w[1].xi < w[0].xi) {
        return Err(Error::invalid("kernels are not ordered by centre"));
    }
    if !(rr > 0.0) {
        return Err(Error::invalid("RR interval must be positive"));
    }
    let onset = k[2].xi - c_on * k[2].b;
    let offset = k[6].xi + c_off * k[6].b;
    Ok((offset - onset) / (2.0 * PI) * rr * 1000.0)
}
