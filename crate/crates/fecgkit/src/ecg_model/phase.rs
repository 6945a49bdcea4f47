use std::f64::consts::PI;

use crate::signal::BeatAnnotations;
use crate::stats::wrap_angle;
use crate::{Error, Result};

/// Sawtooth phase, zero at every anchor and linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    pub phase: Vec<f64>,
    pub anchors: BeatAnnotations,
}

impl PhaseSeries {
    /// Angular frequency (rad/sample) of the RR interval containing each sample.
    pub fn omega_per_sample(&self) -> Vec<f64> {
        let a = self.anchors.indices();
        let n = self.phase.len();
        let mut out = vec![0.0; n];
        let mut k = 0;
        for (i, o) in out.iter_mut().enumerate() {
            while k + 2 < a.len() && i >= a[k + 1] {
                k += 1;
            }
            *o = 2.0 * PI / (a[k + 1] - a[k]) as f64;
        }
        out
    }
}

/// Linear phase between successive anchors, wrapped to `[−π, π)`; samples
/// outside the annotated span are extrapolated with the adjacent RR interval.
pub fn assign_phase(anns: &BeatAnnotations, n_samples: usize) -> Result<PhaseSeries> {
    let a = anns.indices();
    if a.len() < 2 {
        return Err(Error::invalid("phase assignment needs at least two annotations"));
    }
    let mut phase = vec![0.0; n_samples];
    let mut k = 0;
    for (i, p) in phase.iter_mut().enumerate() {
        while k + 2 < a.len() && i >= a[k + 1] {
            k += 1;
        }
        // interval [a[k], a[k+1]] is used for everything up to a[k+1],
        // except samples before a[0] which borrow the first interval
        let rr = (a[k + 1] - a[k]) as f64;
        let rel = i as f64 - a[k] as f64;
        let base = if i >= a[k + 1] { i as f64 - a[k + 1] as f64 } else { rel };
        *p = wrap_angle(2.0 * PI * base / rr);
    }
    Ok(PhaseSeries { phase, anchors: anns.clone() })
}
