use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ecg_model::{CycleModel, GaussianKernel};
use crate::Result;

/// Beat morphology class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeatType {
    Normal,
    Ectopic,
}

/// Two-state chain: `rn` = P(normal | normal), `re` = P(ectopic | ectopic).
/// The first beat is normal.
pub fn markov_beats<R: Rng>(n_beats: usize, rn: f64, re: f64, rng: &mut R) -> Vec<BeatType> {
    let mut out = Vec::with_capacity(n_beats);
    let mut state = BeatType::Normal;
    for k in 0..n_beats {
        if k > 0 {
            let u: f64 = rng.random();
            state = match state {
                BeatType::Normal if u < rn => BeatType::Normal,
                BeatType::Normal => BeatType::Ectopic,
                BeatType::Ectopic if u < re => BeatType::Ectopic,
                BeatType::Ectopic => BeatType::Normal,
            };
        }
        out.push(state);
    }
    out
}

/// Long-run fraction of ectopic beats, `(1−rn)/((1−rn)+(1−re))`.
pub fn stationary_ectopic_fraction(rn: f64, re: f64) -> f64 {
    (1.0 - rn) / ((1.0 - rn) + (1.0 - re))
}

/// Labels with `rn = 0.7 + 0.1·U` and `re = 0.2 + 0.1·U`.
pub fn ectopic_sequence(n_beats: usize, seed: u64) -> Vec<BeatType> {
    let mut rng = crate::rng::rng_from_seed(seed);
    let rn = 0.7 + 0.1 * rng.random::<f64>();
    let re = 0.2 + 0.1 * rng.random::<f64>();
    markov_beats(n_beats, rn, re, &mut rng)
}

/// Ventricular-ectopic morphology derived from a seven-kernel normal beat:
/// no P wave, QRS three times wider and a taller R, inverted T wave.
/// Models with another kernel count get the QRS widening on their largest kernel only.
pub fn ectopic_models(normal: &[CycleModel; 3]) -> Result<[CycleModel; 3]> {
    let convert = |m: &CycleModel| -> Result<CycleModel> {
        let k = m.kernels();
        let kernels: Vec<GaussianKernel> = if k.len() == 7 {
            k.iter()
                .enumerate()
                .map(|(i, g)| match i {
                    0 | 1 => GaussianKernel { alpha: 0.0, ..*g },
                    2 | 4 => GaussianKernel { b: g.b * 3.0, ..*g },
                    3 => GaussianKernel { alpha: g.alpha * 1.3, b: g.b * 3.0, ..*g },
                    _ => GaussianKernel { alpha: -g.alpha, ..*g },
                })
                .collect()
        } else {
            let big = (0..k.len()).max_by(|&a, &b| k[a].alpha.abs().total_cmp(&k[b].alpha.abs())).unwrap_or(0);
            k.iter()
                .enumerate()
                .map(|(i, g)| if i == big { GaussianKernel { b: g.b * 3.0, ..*g } } else { *g })
                .collect()
        };
        CycleModel::new(kernels, m.omega)
    };
    Ok([convert(&normal[0])?, convert(&normal[1])?, convert(&normal[2])?])
}

/// Shortens the interval leading into each ectopic beat by 20% and lengthens
/// the following one by 20%. `rr[k]` is the interval starting at beat `k`.
pub fn apply_ectopic_timing(rr: &mut [f64], labels: &[BeatType]) {
    for k in 1..rr.len().min(labels.len()) {
        if labels[k] == BeatType::Ectopic {
            rr[k - 1] *= 0.8;
            rr[k] *= 1.2;
        }
    }
}
