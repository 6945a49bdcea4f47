//! Uniform random search over declared parameter ranges.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::{Error, Result};

/// Sampling law of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamRange {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    /// Integers in `lo..=hi`.
    Integer { lo: i64, hi: i64 },
}

impl ParamRange {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ParamRange::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            ParamRange::LogUniform { lo, hi } => lo > 0.0 && hi.is_finite() && lo < hi,
            ParamRange::Integer { lo, hi } => lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid parameter range {self:?}")))
        }
    }

    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ParamRange::Uniform { lo, hi } => rng.random_range(lo..hi),
            ParamRange::LogUniform { lo, hi } => rng.random_range(lo.ln()..hi.ln()).exp(),
            ParamRange::Integer { lo, hi } => rng.random_range(lo..=hi) as f64,
        }
    }
}

/// Named parameter ranges.
pub type SearchSpace = BTreeMap<String, ParamRange>;
pub type ParamSet = BTreeMap<String, f64>;

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrial {
    pub params: ParamSet,
    /// `None` when the objective failed.
    pub score: Option<f64>,
    pub error: Option<String>,
    /// Best score seen up to and including this trial.
    pub best_so_far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: ParamSet,
    pub best_score: f64,
    pub trace: Vec<SearchTrial>,
}

/// Draws `n_iter` independent samples and keeps the first one reaching the
/// highest score; failed evaluations are recorded and skipped.
pub fn random_search<F>(space: &SearchSpace, mut objective: F, n_iter: usize, seed: u64) -> Result<SearchResult>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    if space.is_empty() || n_iter == 0 {
        return Err(Error::invalid("random search needs a non-empty space and at least one iteration"));
    }
    space.values().try_for_each(ParamRange::validate)?;
    let mut best: Option<(ParamSet, f64)> = None;
    let mut trace = Vec::with_capacity(n_iter);
    for i in 0..n_iter {
        let mut rng = stream(seed, &format!("search/{i}"));
        let params: ParamSet = space.iter().map(|(k, r)| (k.clone(), r.sample(&mut rng))).collect();
        let (score, error) = match objective(&params) {
            Ok(s) if s.is_finite() => (Some(s), None),
            Ok(s) => (None, Some(format!("non-finite score {s}"))),
            Err(e) => (None, Some(e.to_string())),
        };
        if let Some(s) = score {
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((params.clone(), s));
            }
        }
        trace.push(SearchTrial { params, score, error, best_so_far: best.as_ref().map(|b| b.1) });
    }
    let (best, best_score) = best.ok_or_else(|| Error::numerical("every objective evaluation failed"))?;
    Ok(SearchResult { best, best_score, trace })
}
