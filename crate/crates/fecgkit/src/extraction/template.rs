//! Maternal template subtraction in the observation domain.

use std::collections::VecDeque;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::signal::BeatAnnotations;
use crate::stats::pearson;
use crate::{Error, Result};

/// Window extent before and after each maternal R-peak (s).
pub const TS_PRE_S: f64 = 0.25;
pub const TS_POST_S: f64 = 0.45;
/// Durations of the P, QRS and T segments of the window (s).
pub const P_WAVE_S: f64 = 0.20;
pub const QRS_S: f64 = 0.10;
pub const T_WAVE_S: f64 = 0.40;
pub const DEFAULT_NB_CYCLES: usize = 20;
pub const TSLP_NB_CYCLES: usize = 9;
pub const DEFAULT_NB_PC: usize = 2;
/// Incoming cycles update the template only when their correlation exceeds this.
pub const TEMPLATE_GATE: f64 = 0.8;

/// Template subtraction flavours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TsVariant {
    /// Plain average template.
    Ts,
    /// Template scaled by one least-squares constant.
    Tsc,
    /// P, QRS and T segments scaled independently.
    Tsm,
    /// Least-squares combination of previous cycles fitted outside the QRS.
    Tslp,
    /// Removal of the leading principal components of the cycle stack.
    Tspca,
}

impl TsVariant {
    /// Default number of cycles in the template buffer.
    pub fn default_cycles(self) -> usize {
        match self {
            TsVariant::Tslp => TSLP_NB_CYCLES,
            _ => DEFAULT_NB_CYCLES,
        }
    }
}

/// Sample layout of one cycle window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleWindow {
    /// Samples before the R-peak.
    pub pre: usize,
    pub len: usize,
    /// P, QRS and T index ranges within the window.
    pub segments: [Range<usize>; 3],
}

impl CycleWindow {
    pub fn new(fs: f64) -> Result<Self> {
        let s = |t: f64| (t * fs).round() as usize;
        let pre = s(TS_PRE_S);
        let p_end = s(P_WAVE_S);
        let qrs_end = s(P_WAVE_S + QRS_S);
        let len = s(P_WAVE_S + QRS_S + T_WAVE_S);
        if p_end == 0 || qrs_end <= p_end || len <= qrs_end {
            return Err(Error::invalid("sampling rate too low for the cycle window"));
        }
        Ok(Self { pre, len, segments: [0..p_end, p_end..qrs_end, qrs_end..len] })
    }

    /// Window samples, with out-of-range indices clamped to the signal edges.
    pub fn extract(&self, x: &[f64], r: usize) -> Vec<f64> {
        let last = x.len() as isize - 1;
        (0..self.len)
            .map(|j| x[(r as isize - self.pre as isize + j as isize).clamp(0, last) as usize])
            .collect()
    }
}

/// Output of a template subtraction run.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSubtraction {
    pub residual: Vec<f64>,
    /// Maternal estimate that was subtracted.
    pub estimate: Vec<f64>,
    /// Cycles admitted to the template after the initial buffer.
    pub accepted: usize,
    pub rejected: usize,
}

/// Least-squares scaling of each template segment onto the cycle,
/// `a = (TᵀT)⁻¹Tᵀm` for the block-diagonal segment matrix `T`.
pub fn wave_scaling(template: &[f64], cycle: &[f64], segments: &[Range<usize>; 3]) -> [f64; 3] {
    let mut a = [0.0; 3];
    for (k, seg) in segments.iter().enumerate() {
        let (tm, tt) = seg.clone().fold((0.0, 0.0), |(tm, tt), i| (tm + template[i] * cycle[i], tt + template[i] * template[i]));
        a[k] = if tt > 0.0 { tm / tt } else { 0.0 };
    }
    a
}

/// Non-overlapping subtraction range of each beat: the window, cut where it
/// would reach into the neighbouring beat's window.
fn subtraction_ranges(beats: &[usize], win: &CycleWindow, n: usize) -> Vec<Range<usize>> {
    let post = win.len - win.pre;
    let split = |a: usize, b: usize| a + ((b - a) as f64 * post as f64 / win.len as f64).round() as usize;
    (0..beats.len())
        .map(|k| {
            let r = beats[k];
            let mut lo = r.saturating_sub(win.pre);
            let mut hi = (r + post).min(n);
            if k > 0 {
                lo = lo.max(split(beats[k - 1], r));
            }
            if k + 1 < beats.len() {
                hi = hi.min(split(r, beats[k + 1]));
            }
            lo..hi.max(lo)
        })
        .collect()
}

fn mean_cycle<'a>(cycles: impl Iterator<Item = &'a Vec<f64>>, len: usize) -> Vec<f64> {
    let mut t = vec![0.0; len];
    let mut count = 0usize;
    for c in cycles {
        t.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        count += 1;
    }
    t.iter_mut().for_each(|v| *v /= count.max(1) as f64);
    t
}

/// Least-squares combination of `basis` cycles matching `cycle` on `rows`.
fn lp_estimate(basis: &[&Vec<f64>], cycle: &[f64], rows: &[usize]) -> Option<Vec<f64>> {
    let k = basis.len();
    if k == 0 || rows.len() < k {
        return None;
    }
    let a = DMatrix::from_fn(rows.len(), k, |i, j| basis[j][rows[i]]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| cycle[i]));
    let mut g = a.transpose() * &a;
    let ridge = 1e-10 * g.trace().max(f64::MIN_POSITIVE);
    for i in 0..k {
        g[(i, i)] += ridge;
    }
    let w = g.cholesky()?.solve(&(a.transpose() * y));
    let len = cycle.len();
    Some((0..len).map(|i| (0..k).map(|j| w[j] * basis[j][i]).sum()).collect())
}

/// Part of the first stack row explained by the `nb_pc` leading directions
/// of the stack, `Σ w_j w_jᵀ M` restricted to row 0.
fn pca_estimate(stack: &[&Vec<f64>], nb_pc: usize) -> Vec<f64> {
    let p = stack.len();
    let len = stack[0].len();
    let m = DMatrix::from_fn(p, len, |i, j| stack[i][j]);
    let eig = SymmetricEigen::new(&m * m.transpose());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut est = DVector::zeros(len);
    for &j in order.iter().take(nb_pc) {
        let w = eig.eigenvectors.column(j);
        let proj = m.transpose() * w;
        est += proj * w[0];
    }
    est.iter().copied().collect()
}

/// Subtracts a per-cycle maternal estimate around each maternal R-peak.
///
/// The template buffer starts with the first `nb_c` cycles and is then
/// updated online with every cycle whose correlation to the current template
/// exceeds [`TEMPLATE_GATE`], dropping the oldest.
pub fn template_subtract(
    channel: &[f64],
    mqrs: &BeatAnnotations,
    variant: TsVariant,
    nb_c: usize,
    nb_pc: usize,
) -> Result<TemplateSubtraction> {
    let n = channel.len();
    mqrs.check_bounds(n)?;
    if channel.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("channel contains non-finite samples"));
    }
    if nb_c == 0 || mqrs.len() < nb_c {
        return Err(Error::invalid(format!("need at least {nb_c} maternal cycles, got {}", mqrs.len())));
    }
    if variant == TsVariant::Tspca && !(1..=nb_c).contains(&nb_pc) {
        return Err(Error::invalid("number of principal components must be in 1..=nb_c"));
    }
    let win = CycleWindow::new(mqrs.fs_f64())?;
    let beats = mqrs.indices();
    let ranges = subtraction_ranges(beats, &win, n);
    let cycles: Vec<Vec<f64>> = beats.iter().map(|&r| win.extract(channel, r)).collect();
    let pt_rows: Vec<usize> = win.segments[0].clone().chain(win.segments[2].clone()).collect();

    // cycles whose window lies inside the signal; edge cycles enter only if too few
    let post = win.len - win.pre;
    let complete: Vec<bool> = beats.iter().map(|&r| r >= win.pre && r + post <= n).collect();
    let mut buffer: VecDeque<usize> = (0..beats.len()).filter(|&k| complete[k]).take(nb_c).collect();
    if buffer.len() < nb_c {
        buffer = (0..nb_c).collect();
    }
    let seeded = buffer.back().copied().unwrap_or(0);
    let mut estimate = vec![0.0; n];
    let (mut accepted, mut rejected) = (0, 0);
    for (k, cycle) in cycles.iter().enumerate() {
        let template = mean_cycle(buffer.iter().map(|&i| &cycles[i]), win.len);
        let others: Vec<&Vec<f64>> = buffer.iter().filter(|&&i| i != k).map(|&i| &cycles[i]).collect();
        let est: Vec<f64> = match variant {
            TsVariant::Ts => template.clone(),
            TsVariant::Tsc => {
                let full = [0..win.len, 0..0, 0..0];
                let a = wave_scaling(&template, cycle, &full)[0];
                template.iter().map(|t| a * t).collect()
            }
            TsVariant::Tsm => {
                let a = wave_scaling(&template, cycle, &win.segments);
                let mut e = template.clone();
                for (seg, ak) in win.segments.iter().zip(a) {
                    e[seg.clone()].iter_mut().for_each(|v| *v *= ak);
                }
                e
            }
            TsVariant::Tslp => lp_estimate(&others, cycle, &pt_rows).unwrap_or_else(|| template.clone()),
            TsVariant::Tspca => {
                let mut stack = vec![cycle];
                stack.extend(others.iter().rev().take(nb_c - 1).rev());
                pca_estimate(&stack, nb_pc.min(stack.len()))
            }
        };
        let r0 = beats[k] as isize - win.pre as isize;
        for i in ranges[k].clone() {
            estimate[i] = est[(i as isize - r0) as usize];
        }
        if k > seeded && complete[k] {
            if pearson(&template, cycle) > TEMPLATE_GATE {
                buffer.push_back(k);
                buffer.pop_front();
                accepted += 1;
            } else {
                rejected += 1;
            }
        }
    }
    let residual = channel.iter().zip(&estimate).map(|(x, e)| x - e).collect();
    Ok(TemplateSubtraction { residual, estimate, accepted, rejected })
}
