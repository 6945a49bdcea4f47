use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ectopic::{apply_ectopic_timing, ectopic_models, ectopic_sequence, BeatType};
use super::geometry::{projection_row, rotation_matrix, Cylindrical, DipoleScene};
use super::hrv::{hr_series_with, mexican_hat, HrKind, HrParams};
use super::noise::{generate_noise, NoiseModel, NoiseType};
use super::respiration::{respiration_waveform, RespirationParams};
use super::vcg::{vcg_set, VCG_SET_COUNT};
use crate::ecg_model::render_beats;
use crate::rng::{derive_seed, stream};
use crate::signal::{butterworth, filtfilt, write_annotations, write_signal_csv, BeatAnnotations, FilterKind, SignalRecord};
use crate::stats::power;
use crate::{Error, Result};

/// Maximum rotation (rad) about x, y, z driven by respiration.
pub const PSI_MAX: [f64; 3] = [0.2, 0.16, 0.14];
/// Respiratory heart translation along z, as a fraction of the cylinder height.
pub const MATERNAL_TRANSLATION: f64 = 0.05;
pub const FETAL_TRANSLATION: f64 = 0.015;
/// Order and cutoff of the high-pass applied to MA/EM before measuring power.
pub const CALIBRATION_HP_ORDER: usize = 10;
pub const CALIBRATION_HP_HZ: f64 = 1.0;

/// Fetal heart path over the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Trajectory {
    #[default]
    None,
    /// Straight line from the heart position to `end`.
    Linear { end: Cylindrical },
    /// Circle of `radius` in the transverse plane, `turns` revolutions, rising by `rise`.
    Helix { radius: f64, turns: f64, rise: f64 },
    /// Cubic (Catmull–Rom) curve from the heart position through `waypoints`.
    Spline { waypoints: Vec<Cylindrical> },
}

impl Trajectory {
    /// Position at normalised time `u ∈ [0, 1]`.
    pub fn position(&self, start: [f64; 3], u: f64) -> [f64; 3] {
        match self {
            Trajectory::None => start,
            Trajectory::Linear { end } => {
                let e = end.to_cartesian();
                [0, 1, 2].map(|j| start[j] + u * (e[j] - start[j]))
            }
            Trajectory::Helix { radius, turns, rise } => {
                let a = 2.0 * PI * turns * u;
                [start[0] + radius * (a.cos() - 1.0), start[1] + radius * a.sin(), start[2] + rise * u]
            }
            Trajectory::Spline { waypoints } => {
                let mut pts = vec![start];
                pts.extend(waypoints.iter().map(Cylindrical::to_cartesian));
                catmull_rom(&pts, u)
            }
        }
    }
}

fn catmull_rom(pts: &[[f64; 3]], u: f64) -> [f64; 3] {
    if pts.len() == 1 {
        return pts[0];
    }
    let segs = pts.len() - 1;
    let s = (u.clamp(0.0, 1.0) * segs as f64).min(segs as f64 - 1e-12);
    let i = s.floor() as usize;
    let t = s - i as f64;
    let p = |k: isize| pts[k.clamp(0, segs as isize) as usize];
    let (p0, p1, p2, p3) = (p(i as isize - 1), p(i as isize), p(i as isize + 1), p(i as isize + 2));
    let (t2, t3) = (t * t, t * t * t);
    [0, 1, 2].map(|j| {
        0.5 * (2.0 * p1[j]
            + (-p0[j] + p2[j]) * t
            + (2.0 * p0[j] - 5.0 * p1[j] + 4.0 * p2[j] - p3[j]) * t2
            + (-p0[j] + 3.0 * p1[j] - 3.0 * p2[j] + p3[j]) * t3)
    })
}

/// Rhythm and morphology of one fetus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetusConfig {
    pub fhr: f64,
    pub facc: f64,
    pub facctype: HrKind,
    /// Centre of the acceleration profile (s); the record midpoint when unset.
    pub facc_center: Option<f64>,
    pub facc_width: f64,
    /// Sinus-rhythm standard deviation (bpm).
    pub fhrv: f64,
    pub fres: f64,
    pub ftraj: Trajectory,
    pub fectb: bool,
    pub fvcg: usize,
}

impl Default for FetusConfig {
    fn default() -> Self {
        Self {
            fhr: 140.0,
            facc: 0.0,
            facctype: HrKind::Nsr,
            facc_center: None,
            facc_width: 5.0,
            fhrv: 2.0,
            fres: 0.9,
            ftraj: Trajectory::None,
            fectb: false,
            fvcg: 2,
        }
    }
}

/// Uterine contraction: enveloped MA noise and an FHR deceleration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractionConfig {
    /// Peak time of the envelope (s).
    pub center: f64,
    /// Envelope standard deviation (s).
    pub sigma: f64,
    /// Maternal-to-contraction-noise ratio (dB).
    pub snr: f64,
    /// Depth of the deceleration (bpm).
    pub decel: f64,
    /// Delay of the deceleration after the envelope peak (s); 0 is an early deceleration.
    pub lag: f64,
    /// Width of the deceleration (s).
    pub decel_width: f64,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self { center: 30.0, sigma: 8.0, snr: 10.0, decel: 25.0, lag: 0.0, decel_width: 6.0 }
    }
}

/// Simulation parameters; field names follow the usual simulator vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub fs: u32,
    pub duration: f64,
    pub mhr: f64,
    pub macc: f64,
    pub macctype: HrKind,
    pub macc_center: Option<f64>,
    pub macc_width: f64,
    pub mhrv: f64,
    pub mres: f64,
    pub mectb: bool,
    pub mvcg: usize,
    #[serde(flatten)]
    pub fetus: FetusConfig,
    /// Additional fetuses, matched with `fhearts[1..]` of the scene.
    pub twins: Vec<FetusConfig>,
    #[serde(rename = "SNRfm")]
    pub snr_fm: f64,
    #[serde(rename = "SNRmn")]
    pub snr_mn: f64,
    pub ntype: Vec<NoiseType>,
    pub contraction: Option<ContractionConfig>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            fs: 1000,
            duration: 60.0,
            mhr: 90.0,
            macc: 0.0,
            macctype: HrKind::Nsr,
            macc_center: None,
            macc_width: 5.0,
            mhrv: 1.0,
            mres: 0.25,
            mectb: false,
            mvcg: 1,
            fetus: FetusConfig::default(),
            twins: Vec::new(),
            snr_fm: -9.0,
            snr_mn: 12.0,
            ntype: vec![NoiseType::MA],
            contraction: None,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn fetuses(&self) -> Vec<&FetusConfig> {
        std::iter::once(&self.fetus).chain(&self.twins).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.fs == 0 || !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("sampling rate and duration must be positive"));
        }
        if !(self.snr_fm.is_finite() && self.snr_mn.is_finite()) {
            return Err(Error::invalid("SNRs must be finite"));
        }
        let sel_ok = |v: usize| (1..=VCG_SET_COUNT).contains(&v);
        if !sel_ok(self.mvcg) || self.fetuses().iter().any(|f| !sel_ok(f.fvcg)) {
            return Err(Error::invalid(format!("VCG selectors must be in 1..={VCG_SET_COUNT}")));
        }
        if !(self.mhr > 0.0) || self.fetuses().iter().any(|f| !(f.fhr > 0.0)) {
            return Err(Error::invalid("heart rates must be positive"));
        }
        if !(self.mres > 0.0) || self.fetuses().iter().any(|f| !(f.fres > 0.0)) {
            return Err(Error::invalid("breathing rates must be positive"));
        }
        if let Some(c) = &self.contraction {
            if !(c.sigma > 0.0 && c.decel_width > 0.0 && c.snr.is_finite()) {
                return Err(Error::invalid("contraction widths must be positive"));
            }
        }
        Ok(())
    }
}

/// Gains applied to each calibrated component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub fetal: Vec<f64>,
    pub noise: Option<f64>,
    /// Per-type factors that equalise calibration power before the common gain.
    pub noise_types: Vec<(NoiseType, f64)>,
    pub contraction: Option<f64>,
}

/// Ground truth of one cardiac source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTruth {
    pub annotations: BeatAnnotations,
    pub beat_types: Vec<BeatType>,
    /// Heart rate of each annotated beat (bpm).
    pub hr: Vec<f64>,
}

/// Mixture and its exact decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub mixture: SignalRecord,
    pub maternal: SignalRecord,
    /// Calibrated fetal projections, one per fetus.
    pub fetal: Vec<SignalRecord>,
    /// Calibrated noise per type, in `ntype` order.
    pub noise: Vec<(NoiseType, SignalRecord)>,
    pub contraction: Option<SignalRecord>,
    pub maternal_truth: SourceTruth,
    pub fetal_truth: Vec<SourceTruth>,
    pub gains: Gains,
}

impl SimulationOutput {
    pub fn mqrs(&self) -> &BeatAnnotations {
        &self.maternal_truth.annotations
    }

    pub fn fqrs(&self) -> &BeatAnnotations {
        &self.fetal_truth[0].annotations
    }

    /// Sum of all calibrated noise types (zeros when there is none).
    pub fn total_noise(&self) -> Vec<Vec<f64>> {
        let m = self.mixture.n_channels();
        let n = self.mixture.len();
        let mut out = vec![vec![0.0; n]; m];
        for (_, rec) in &self.noise {
            for (o, c) in out.iter_mut().zip(rec.channels()) {
                o.iter_mut().zip(c).for_each(|(a, b)| *a += b);
            }
        }
        out
    }

    /// Writes `mixture.csv`, `maternal.csv`, `fetal{k}.csv`, `noise.csv`,
    /// `mqrs.txt`, `fqrs{k}.txt` and `truth.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_signal_csv(dir.join("mixture.csv"), &self.mixture)?;
        write_signal_csv(dir.join("maternal.csv"), &self.maternal)?;
        for (k, f) in self.fetal.iter().enumerate() {
            write_signal_csv(dir.join(format!("fetal{k}.csv")), f)?;
            write_annotations(dir.join(format!("fqrs{k}.txt")), &self.fetal_truth[k].annotations)?;
        }
        let noise = SignalRecord::new(self.total_noise(), self.mixture.fs(), self.mixture.labels().to_vec())?;
        write_signal_csv(dir.join("noise.csv"), &noise)?;
        if let Some(c) = &self.contraction {
            write_signal_csv(dir.join("contraction.csv"), c)?;
        }
        write_annotations(dir.join("mqrs.txt"), self.mqrs())?;
        let truth = serde_json::json!({
            "fs": self.mixture.fs(),
            "n_samples": self.mixture.len(),
            "gains": self.gains,
            "maternal": self.maternal_truth,
            "fetal": self.fetal_truth,
        });
        let text = serde_json::to_string_pretty(&truth).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(dir.join("truth.json"), text + "\n")?;
        Ok(())
    }
}

/// `p = √(Px/Pv)·10^(−S/20)` so that `x + p·v` has signal-to-interference ratio `S` dB.
pub fn calibrate_gain(x: &[f64], v: &[f64], s_db: f64) -> Result<f64> {
    calibrate_power(power(x), power(v), s_db)
}

fn calibrate_power(px: f64, pv: f64, s_db: f64) -> Result<f64> {
    if !(pv > 0.0 && pv.is_finite()) {
        return Err(Error::invalid("interference has zero power"));
    }
    Ok((px / pv).sqrt() * 10f64.powf(-s_db / 20.0))
}

/// Mean power over channels.
pub fn mean_channel_power(chs: &[Vec<f64>]) -> f64 {
    chs.iter().map(|c| power(c)).sum::<f64>() / chs.len() as f64
}

/// Channels as measured for noise calibration: MA and EM high-passed at 1 Hz
/// with a zero-phase Butterworth, BW untouched.
pub fn calibration_view(kind: NoiseType, chs: &[Vec<f64>], fs: f64) -> Result<Vec<Vec<f64>>> {
    if !kind.highpass_before_calibration() {
        return Ok(chs.to_vec());
    }
    let sos = butterworth(CALIBRATION_HP_ORDER, CALIBRATION_HP_HZ, fs, FilterKind::Highpass)?;
    Ok(chs.iter().map(|c| filtfilt(&sos, c)).collect())
}

struct Source {
    channels: Vec<Vec<f64>>,
    truth: SourceTruth,
}

struct SourceSpec<'a> {
    label: String,
    mean_hr: f64,
    kind: HrKind,
    hr_params: HrParams,
    decel: Option<ContractionConfig>,
    ectopic: bool,
    vcg: usize,
    res: f64,
    translation: f64,
    heart: [f64; 3],
    orientation: [f64; 3],
    trajectory: &'a Trajectory,
}

fn render_source(spec: &SourceSpec<'_>, cfg: &ScenarioConfig, scene: &DipoleScene) -> Result<Source> {
    let fs = cfg.fs as f64;
    let n = (cfg.duration * fs).round() as usize;
    let normal = vcg_set(spec.vcg)?;
    let ectopic = ectopic_models(&normal)?;
    let extra = |t: f64| match &spec.decel {
        Some(c) => -c.decel * mexican_hat(t - c.center - c.lag, c.decel_width) / mexican_hat(0.0, c.decel_width),
        None => 0.0,
    };
    let bound = spec.mean_hr + spec.hr_params.acc_bpm.abs() + 6.0 * spec.hr_params.hrv_std_bpm + 20.0;
    let mut n_beats = ((cfg.duration + 2.0) * bound / 60.0).ceil() as usize + 4;
    let hr_seed = derive_seed(cfg.seed, &format!("{}/hr", spec.label));
    let (hr, labels, vcg, offset) = loop {
        let hr = hr_series_with(spec.mean_hr, spec.kind, &spec.hr_params, n_beats, hr_seed, extra)?;
        let labels = if spec.ectopic {
            ectopic_sequence(n_beats, derive_seed(cfg.seed, &format!("{}/ectopic", spec.label)))
        } else {
            vec![BeatType::Normal; n_beats]
        };
        let mut rr: Vec<f64> = hr.iter().map(|h| 60.0 / h).collect();
        apply_ectopic_timing(&mut rr, &labels);
        let mut off_rng = stream(cfg.seed, &format!("{}/offset", spec.label));
        let offset = (off_rng.random::<f64>() * rr[0] * fs).floor() as usize;
        let vcg = render_beats(&rr, fs, |k| if labels[k] == BeatType::Ectopic { &ectopic } else { &normal })?;
        if vcg.axes[0].len() >= offset + n {
            break (hr, labels, vcg, offset);
        }
        n_beats *= 2;
    };
    let mut idx = Vec::new();
    let mut types = Vec::new();
    let mut rates = Vec::new();
    for (k, &p) in vcg.r_peaks.iter().enumerate() {
        if p >= offset && p < offset + n {
            idx.push(p - offset);
            types.push(labels[k]);
            rates.push(hr[k]);
        }
    }
    let beta = respiration_waveform(&RespirationParams::new(spec.res), n, fs)?;
    let electrodes = scene.electrode_positions();
    let reference = scene.reference.to_cartesian();
    let dz = spec.translation * scene.height;
    let mut channels = vec![vec![0.0; n]; electrodes.len()];
    for i in 0..n {
        let b = beta[i];
        let u = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        let mut pos = spec.trajectory.position(spec.heart, u);
        pos[2] += dz * b;
        if !scene.contains(pos) {
            return Err(Error::invalid(format!("{} heart leaves the volume conductor", spec.label)));
        }
        let psi = [0, 1, 2].map(|j| PSI_MAX[j] * b + spec.orientation[j]);
        let d = rotation_matrix(psi[0], psi[1], psi[2])
            * Vector3::new(vcg.axes[0][i + offset], vcg.axes[1][i + offset], vcg.axes[2][i + offset]);
        for (e, ch) in electrodes.iter().zip(channels.iter_mut()) {
            let h = projection_row(pos, *e, reference)?;
            ch[i] = h[0] * d[0] + h[1] * d[1] + h[2] * d[2];
        }
    }
    Ok(Source {
        channels,
        truth: SourceTruth { annotations: BeatAnnotations::new(idx, cfg.fs)?, beat_types: types, hr: rates },
    })
}

fn noise_location(seed: u64, label: &str, scene: &DipoleScene) -> [f64; 3] {
    let mut rng = stream(seed, label);
    let theta = rng.random_range(-PI..PI);
    let rho = 0.8 * scene.radius * rng.random::<f64>().sqrt();
    let z = rng.random_range(-0.4..0.4) * scene.height;
    Cylindrical::new(theta, rho, z).to_cartesian()
}

fn project_static(dipole: &[Vec<f64>; 3], at: [f64; 3], scene: &DipoleScene) -> Result<Vec<Vec<f64>>> {
    let reference = scene.reference.to_cartesian();
    scene
        .electrode_positions()
        .iter()
        .map(|e| {
            let h = projection_row(at, *e, reference)?;
            Ok((0..dipole[0].len())
                .map(|i| h[0] * dipole[0][i] + h[1] * dipole[1][i] + h[2] * dipole[2][i])
                .collect())
        })
        .collect()
}

fn scale(chs: &[Vec<f64>], g: f64) -> Vec<Vec<f64>> {
    chs.iter().map(|c| c.iter().map(|v| v * g).collect()).collect()
}

fn record(chs: Vec<Vec<f64>>, fs: u32) -> Result<SignalRecord> {
    SignalRecord::from_channels(chs, fs)
}

/// Generates a maternal–fetal abdominal mixture with full ground truth.
///
/// Every random draw comes from a stream labelled by its source, so adding a
/// fetus or a noise type leaves the other components unchanged.
pub fn simulate(cfg: &ScenarioConfig, scene: &DipoleScene) -> Result<SimulationOutput> {
    cfg.validate()?;
    scene.validate()?;
    let fetuses = cfg.fetuses();
    if scene.fhearts.len() < fetuses.len() {
        return Err(Error::invalid("scene has fewer fetal hearts than configured fetuses"));
    }
    let fs = cfg.fs as f64;
    let n = (cfg.duration * fs).round() as usize;
    if n == 0 {
        return Err(Error::invalid("record is shorter than one sample"));
    }
    let centre = |c: Option<f64>| c.unwrap_or(cfg.duration / 2.0);
    let still = Trajectory::None;
    let maternal = render_source(
        &SourceSpec {
            label: "maternal".into(),
            mean_hr: cfg.mhr,
            kind: cfg.macctype,
            hr_params: HrParams {
                acc_bpm: cfg.macc,
                t0_s: centre(cfg.macc_center),
                width_s: cfg.macc_width,
                hrv_std_bpm: cfg.mhrv,
                ..HrParams::default()
            },
            decel: None,
            ectopic: cfg.mectb,
            vcg: cfg.mvcg,
            res: cfg.mres,
            translation: MATERNAL_TRANSLATION,
            heart: scene.mheart.position.to_cartesian(),
            orientation: scene.mheart.orientation,
            trajectory: &still,
        },
        cfg,
        scene,
    )?;
    let pm = mean_channel_power(&maternal.channels);
    if !(pm > 0.0) {
        return Err(Error::invalid("maternal projection has zero power (geometric degeneracy)"));
    }
    let mut fetal = Vec::new();
    let mut fetal_truth = Vec::new();
    let mut fetal_gains = Vec::new();
    for (k, f) in fetuses.iter().enumerate() {
        let src = render_source(
            &SourceSpec {
                label: format!("fetus{k}"),
                mean_hr: f.fhr,
                kind: f.facctype,
                hr_params: HrParams {
                    acc_bpm: f.facc,
                    t0_s: centre(f.facc_center),
                    width_s: f.facc_width,
                    hrv_std_bpm: f.fhrv,
                    ..HrParams::default()
                },
                decel: cfg.contraction.clone(),
                ectopic: f.fectb,
                vcg: f.fvcg,
                res: f.fres,
                translation: FETAL_TRANSLATION,
                heart: scene.fhearts[k].position.to_cartesian(),
                orientation: scene.fhearts[k].orientation,
                trajectory: &f.ftraj,
            },
            cfg,
            scene,
        )?;
        let p = calibrate_power(pm, mean_channel_power(&src.channels), -cfg.snr_fm)?;
        fetal.push(scale(&src.channels, p));
        fetal_truth.push(src.truth);
        fetal_gains.push(p);
    }

    let mut kinds = cfg.ntype.clone();
    kinds.sort();
    kinds.dedup();
    let mut raw_noise = Vec::new();
    let mut calib_sum: Vec<Vec<f64>> = vec![vec![0.0; n]; scene.electrodes.len()];
    let mut type_factors = Vec::new();
    for &kind in &kinds {
        let label = format!("noise/{kind}");
        let model = NoiseModel::for_type(kind, fs)?;
        let dipole = generate_noise(&model, n, derive_seed(cfg.seed, &label))?;
        let projected = project_static(&dipole, noise_location(cfg.seed, &format!("{label}/location"), scene), scene)?;
        let view = calibration_view(kind, &projected, fs)?;
        let pv = mean_channel_power(&view);
        if !(pv > 0.0) {
            return Err(Error::numerical(format!("{kind} noise has zero power")));
        }
        let w = 1.0 / pv.sqrt();
        for (acc, c) in calib_sum.iter_mut().zip(&view) {
            acc.iter_mut().zip(c).for_each(|(a, b)| *a += w * b);
        }
        type_factors.push((kind, w));
        raw_noise.push((kind, scale(&projected, w)));
    }
    let noise_gain = if kinds.is_empty() {
        None
    } else {
        Some(calibrate_power(pm, mean_channel_power(&calib_sum), cfg.snr_mn)?)
    };
    let noise: Vec<(NoiseType, Vec<Vec<f64>>)> = raw_noise
        .into_iter()
        .map(|(k, chs)| (k, scale(&chs, noise_gain.unwrap_or(0.0))))
        .collect();

    let (contraction, contraction_gain) = match &cfg.contraction {
        Some(c) => {
            let model = NoiseModel::for_type(NoiseType::MA, fs)?;
            let mut dipole = generate_noise(&model, n, derive_seed(cfg.seed, "contraction"))?;
            for ax in dipole.iter_mut() {
                for (i, v) in ax.iter_mut().enumerate() {
                    let t = i as f64 / fs - c.center;
                    *v *= (-t * t / (2.0 * c.sigma * c.sigma)).exp();
                }
            }
            let projected = project_static(&dipole, noise_location(cfg.seed, "contraction/location", scene), scene)?;
            let view = calibration_view(NoiseType::MA, &projected, fs)?;
            let g = calibrate_power(pm, mean_channel_power(&view), c.snr)?;
            (Some(scale(&projected, g)), Some(g))
        }
        None => (None, None),
    };

    let mut mixture = maternal.channels.clone();
    let mut add = |chs: &[Vec<f64>]| {
        for (m, c) in mixture.iter_mut().zip(chs) {
            m.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        }
    };
    for f in &fetal {
        add(f);
    }
    for (_, chs) in &noise {
        add(chs);
    }
    if let Some(c) = &contraction {
        add(c);
    }
    Ok(SimulationOutput {
        mixture: record(mixture, cfg.fs)?,
        maternal: record(maternal.channels, cfg.fs)?,
        fetal: fetal.into_iter().map(|c| record(c, cfg.fs)).collect::<Result<_>>()?,
        noise: noise.into_iter().map(|(k, c)| Ok((k, record(c, cfg.fs)?))).collect::<Result<_>>()?,
        contraction: contraction.map(|c| record(c, cfg.fs)).transpose()?,
        maternal_truth: maternal.truth,
        fetal_truth,
        gains: Gains { fetal: fetal_gains, noise: noise_gain, noise_types: type_factors, contraction: contraction_gain },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(seed: u64) -> ScenarioConfig {
        ScenarioConfig { fs: 250, duration: 12.0, seed, ntype: vec![NoiseType::MA, NoiseType::BW], ..ScenarioConfig::default() }
    }

    #[test]
    fn calibration_examples() {
        let x = vec![1.0, -1.0, 1.0, -1.0];
        assert!((calibrate_gain(&x, &x, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((calibrate_gain(&x, &x, 20.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(calibrate_gain(&x, &[0.0; 4], 3.0).is_err());
        let mut rng = crate::rng::rng_from_seed(5);
        let a: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..1000).map(|_| rng.random_range(-3.0..2.0)).collect();
        let p = calibrate_gain(&a, &v, -9.3).unwrap();
        let pv: Vec<f64> = v.iter().map(|x| x * p).collect();
        let snr = 10.0 * (power(&a) / power(&pv)).log10();
        assert!((snr + 9.3).abs() < 1e-9);
    }

    #[test]
    fn mixture_decomposes_exactly() {
        let mut cfg = short(3);
        cfg.contraction = Some(ContractionConfig { center: 6.0, sigma: 2.0, ..ContractionConfig::default() });
        let out = simulate(&cfg, &DipoleScene::default()).unwrap();
        let noise = out.total_noise();
        let c = out.contraction.as_ref().unwrap();
        let scale = out.mixture.channels().iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        for ch in 0..out.mixture.n_channels() {
            for i in 0..out.mixture.len() {
                let r = out.mixture.channel(ch)[i]
                    - out.maternal.channel(ch)[i]
                    - out.fetal[0].channel(ch)[i]
                    - noise[ch][i]
                    - c.channel(ch)[i];
                assert!(r.abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn requested_snrs_reproduced() {
        let cfg = ScenarioConfig { snr_fm: -12.5, snr_mn: 7.0, ntype: NoiseType::ALL.to_vec(), ..short(4) };
        let out = simulate(&cfg, &DipoleScene::default()).unwrap();
        let pm = mean_channel_power(out.maternal.channels());
        let pf = mean_channel_power(out.fetal[0].channels());
        assert!((10.0 * (pf / pm).log10() - cfg.snr_fm).abs() < 0.1);
        let fs = cfg.fs as f64;
        let mut view = vec![vec![0.0; out.mixture.len()]; out.mixture.n_channels()];
        for (kind, rec) in &out.noise {
            for (v, c) in view.iter_mut().zip(calibration_view(*kind, rec.channels(), fs).unwrap()) {
                v.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
            }
        }
        let pn = mean_channel_power(&view);
        assert!((10.0 * (pm / pn).log10() - cfg.snr_mn).abs() < 0.1);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = simulate(&short(7), &DipoleScene::default()).unwrap();
        let b = simulate(&short(7), &DipoleScene::default()).unwrap();
        assert_eq!(a, b);
        let c = simulate(&short(8), &DipoleScene::default()).unwrap();
        assert_ne!(a.mixture, c.mixture);
    }

    #[test]
    fn fetal_beat_count_follows_heart_rate() {
        let mut cfg = ScenarioConfig { fs: 250, ntype: vec![], ..ScenarioConfig::default() };
        cfg.fetus.facctype = HrKind::None;
        cfg.fetus.fhr = 140.0;
        let out = simulate(&cfg, &DipoleScene::default()).unwrap();
        assert!(out.fqrs().len().abs_diff(140) <= 1, "{}", out.fqrs().len());
        assert!(out.gains.noise.is_none());
    }

    #[test]
    fn table_ranges_accepted() {
        for (fhr, mhr, sfm, smn) in [(120.0, 70.0, -15.0, 6.0), (160.0, 110.0, -5.0, 18.0)] {
            let mut cfg = short(2);
            cfg.fetus.fhr = fhr;
            cfg.mhr = mhr;
            cfg.snr_fm = sfm;
            cfg.snr_mn = smn;
            simulate(&cfg, &DipoleScene::default()).unwrap();
        }
        let bad = ScenarioConfig { mvcg: 10, ..short(1) };
        assert!(simulate(&bad, &DipoleScene::default()).is_err());
    }

    #[test]
    fn twins_add_an_independent_fetus() {
        let single = short(11);
        let mut twins = short(11);
        twins.twins = vec![FetusConfig { fhr: 150.0, fvcg: 3, ..FetusConfig::default() }];
        let mut scene = DipoleScene::default();
        scene.fhearts.push(crate::simulator::HeartPlacement {
            position: Cylindrical::new(-PI / 3.0, 0.3, -0.2),
            orientation: [0.0, PI / 2.0, 0.0],
        });
        let a = simulate(&single, &scene).unwrap();
        let b = simulate(&twins, &scene).unwrap();
        assert_eq!(a.maternal, b.maternal);
        assert_eq!(a.fetal[0], b.fetal[0]);
        assert_eq!(a.noise, b.noise);
        let scale = b.mixture.channels().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for ch in 0..b.mixture.n_channels() {
            for i in 0..b.mixture.len() {
                let expect = a.mixture.channel(ch)[i] + b.fetal[1].channel(ch)[i];
                assert!((b.mixture.channel(ch)[i] - expect).abs() <= 1e-12 * scale);
            }
        }
        assert!(simulate(&twins, &DipoleScene::default()).is_err());
    }

    #[test]
    fn rotation_constant_without_respiration() {
        // with zero breathing amplitude the angles equal their static values
        let p = RespirationParams { a: 0.0, delta_a: 0.0, ..RespirationParams::new(0.25) };
        let beta = respiration_waveform(&p, 500, 250.0).unwrap();
        let r0 = rotation_matrix(0.1, 0.2, 0.3);
        for b in beta {
            let r = rotation_matrix(PSI_MAX[0] * b + 0.1, PSI_MAX[1] * b + 0.2, PSI_MAX[2] * b + 0.3);
            assert_eq!(r, r0);
        }
    }

    #[test]
    fn trajectories_start_at_heart_and_move() {
        let s = [0.1, -0.1, -0.2];
        assert_eq!(Trajectory::None.position(s, 0.7), s);
        let lin = Trajectory::Linear { end: Cylindrical::new(0.0, 0.2, 0.0) };
        assert_eq!(lin.position(s, 0.0), s);
        let e = lin.position(s, 1.0);
        assert!((e[0] - 0.2).abs() < 1e-12 && e[2].abs() < 1e-12);
        let helix = Trajectory::Helix { radius: 0.05, turns: 2.0, rise: 0.1 };
        let h = helix.position(s, 1.0);
        assert!((h[0] - s[0]).abs() < 1e-12 && (h[2] - (s[2] + 0.1)).abs() < 1e-12);
        let wp = vec![Cylindrical::new(0.0, 0.1, -0.1), Cylindrical::new(PI / 2.0, 0.1, 0.0)];
        let sp = Trajectory::Spline { waypoints: wp.clone() };
        assert_eq!(sp.position(s, 0.0), s);
        let mid = sp.position(s, 0.5);
        let w0 = wp[0].to_cartesian();
        assert!((0..3).all(|j| (mid[j] - w0[j]).abs() < 1e-9));
        let end = sp.position(s, 1.0);
        let w1 = wp[1].to_cartesian();
        assert!((0..3).all(|j| (end[j] - w1[j]).abs() < 1e-9));
    }

    #[test]
    fn moving_fetus_changes_projection() {
        let mut cfg = short(5);
        cfg.ntype.clear();
        let still = simulate(&cfg, &DipoleScene::default()).unwrap();
        cfg.fetus.ftraj = Trajectory::Linear { end: Cylindrical::new(-PI / 2.0, 0.2, -0.1) };
        let moving = simulate(&cfg, &DipoleScene::default()).unwrap();
        assert_eq!(still.fqrs(), moving.fqrs());
        assert_ne!(still.fetal[0], moving.fetal[0]);
        cfg.fetus.ftraj = Trajectory::Helix { radius: 0.5, turns: 1.0, rise: 0.0 };
        assert!(simulate(&cfg, &DipoleScene::default()).is_err());
    }

    #[test]
    fn output_directory_round_trips() {
        let out = simulate(&short(9), &DipoleScene::default()).unwrap();
        let dir = std::env::temp_dir().join(format!("fecgkit-sim-{}", std::process::id()));
        out.write_dir(&dir).unwrap();
        let mix = crate::signal::read_signal_csv(dir.join("mixture.csv")).unwrap();
        assert_eq!(mix.len(), out.mixture.len());
        let f = crate::signal::read_annotations(dir.join("fqrs0.txt"), 250).unwrap();
        assert_eq!(&f, out.fqrs());
        let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("truth.json")).unwrap()).unwrap();
        assert_eq!(truth["fetal"][0]["hr"].as_array().unwrap().len(), out.fqrs().len());
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn ectopic_beats_are_labelled() {
        let mut cfg = short(6);
        cfg.mectb = true;
        let out = simulate(&cfg, &DipoleScene::default()).unwrap();
        let t = &out.maternal_truth;
        assert_eq!(t.beat_types.len(), t.annotations.len());
        assert!(t.beat_types.iter().any(|&b| b == BeatType::Ectopic));
    }

    #[test]
    fn contraction_slows_the_fetus() {
        let mut cfg = ScenarioConfig { fs: 250, duration: 60.0, ntype: vec![], ..ScenarioConfig::default() };
        cfg.fetus.facctype = HrKind::None;
        cfg.contraction = Some(ContractionConfig { center: 30.0, decel: 30.0, lag: 5.0, ..ContractionConfig::default() });
        let out = simulate(&cfg, &DipoleScene::default()).unwrap();
        let t = &out.fetal_truth[0];
        let fs = cfg.fs as f64;
        let (idx, _) = t
            .hr
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let tmin = t.annotations.indices()[idx] as f64 / fs;
        assert!((tmin - 35.0).abs() < 1.5, "{tmin}");
        assert!(out.contraction.is_some());
    }
}
