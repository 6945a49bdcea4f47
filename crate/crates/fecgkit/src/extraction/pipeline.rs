//! Prefiltering, maternal detection, method chains, fetal detection and FUSE.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adaptive::{lms_cancel, rls_cancel, LMS_MU, LMS_TAPS, RLS_LAMBDA, RLS_TAPS};
use super::bss::{ica_transform, pca_transform};
use super::esn::{esn_cancel, EsnParams};
use super::template::{template_subtract, TsVariant, DEFAULT_NB_PC};
use crate::detection::{
    adjust_peaks, detect_qrs, select_channel, smooth_rr, ChannelSelectionReport, FETAL_REFRACTORY_MS,
    MATERNAL_REFRACTORY_MS,
};
use crate::ecg_model::{build_template, build_template_gated, fit_gaussians_with, FitOptions, DEFAULT_BINS};
use crate::kalman::{ekf_ecg_filter, EkfsConfig};
use crate::rng::derive_seed;
use crate::signal::{bandpass_zero_phase, normalize, notch_if_needed, BeatAnnotations, SignalRecord};
use crate::{Error, Result};

pub const DEFAULT_FB: f64 = 10.0;
pub const DEFAULT_FH: f64 = 99.0;
/// Chosen series with more large heart-rate jumps than this are flagged as failed detections.
pub const DETECTION_FAILURE_SMI: usize = 26;
/// Method chains combined by [`fuse`] when none are given.
pub const FUSE_DEFAULT_CHAINS: [&str; 5] = ["ICA-TSpca", "ICA-TSpca-ICA", "TSpca-ICA", "ICA", "TSpca"];

/// One processing step of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Ts,
    Tsc,
    Tsm,
    Tslp,
    Tspca,
    Tsekf,
    Lms,
    Rls,
    Esn,
    Pca,
    Ica,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Ts,
        Method::Tsc,
        Method::Tsm,
        Method::Tslp,
        Method::Tspca,
        Method::Tsekf,
        Method::Lms,
        Method::Rls,
        Method::Esn,
        Method::Pca,
        Method::Ica,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Method::Ts => "TS",
            Method::Tsc => "TSc",
            Method::Tsm => "TSm",
            Method::Tslp => "TSlp",
            Method::Tspca => "TSpca",
            Method::Tsekf => "TSekf",
            Method::Lms => "LMS",
            Method::Rls => "RLS",
            Method::Esn => "ESN",
            Method::Pca => "PCA",
            Method::Ica => "ICA",
        }
    }

    fn ts_variant(self) -> Option<TsVariant> {
        match self {
            Method::Ts => Some(TsVariant::Ts),
            Method::Tsc => Some(TsVariant::Tsc),
            Method::Tsm => Some(TsVariant::Tsm),
            Method::Tslp => Some(TsVariant::Tslp),
            Method::Tspca => Some(TsVariant::Tspca),
            _ => None,
        }
    }

    /// Methods that need a maternal reference channel.
    pub fn needs_reference(self) -> bool {
        matches!(self, Method::Lms | Method::Rls | Method::Esn)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.token().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown method token '{s}'")))
    }
}

/// Parses a dash-separated chain such as `TSpca-ICA`.
pub fn parse_chain(s: &str) -> Result<Vec<Method>> {
    let chain = s.split('-').map(str::parse).collect::<Result<Vec<Method>>>()?;
    if chain.is_empty() {
        return Err(Error::invalid("empty method chain"));
    }
    Ok(chain)
}

pub fn chain_name(chain: &[Method]) -> String {
    chain.iter().map(|m| m.token()).collect::<Vec<_>>().join("-")
}

/// Band-pass and notch settings applied before anything else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Prefilter {
    pub fb: f64,
    pub fh: f64,
    pub notch: bool,
}

impl Default for Prefilter {
    fn default() -> Self {
        Self { fb: DEFAULT_FB, fh: DEFAULT_FH, notch: true }
    }
}

/// Per-method parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodParams {
    /// Template buffer length; the variant default when unset.
    pub nb_c: Option<usize>,
    pub nb_pc: usize,
    pub lms_taps: usize,
    pub lms_mu: f64,
    pub rls_taps: usize,
    pub rls_lambda: f64,
    pub esn: EsnParams,
    pub ekf: EkfsConfig,
    pub ekf_kernels: usize,
    pub ekf_fit_restarts: usize,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            nb_c: None,
            nb_pc: DEFAULT_NB_PC,
            lms_taps: LMS_TAPS,
            lms_mu: LMS_MU,
            rls_taps: RLS_TAPS,
            rls_lambda: RLS_LAMBDA,
            esn: EsnParams::default(),
            ekf: EkfsConfig::default(),
            ekf_kernels: 7,
            ekf_fit_restarts: 10,
        }
    }
}

impl MethodParams {
    pub fn validate(&self) -> Result<()> {
        if self.nb_c == Some(0) || self.nb_pc == 0 {
            return Err(Error::invalid("template cycle and component counts must be positive"));
        }
        if self.lms_taps == 0 || self.rls_taps == 0 || !(self.lms_mu > 0.0) {
            return Err(Error::invalid("adaptive filters need positive lengths and step size"));
        }
        if !(self.rls_lambda > 0.0 && self.rls_lambda <= 1.0) {
            return Err(Error::invalid("RLS forgetting factor must be in (0, 1]"));
        }
        if self.ekf_kernels == 0 || !(self.ekf.gain_r > 0.0 && self.ekf.gain_q > 0.0) {
            return Err(Error::invalid("EKF needs kernels and positive gains"));
        }
        self.esn.validate()
    }
}

/// Full description of one extraction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSpec {
    pub prefilter: Prefilter,
    pub chain: Vec<Method>,
    pub params: MethodParams,
    pub smoothing: bool,
    /// Channel of the record holding a maternal reference (chest) lead.
    pub reference_channel: Option<usize>,
    pub seed: u64,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            prefilter: Prefilter::default(),
            chain: vec![Method::Tspca],
            params: MethodParams::default(),
            smoothing: false,
            reference_channel: None,
            seed: 1,
        }
    }
}

impl PipelineSpec {
    pub fn new(chain: Vec<Method>) -> Self {
        Self { chain, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chain.is_empty() {
            return Err(Error::invalid("method chain is empty"));
        }
        if !(self.prefilter.fb > 0.0 && self.prefilter.fb < self.prefilter.fh) {
            return Err(Error::invalid("prefilter needs 0 < fb < fh"));
        }
        if self.chain.iter().any(|m| m.needs_reference()) && self.reference_channel.is_none() {
            return Err(Error::invalid("LMS, RLS and ESN need a reference channel"));
        }
        self.params.validate()
    }
}

/// Channels left after maternal cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    pub residuals: SignalRecord,
    /// Processing history of each residual channel.
    pub provenance: Vec<String>,
    /// Unmixing matrix of the last source-separation step, if any.
    pub unmixing: Option<Vec<Vec<f64>>>,
}

/// Prefiltered, normalised abdominal channels with the reference maternal series.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub record: SignalRecord,
    pub reference: Option<Vec<f64>>,
    pub mqrs: BeatAnnotations,
    pub mqrs_channel: usize,
    pub mqrs_selection: ChannelSelectionReport,
    /// Mains frequency removed from each channel.
    pub notch: Vec<Option<f64>>,
}

/// Machine-readable summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub method: String,
    #[serde(rename = "SMI")]
    pub smi: Option<usize>,
    #[serde(rename = "BCM")]
    pub bcm: Option<f64>,
    pub chosen_channel: Option<usize>,
    pub mqrs_channel: usize,
    pub n_mqrs: usize,
    pub n_fqrs: usize,
    pub low_confidence: bool,
    pub notch: Vec<Option<f64>>,
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub fqrs: BeatAnnotations,
    pub mqrs: BeatAnnotations,
    pub residuals: ResidualSet,
    pub selection: ChannelSelectionReport,
    pub report: PipelineReport,
}

fn in_context(err: Error, ctx: &str) -> Error {
    match err {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{ctx}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        Error::Parse(m) => Error::Parse(format!("{ctx}: {m}")),
        Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{ctx}: {e}"))),
    }
}

/// Band-pass (high-pass order 3, low-pass order 5), optional notch,
/// normalisation, and maternal detection with SMI-based channel choice.
pub fn prepare(record: &SignalRecord, prefilter: &Prefilter, reference_channel: Option<usize>) -> Result<Prepared> {
    let fs = record.fs_f64();
    if let Some(r) = reference_channel {
        if r >= record.n_channels() {
            return Err(Error::invalid(format!("reference channel {r} out of range")));
        }
    }
    let filtered = bandpass_zero_phase(record, prefilter.fb, prefilter.fh)?;
    let mut notch = Vec::with_capacity(record.n_channels());
    let mut channels = Vec::with_capacity(record.n_channels());
    for ch in filtered.channels() {
        let x = if prefilter.notch {
            let out = notch_if_needed(ch, fs)?;
            notch.push(out.mains);
            out.signal
        } else {
            notch.push(None);
            ch.clone()
        };
        channels.push(normalize(&x, fs)?);
    }
    let reference = reference_channel.map(|r| channels[r].clone());
    let keep: Vec<usize> = (0..record.n_channels()).filter(|&c| Some(c) != reference_channel).collect();
    if keep.is_empty() {
        return Err(Error::invalid("no abdominal channel left besides the reference"));
    }
    let labels = keep.iter().map(|&c| record.labels()[c].clone()).collect();
    let notch = keep.iter().map(|&c| notch[c]).collect();
    let abdominal = SignalRecord::new(keep.iter().map(|&c| channels[c].clone()).collect(), record.fs(), labels)?;
    let candidates = abdominal
        .channels()
        .iter()
        .map(|ch| detect_qrs(ch, record.fs(), MATERNAL_REFRACTORY_MS))
        .collect::<Result<Vec<_>>>()?;
    let mqrs_selection = select_channel(&candidates, &BeatAnnotations::empty(record.fs()));
    let mqrs_channel = mqrs_selection.chosen.ok_or_else(|| Error::invalid("no channel yields a maternal beat series"))?;
    Ok(Prepared {
        record: abdominal,
        reference,
        mqrs: candidates[mqrs_channel].clone(),
        mqrs_channel,
        mqrs_selection,
        notch,
    })
}

/// Maternal-cancellation EKF residual of one channel.
fn ekf_residual(x: &[f64], anns: &BeatAnnotations, params: &MethodParams, seed: u64) -> Result<Vec<f64>> {
    let template = build_template(x, anns, DEFAULT_BINS).or_else(|_| build_template_gated(x, anns, DEFAULT_BINS, None))?;
    let opts = FitOptions { n_kernels: params.ekf_kernels, max_restarts: params.ekf_fit_restarts, seed, ..FitOptions::default() };
    let model = fit_gaussians_with(&template, &opts)?.model;
    Ok(ekf_ecg_filter(x, anns, &model, &params.ekf)?.residual)
}

/// Runs a method chain on prepared channels.
pub fn separate(prep: &Prepared, chain: &[Method], params: &MethodParams, seed: u64) -> Result<ResidualSet> {
    if chain.is_empty() {
        return Err(Error::invalid("method chain is empty"));
    }
    let fs = prep.record.fs();
    let mut cur = prep.record.clone();
    let mut provenance: Vec<String> = cur.labels().to_vec();
    let mut unmixing = None;
    for (step, &method) in chain.iter().enumerate() {
        let step_seed = derive_seed(seed, &format!("chain/{step}/{method}"));
        match method {
            Method::Pca | Method::Ica => {
                cur = if method == Method::Pca {
                    let p = pca_transform(&cur).map_err(|e| in_context(e, method.token()))?;
                    unmixing = Some(p.basis.transpose().row_iter().map(|r| r.iter().copied().collect()).collect());
                    p.sources
                } else {
                    let ica = ica_transform(&cur, step_seed).map_err(|e| in_context(e, method.token()))?;
                    unmixing = Some(ica.unmixing.row_iter().map(|r| r.iter().copied().collect()).collect());
                    ica.sources
                };
                provenance = cur.labels().iter().map(|l| format!("{method}:{l}")).collect();
            }
            _ => {
                let mut out = Vec::with_capacity(cur.n_channels());
                for (c, x) in cur.channels().iter().enumerate() {
                    let ctx = format!("{method} on {}", provenance[c]);
                    let res = per_channel(method, x, prep, params, step_seed, fs).map_err(|e| in_context(e, &ctx))?;
                    out.push(res);
                }
                cur = SignalRecord::new(out, fs, cur.labels().to_vec())?;
                provenance = provenance.iter().map(|p| format!("{method}({p})")).collect();
            }
        }
    }
    Ok(ResidualSet { residuals: cur, provenance, unmixing })
}

fn per_channel(method: Method, x: &[f64], prep: &Prepared, params: &MethodParams, seed: u64, fs: u32) -> Result<Vec<f64>> {
    if let Some(variant) = method.ts_variant() {
        let anns = adjust_peaks(x, &prep.mqrs)?;
        let nb_c = params.nb_c.unwrap_or(variant.default_cycles());
        return Ok(template_subtract(x, &anns, variant, nb_c, params.nb_pc)?.residual);
    }
    if method == Method::Tsekf {
        let anns = adjust_peaks(x, &prep.mqrs)?;
        return ekf_residual(x, &anns, params, seed);
    }
    let reference = prep.reference.as_deref().ok_or_else(|| Error::invalid("method needs a reference channel"))?;
    match method {
        Method::Lms => lms_cancel(reference, x, params.lms_taps, params.lms_mu),
        Method::Rls => rls_cancel(reference, x, params.rls_taps, params.rls_lambda),
        Method::Esn => Ok(esn_cancel(reference, x, fs as f64, &params.esn, seed)?.residual),
        _ => unreachable!("source separation handled by the caller"),
    }
}

/// Fetal detection on every residual channel.
pub fn detect_fetal(residuals: &SignalRecord) -> Result<Vec<BeatAnnotations>> {
    residuals.channels().iter().map(|ch| detect_qrs(ch, residuals.fs(), FETAL_REFRACTORY_MS)).collect()
}

fn is_low_confidence(chosen: Option<usize>, smi: &[Option<usize>]) -> bool {
    match chosen {
        None => true,
        Some(c) => smi[c].is_none_or(|s| s > DETECTION_FAILURE_SMI),
    }
}

/// Prefilter, maternal detection, method chain, fetal detection, channel selection and optional smoothing.
pub fn run_pipeline(record: &SignalRecord, spec: &PipelineSpec) -> Result<PipelineOutput> {
    spec.validate()?;
    let prep = prepare(record, &spec.prefilter, spec.reference_channel)?;
    let residuals = separate(&prep, &spec.chain, &spec.params, spec.seed)?;
    let candidates = detect_fetal(&residuals.residuals)?;
    let selection = select_channel(&candidates, &prep.mqrs);
    let fs = record.fs();
    let mut fqrs = selection.chosen.map_or_else(|| BeatAnnotations::empty(fs), |c| candidates[c].clone());
    if spec.smoothing {
        fqrs = smooth_rr(&fqrs).annotations;
    }
    let report = PipelineReport {
        method: chain_name(&spec.chain),
        smi: selection.chosen.and_then(|c| selection.smi[c]),
        bcm: selection.chosen.map(|c| selection.bcm[c]),
        chosen_channel: selection.chosen,
        mqrs_channel: prep.mqrs_channel,
        n_mqrs: prep.mqrs.len(),
        n_fqrs: fqrs.len(),
        low_confidence: is_low_confidence(selection.chosen, &selection.smi),
        notch: prep.notch.clone(),
        provenance: residuals.provenance.clone(),
    };
    Ok(PipelineOutput { fqrs, mqrs: prep.mqrs, residuals, selection, report })
}

/// One candidate fetal series considered by [`fuse`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseCandidate {
    pub method: String,
    pub channel: usize,
    pub provenance: String,
    #[serde(rename = "SMI")]
    pub smi: Option<usize>,
    #[serde(rename = "BCM")]
    pub bcm: f64,
    pub n_beats: usize,
}

/// Result of combining several methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseOutput {
    /// `None` when every candidate was excluded.
    #[serde(skip)]
    pub fqrs: Option<BeatAnnotations>,
    /// Index of the winning candidate.
    pub winner: Option<usize>,
    pub candidates: Vec<FuseCandidate>,
    /// Chains that failed, with the error message.
    pub failures: Vec<(String, String)>,
    pub low_confidence: bool,
}

/// Picks, among labelled candidate series, the lowest-SMI series not matching the maternal one.
pub fn fuse_candidates(pool: &[(String, usize, String, BeatAnnotations)], mqrs: &BeatAnnotations) -> FuseOutput {
    let series: Vec<BeatAnnotations> = pool.iter().map(|p| p.3.clone()).collect();
    let sel = select_channel(&series, mqrs);
    let candidates = pool
        .iter()
        .enumerate()
        .map(|(i, (method, channel, provenance, a))| FuseCandidate {
            method: method.clone(),
            channel: *channel,
            provenance: provenance.clone(),
            smi: sel.smi[i],
            bcm: sel.bcm[i],
            n_beats: a.len(),
        })
        .collect();
    FuseOutput {
        fqrs: sel.chosen.map(|c| series[c].clone()),
        winner: sel.chosen,
        candidates,
        failures: Vec::new(),
        low_confidence: is_low_confidence(sel.chosen, &sel.smi),
    }
}

/// Runs each chain on the shared prefiltered channels and maternal series and
/// keeps the single most regular fetal series that does not echo the maternal one.
pub fn fuse(record: &SignalRecord, spec: &PipelineSpec, chains: &[Vec<Method>]) -> Result<FuseOutput> {
    if chains.len() < 2 {
        return Err(Error::invalid("FUSE needs at least two methods"));
    }
    let mut check = spec.clone();
    for chain in chains {
        check.chain = chain.clone();
        check.validate()?;
    }
    let prep = prepare(record, &spec.prefilter, spec.reference_channel)?;
    let mut pool = Vec::new();
    let mut failures = Vec::new();
    for chain in chains {
        let name = chain_name(chain);
        let attempt = separate(&prep, chain, &spec.params, spec.seed)
            .and_then(|res| Ok((detect_fetal(&res.residuals)?, res.provenance)));
        match attempt {
            Ok((series, provenance)) => {
                for (c, (a, p)) in series.into_iter().zip(provenance).enumerate() {
                    pool.push((name.clone(), c, p, a));
                }
            }
            Err(e) => failures.push((name, e.to_string())),
        }
    }
    let mut out = fuse_candidates(&pool, &prep.mqrs);
    if spec.smoothing {
        out.fqrs = out.fqrs.map(|f| smooth_rr(&f).annotations);
    }
    out.failures = failures;
    Ok(out)
}

/// Parsed default FUSE chains.
pub fn fuse_default_chains() -> Vec<Vec<Method>> {
    FUSE_DEFAULT_CHAINS.iter().map(|c| parse_chain(c).expect("valid default chain")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::f1_score;
    use crate::simulator::{simulate, DipoleScene, NoiseType, ScenarioConfig};

    fn scene4() -> DipoleScene {
        DipoleScene::default().select_electrodes(&[0, 2, 4, 6]).unwrap()
    }

    fn easy_mixture(seed: u64, duration: f64) -> crate::simulator::SimulationOutput {
        let cfg = ScenarioConfig {
            fs: 1000,
            duration,
            snr_mn: 18.0,
            snr_fm: -5.0,
            ntype: vec![NoiseType::MA],
            seed,
            ..ScenarioConfig::default()
        };
        simulate(&cfg, &scene4()).unwrap()
    }

    #[test]
    fn chain_tokens_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.token().parse::<Method>().unwrap(), m);
        }
        let c = parse_chain("ICA-TSpca-ICA").unwrap();
        assert_eq!(c, vec![Method::Ica, Method::Tspca, Method::Ica]);
        assert_eq!(chain_name(&c), "ICA-TSpca-ICA");
        assert!(parse_chain("TS-XYZ").is_err());
        assert!(parse_chain("").is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(PipelineSpec::new(vec![]).validate().is_err());
        assert!(PipelineSpec::new(vec![Method::Lms]).validate().is_err());
        let ok = PipelineSpec { reference_channel: Some(0), ..PipelineSpec::new(vec![Method::Lms]) };
        ok.validate().unwrap();
        let bad = PipelineSpec { prefilter: Prefilter { fb: 20.0, fh: 10.0, notch: false }, ..PipelineSpec::default() };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&PipelineSpec::default()).unwrap();
        let back: PipelineSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, PipelineSpec::default());
        let partial: PipelineSpec = serde_json::from_str(r#"{"chain":["Ts","Ica"]}"#).unwrap();
        assert_eq!(partial.chain, vec![Method::Ts, Method::Ica]);
    }

    #[test]
    fn maternal_only_mixture_is_flagged() {
        let sim = easy_mixture(3, 30.0);
        let channels: Vec<Vec<f64>> = sim.maternal.channels().to_vec();
        let rec = SignalRecord::from_channels(channels, 1000).unwrap();
        let out = run_pipeline(&rec, &PipelineSpec::new(vec![Method::Ts])).unwrap();
        assert!(out.report.low_confidence, "{:?}", out.report);
        assert_eq!(out.residuals.residuals.len(), rec.len());
    }

    #[test]
    fn easy_mixture_is_extracted_and_deterministic() {
        let sim = easy_mixture(5, 30.0);
        let spec = PipelineSpec::new(parse_chain("TSpca-ICA").unwrap());
        let a = run_pipeline(&sim.mixture, &spec).unwrap();
        let b = run_pipeline(&sim.mixture, &spec).unwrap();
        assert_eq!(a.fqrs, b.fqrs);
        assert_eq!(a.report, b.report);
        let f1 = f1_score(sim.fqrs(), &a.fqrs);
        assert!(f1 > 0.9, "{f1} {:?}", a.report);
        assert!(f1_score(sim.mqrs(), &a.mqrs) > 0.95);
        assert!(!a.report.low_confidence);
    }

    #[test]
    fn reference_methods_run_on_a_chest_lead() {
        let sim = easy_mixture(6, 20.0);
        let mut channels = sim.mixture.channels().to_vec();
        channels.push(sim.maternal.channel(0).to_vec());
        let rec = SignalRecord::from_channels(channels, 1000).unwrap();
        for m in [Method::Lms, Method::Rls] {
            let spec = PipelineSpec { reference_channel: Some(4), ..PipelineSpec::new(vec![m]) };
            let out = run_pipeline(&rec, &spec).unwrap();
            assert_eq!(out.residuals.residuals.n_channels(), 4);
        }
    }

    #[test]
    fn errors_carry_provenance() {
        let sim = easy_mixture(7, 20.0);
        let spec = PipelineSpec { params: MethodParams { nb_c: Some(500), ..MethodParams::default() }, ..PipelineSpec::default() };
        let err = run_pipeline(&sim.mixture, &spec).unwrap_err().to_string();
        assert!(err.contains("TSpca on"), "{err}");
    }

    #[test]
    fn fuse_excludes_maternal_echo_and_keeps_single_survivor() {
        let fs = 1000;
        let mqrs = BeatAnnotations::new((0..30).map(|k| 300 + k * 700).collect(), fs).unwrap();
        let fetal = BeatAnnotations::new((0..50).map(|k| 200 + k * 420).collect(), fs).unwrap();
        let pool = vec![
            ("echo".to_string(), 0, "a".to_string(), mqrs.clone()),
            ("fetal".to_string(), 1, "b".to_string(), fetal.clone()),
        ];
        let out = fuse_candidates(&pool, &mqrs);
        assert_eq!(out.winner, Some(1));
        assert_eq!(out.fqrs, Some(fetal));
        assert!(out.candidates[0].bcm >= 0.4);
        let none = fuse_candidates(&pool[..1], &mqrs);
        assert!(none.fqrs.is_none() && none.low_confidence);
    }

    #[test]
    fn fuse_needs_two_methods() {
        let sim = easy_mixture(8, 10.0);
        assert!(fuse(&sim.mixture, &PipelineSpec::default(), &[vec![Method::Ts]]).is_err());
    }
}
