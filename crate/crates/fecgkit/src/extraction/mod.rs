//! Maternal cancellation and source separation: template subtraction,
//! adaptive and reservoir cancellers, PCA/ICA, method chains, FUSE and
//! random parameter search.

mod adaptive;
mod bss;
mod esn;
mod pipeline;
mod search;
mod template;

pub use adaptive::{
    lms_cancel, lms_filter, rls_cancel, rls_filter, AdaptiveOutput, Rls, LMS_MU, LMS_TAPS, RLS_DELTA, RLS_LAMBDA,
    RLS_TAPS,
};
pub use bss::{
    covariance, ica_transform, ica_transform_with, pca_transform, IcaReport, IcaResult, PcaResult, ICA_MAX_ITER,
    ICA_TOL, RANK_TOL,
};
pub use esn::{esn_cancel, EchoStateNetwork, EsnOutput, EsnParams, ESN_MAX_ATTEMPTS};
pub use pipeline::{
    chain_name, detect_fetal, fuse, fuse_candidates, fuse_default_chains, parse_chain, prepare, run_pipeline,
    separate, FuseCandidate, FuseOutput, Method, MethodParams, PipelineOutput, PipelineReport, PipelineSpec,
    Prefilter, Prepared, ResidualSet, DEFAULT_FB, DEFAULT_FH, DETECTION_FAILURE_SMI, FUSE_DEFAULT_CHAINS,
};
pub use search::{random_search, ParamRange, ParamSet, SearchResult, SearchSpace, SearchTrial};
pub use template::{
    template_subtract, wave_scaling, CycleWindow, TemplateSubtraction, TsVariant, DEFAULT_NB_CYCLES, DEFAULT_NB_PC,
    P_WAVE_S, QRS_S, TEMPLATE_GATE, TSLP_NB_CYCLES, TS_POST_S, TS_PRE_S, T_WAVE_S,
};
