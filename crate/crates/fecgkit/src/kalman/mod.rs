//! Bayesian filtering: Joseph-form Kalman steps, the single-source ECG filter,
//! the dual maternal/fetal filter, output SNR and QT from fitted kernels.

mod ekfd;
mod ekfs;
mod metrics;
mod step;

pub use ekfd::{
    ekfd_filter, ekfd_pipeline, postfilter, DualDynamics, DualExtraction, EkfdConfig, EkfdOutput, KernelSnapshot,
    KernelWalk,
};
pub use ekfs::{
    ekf_ecg_filter, omega_stats, EcgDynamics, EkfsConfig, EkfsOutput, DEFAULT_GAIN_Q, DEFAULT_GAIN_R,
    DIVERGENCE_S, DIVERGENCE_SIGMA, ETA_FRACTION, KERNEL_CENTRE_SD, KERNEL_PEAK_FRACTION, KERNEL_WIDTH_SD,
};
pub use metrics::{qt_from_kernels, snr_db, QT_OFFSET_WIDTHS, QT_ONSET_WIDTHS, SNR_EXCLUSION_S};
pub use step::{ekf_step, kf_step, numerical_jacobian, LinearModel, StateEstimate, StateSpace, StepOutput};
