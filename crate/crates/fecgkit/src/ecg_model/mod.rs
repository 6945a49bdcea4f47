//! Gaussian-kernel ECG cycle model: phase assignment, template averaging,
//! kernel fitting and waveform/VCG synthesis.

mod fit;
mod kernel;
mod phase;
mod synth;
mod template;

pub use fit::{fit_gaussians, fit_gaussians_with, FitOptions, GaussianFit};
pub use kernel::{CycleModel, GaussianKernel};
pub use phase::{assign_phase, PhaseSeries};
pub use synth::{euler_integrate, generate_vcg, render_beats, synthesize_cycle, Vcg};
pub use template::{build_template, build_template_gated, phase_grid, TemplateCycle, DEFAULT_BINS, GATING_CORRELATION};
