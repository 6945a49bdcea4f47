//! Maternal–fetal abdominal ECG simulator: dipoles projected through a
//! cylindrical volume conductor with respiration, movement, heart-rate
//! variability, ectopy, contractions, noise and multiple fetuses.

mod ectopic;
mod geometry;
mod hrv;
mod noise;
mod respiration;
mod scenario;
mod vcg;

pub use ectopic::{apply_ectopic_timing, ectopic_models, ectopic_sequence, markov_beats, stationary_ectopic_fraction, BeatType};
pub use geometry::{dipole_gain, projection_row, rotation_matrix, Cylindrical, DipoleScene, HeartPlacement};
pub use hrv::{hr_series, hr_series_with, mexican_hat, profile, sinus_rhythm_fluctuation, HrKind, HrParams};
pub use noise::{
    first_principal_component, generate_noise, seed_segment, NoiseModel, NoiseType, PoleWalk, MAX_POLE_RADIUS,
    NOISE_AR_ORDER,
};
pub use respiration::{respiration_waveform, RespirationParams};
pub use scenario::{
    calibrate_gain, calibration_view, mean_channel_power, simulate, ContractionConfig, FetusConfig, Gains,
    ScenarioConfig, SimulationOutput, SourceTruth, Trajectory, FETAL_TRANSLATION, MATERNAL_TRANSLATION, PSI_MAX,
};
pub use vcg::{generate_vcg_sets, vcg_set, vcg_sets_json, VCG_SET_COUNT, VCG_SET_SEED};
