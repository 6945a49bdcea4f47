//! Signal containers, file formats, zero-phase filtering, normalisation and
//! spectral estimation.

mod filter;
mod io;
mod record;
mod spectral;

pub use filter::{
    bandpass_zero_phase, bandpass_zero_phase_with_orders, butterworth, filtfilt, highpass_zero_phase,
    lowpass_zero_phase, normalize, notch_if_needed, notch_zero_phase, sosfilt, FilterKind,
    NotchOutcome, Sos,
};
pub use io::{
    format_sig9, parse_annotations, parse_signal_csv, read_annotations, read_signal_csv,
    signal_to_csv, write_annotations, write_signal_csv,
};
pub use record::{BeatAnnotations, SignalRecord};
pub use spectral::{
    ar_fit_burg, band_power, power_spectrum, welch, ArModel, SpectralEstimate, SpectrumMethod,
};
