//! Frame-level acoustic features in the style of eGeMAPS.
//!
//! Each 1 s frame is split into 25 ms Hamming sub-windows with a 10 ms hop
//! (98 sub-windows at 1 s). Low-level descriptors are computed per sub-window
//! ([`LldSeries`]) and then summarized by statistical functionals into an
//! 88-value [`FrameFeatureVector`] whose column order is [`FEATURE_NAMES`].
//!
//! Descriptor definitions:
//!
//! * **F0** – normalized cross-correlation pitch in 55–1000 Hz with parabolic
//!   lag interpolation, voiced when the peak correlation reaches the voicing
//!   threshold; expressed in semitones above 27.5 Hz (0 when unvoiced).
//! * **loudness** – Stevens power law on sub-window intensity, `(mean x²)^0.3`.
//! * **spectral flux** – squared difference of consecutive L1-normalized
//!   magnitude spectra (0 for the first sub-window).
//! * **MFCC 1–4** – 26-band mel filterbank (20 Hz to min(8 kHz, fs/2)),
//!   natural log, DCT-II.
//! * **jitter / shimmer** – cycle peaks tracked at the estimated period;
//!   jitter is mean |ΔT| over mean T, shimmer the mean |20·log10(Aᵢ₊₁/Aᵢ)|.
//!   Only sub-windows with at least three cycles contribute.
//! * **HNR** – `10·log10(r / (1 − r))` from the pitch correlation peak `r`.
//! * **H1–H2, H1–A3** – dB differences between harmonic peaks at F0, 2·F0
//!   and the harmonic nearest F3.
//! * **F1–F3** – LPC (order 2 + fs/1000, pre-emphasis 0.97) root angles and
//!   radii; roots below 90 Hz or with bandwidth ≥ 700 Hz are discarded.
//!   Amplitude is the harmonic peak at the formant relative to H1, dB.
//! * **alpha ratio** – energy 50–1000 Hz over 1–5 kHz, dB.
//! * **Hammarberg index** – peak power 0–2 kHz over 2–5 kHz, dB.
//! * **spectral slopes** – least-squares slope of the dB spectrum against
//!   log2 frequency over 0–500 Hz and 500–1500 Hz, dB/octave.
//!
//! Functionals: `amean` is the arithmetic mean, `stddevNorm` the population
//! standard deviation over |mean| (0 when the mean is 0), percentiles are
//! linearly interpolated, slopes are per-second increments between
//! consecutive (voiced, for F0) sub-windows split by sign. `V`/`UV`
//! suffixes restrict to voiced/unvoiced sub-windows. A functional with no
//! contributing sub-window is 0. Every dB or log conversion floors its
//! argument at 1e-10.

mod functionals;
mod io;
mod lld;
mod lpc;
mod pitch;
mod spectrum;

pub use functionals::{apply_functionals, coefficient_of_variation, mean, percentile};
pub use io::{read_feature_cache, read_feature_csv, write_feature_cache, write_feature_csv};
pub use lld::{semitones, FormantTrack, LldExtractor, LldSeries, N_MFCC};
pub use lpc::{formants, lpc, polynomial_roots, Formant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{frame_1s, FrameSlice, Recording, MIN_SAMPLE_RATE};

/// Version of [`FEATURE_NAMES`]; bump whenever a definition or the order changes.
pub const FEATURE_TABLE_VERSION: u16 = 1;

pub const FEATURE_COUNT: usize = 88;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "F0semitoneFrom27.5Hz_amean",
    "F0semitoneFrom27.5Hz_stddevNorm",
    "F0semitoneFrom27.5Hz_percentile20.0",
    "F0semitoneFrom27.5Hz_percentile50.0",
    "F0semitoneFrom27.5Hz_percentile80.0",
    "F0semitoneFrom27.5Hz_pctlrange0-2",
    "F0semitoneFrom27.5Hz_meanRisingSlope",
    "F0semitoneFrom27.5Hz_stddevRisingSlope",
    "F0semitoneFrom27.5Hz_meanFallingSlope",
    "F0semitoneFrom27.5Hz_stddevFallingSlope",
    "loudness_amean",
    "loudness_stddevNorm",
    "loudness_percentile20.0",
    "loudness_percentile50.0",
    "loudness_percentile80.0",
    "loudness_pctlrange0-2",
    "loudness_meanRisingSlope",
    "loudness_stddevRisingSlope",
    "loudness_meanFallingSlope",
    "loudness_stddevFallingSlope",
    "spectralFlux_amean",
    "spectralFlux_stddevNorm",
    "mfcc1_amean",
    "mfcc1_stddevNorm",
    "mfcc2_amean",
    "mfcc2_stddevNorm",
    "mfcc3_amean",
    "mfcc3_stddevNorm",
    "mfcc4_amean",
    "mfcc4_stddevNorm",
    "jitterLocal_amean",
    "jitterLocal_stddevNorm",
    "shimmerLocaldB_amean",
    "shimmerLocaldB_stddevNorm",
    "HNRdBACF_amean",
    "HNRdBACF_stddevNorm",
    "logRelF0-H1-H2_amean",
    "logRelF0-H1-H2_stddevNorm",
    "logRelF0-H1-A3_amean",
    "logRelF0-H1-A3_stddevNorm",
    "F1frequency_amean",
    "F1frequency_stddevNorm",
    "F1bandwidth_amean",
    "F1bandwidth_stddevNorm",
    "F1amplitudeLogRelF0_amean",
    "F1amplitudeLogRelF0_stddevNorm",
    "F2frequency_amean",
    "F2frequency_stddevNorm",
    "F2bandwidth_amean",
    "F2bandwidth_stddevNorm",
    "F2amplitudeLogRelF0_amean",
    "F2amplitudeLogRelF0_stddevNorm",
    "F3frequency_amean",
    "F3frequency_stddevNorm",
    "F3bandwidth_amean",
    "F3bandwidth_stddevNorm",
    "F3amplitudeLogRelF0_amean",
    "F3amplitudeLogRelF0_stddevNorm",
    "alphaRatioV_amean",
    "alphaRatioV_stddevNorm",
    "hammarbergIndexV_amean",
    "hammarbergIndexV_stddevNorm",
    "slopeV0-500_amean",
    "slopeV0-500_stddevNorm",
    "slopeV500-1500_amean",
    "slopeV500-1500_stddevNorm",
    "spectralFluxV_amean",
    "spectralFluxV_stddevNorm",
    "mfcc1V_amean",
    "mfcc1V_stddevNorm",
    "mfcc2V_amean",
    "mfcc2V_stddevNorm",
    "mfcc3V_amean",
    "mfcc3V_stddevNorm",
    "mfcc4V_amean",
    "mfcc4V_stddevNorm",
    "alphaRatioUV_amean",
    "hammarbergIndexUV_amean",
    "slopeUV0-500_amean",
    "slopeUV500-1500_amean",
    "spectralFluxUV_amean",
    "loudnessPeaksPerSec",
    "VoicedSegmentsPerSec",
    "MeanVoicedSegmentLengthSec",
    "StddevVoicedSegmentLengthSec",
    "MeanUnvoicedSegmentLength",
    "StddevUnvoicedSegmentLength",
    "equivalentSoundLevel_dBp",
];

/// Column index of a feature name.
pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub window_secs: f64,
    pub hop_secs: f64,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub voicing_threshold: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_secs: 0.025,
            hop_secs: 0.010,
            f0_min_hz: 55.0,
            f0_max_hz: 1000.0,
            voicing_threshold: 0.5,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.window_secs > 0.0 && self.window_secs < 1.0) {
            return Err(format!(
                "window_secs must be in (0, 1), got {}",
                self.window_secs
            ));
        }
        if !(self.hop_secs > 0.0 && self.hop_secs <= self.window_secs) {
            return Err(format!(
                "hop_secs must be in (0, window_secs], got {}",
                self.hop_secs
            ));
        }
        if !(self.f0_min_hz > 0.0 && self.f0_min_hz < self.f0_max_hz) {
            return Err("f0_min_hz must be positive and below f0_max_hz".into());
        }
        if !(0.0..1.0).contains(&self.voicing_threshold) {
            return Err("voicing_threshold must be in [0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureVector {
    pub frame_index: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureMatrix {
    pub recording_id: String,
    pub rows: Vec<FrameFeatureVector>,
}

impl FrameFeatureMatrix {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("recording {id}: sample rate {rate} Hz is below {min} Hz")]
    SampleRate { id: String, rate: u32, min: u32 },
    #[error("invalid feature config: {0}")]
    Config(String),
    #[error("feature file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Descriptors of a single frame with a freshly planned extractor.
pub fn extract_llds(frame: &FrameSlice<'_>, cfg: &FeatureConfig) -> LldSeries {
    LldExtractor::new(frame.sample_rate, cfg).extract(frame)
}

/// Frame, describe and summarize a (loudness-normalized) recording. A
/// recording shorter than 1 s yields an empty matrix.
pub fn extract_frame_features(
    rec: &Recording,
    cfg: &FeatureConfig,
) -> Result<FrameFeatureMatrix, FeatureError> {
    cfg.validate().map_err(FeatureError::Config)?;
    if rec.sample_rate < MIN_SAMPLE_RATE {
        return Err(FeatureError::SampleRate {
            id: rec.id.clone(),
            rate: rec.sample_rate,
            min: MIN_SAMPLE_RATE,
        });
    }
    let frames = frame_1s(rec);
    let extractor = LldExtractor::new(rec.sample_rate, cfg);
    let rows = frames
        .frames
        .par_iter()
        .map(|f| apply_functionals(&extractor.extract(f), f.index))
        .collect();
    Ok(FrameFeatureMatrix {
        recording_id: rec.id.clone(),
        rows,
    })
}
