//! Audio input, loudness measurement/normalization and 1 s framing.

mod frame;
mod loudness;
mod wav;

pub use frame::{frame_1s, FrameSet, FrameSlice};
pub use loudness::{
    measure_loudness, normalize_loudness, KWeighting, LoudnessMeasurement, LoudnessReport,
    DEFAULT_TARGET_LUFS,
};
pub use wav::{load_audio, write_wav, MIN_SAMPLE_RATE};

use std::path::PathBuf;

use thiserror::Error;

/// A mono recording with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Recording {
    pub fn new(id: impl Into<String>, samples: Vec<f64>, sample_rate: u32) -> Self {
        Recording {
            id: id.into(),
            samples,
            sample_rate,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    Missing(PathBuf),
    #[error("unsupported audio encoding in {path}: {reason}")]
    Unsupported { path: PathBuf, reason: String },
    #[error("zero-length audio stream: {0}")]
    Empty(PathBuf),
    #[error("sample rate {rate} Hz of {path} is below the {min} Hz minimum")]
    SampleRateTooLow { path: PathBuf, rate: u32, min: u32 },
    #[error("recording {id} is {secs:.3} s long, shorter than one 400 ms gating block")]
    TooShort { id: String, secs: f64 },
    #[error("recording {0} is silent; loudness cannot be normalized")]
    Silent(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}
