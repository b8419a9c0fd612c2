use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioError, Recording};

/// Lowest accepted native sample rate. Band definitions for the spectral
/// descriptors assume at least 8 kHz of bandwidth.
pub const MIN_SAMPLE_RATE: u32 = 16_000;

/// Load a PCM WAV file as a mono recording.
///
/// Integer encodings are scaled by `2^(bits-1)`; multichannel audio is
/// downmixed by averaging the channels. The recording id is the file stem.
pub fn load_audio(path: &Path) -> Result<Recording, AudioError> {
    if !path.exists() {
        return Err(AudioError::Missing(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_rate < MIN_SAMPLE_RATE {
        return Err(AudioError::SampleRateTooLow {
            path: path.to_path_buf(),
            rate: spec.sample_rate,
            min: MIN_SAMPLE_RATE,
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
        (format, bits) => {
            return Err(AudioError::Unsupported {
                path: path.to_path_buf(),
                reason: format!("{bits}-bit {format:?}"),
            })
        }
    };
    let channels = spec.channels.max(1) as usize;
    let samples: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|c| c.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    if samples.is_empty() {
        return Err(AudioError::Empty(path.to_path_buf()));
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Recording::new(id, samples, spec.sample_rate))
}

/// Write a recording as mono 32-bit float WAV.
pub fn write_wav(path: &Path, rec: &Recording) -> Result<(), AudioError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: rec.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &rec.samples {
        writer
            .write_sample(s as f32)
            .map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(source) => AudioError::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::Unsupported => AudioError::Unsupported {
            path: path.to_path_buf(),
            reason: "codec not supported".into(),
        },
        hound::Error::FormatError(reason) => AudioError::Unsupported {
            path: path.to_path_buf(),
            reason: reason.into(),
        },
        other => AudioError::Wav {
            path: path.to_path_buf(),
            source: other,
        },
    }
}
