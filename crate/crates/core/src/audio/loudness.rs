//! Integrated loudness after ITU-R BS.1770 and two-pass gain normalization.
//!
//! The measurement K-weights the signal (high-shelf then high-pass biquad),
//! computes the mean square over 400 ms blocks with a 100 ms step, drops
//! blocks below −70 LUFS, then drops blocks more than 10 LU below the
//! loudness of the remaining blocks.

use std::f64::consts::PI;

use super::{AudioError, Recording};

pub const DEFAULT_TARGET_LUFS: f64 = -23.0;

const ABSOLUTE_GATE_LUFS: f64 = -70.0;
const RELATIVE_GATE_LU: f64 = -10.0;
const LOUDNESS_OFFSET: f64 = -0.691;
/// Gains smaller than this (in dB) are treated as zero and leave samples untouched.
const UNITY_GAIN_EPS_DB: f64 = 1e-6;

/// Direct-form-I biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn run(&self, input: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        input
            .iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2
                    - self.a[0] * y1
                    - self.a[1] * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }
}

/// The two-stage K-weighting pre-filter for a given sample rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KWeighting {
    pub shelf: Biquad,
    pub high_pass: Biquad,
}

impl KWeighting {
    pub fn new(sample_rate: u32) -> Self {
        let fs = sample_rate as f64;

        // Stage 1: high shelf modelling the acoustic effect of the head.
        let gain_db = 3.999_843_853_973_347;
        let q = 0.707_175_236_955_419_3;
        let fc = 1_681.974_450_955_532;
        let k = (PI * fc / fs).tan();
        let vh = 10f64.powf(gain_db / 20.0);
        let vb = vh.powf(0.499_666_774_154_541_6);
        let a0 = 1.0 + k / q + k * k;
        let shelf = Biquad {
            b: [
                (vh + vb * k / q + k * k) / a0,
                2.0 * (k * k - vh) / a0,
                (vh - vb * k / q + k * k) / a0,
            ],
            a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
        };

        // Stage 2: RLB high-pass.
        let q = 0.500_327_037_323_877_3;
        let fc = 38.135_470_876_024_44;
        let k = (PI * fc / fs).tan();
        let a0 = 1.0 + k / q + k * k;
        let high_pass = Biquad {
            b: [1.0, -2.0, 1.0],
            a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
        };
        KWeighting { shelf, high_pass }
    }

    pub fn apply(&self, samples: &[f64]) -> Vec<f64> {
        self.high_pass.run(&self.shelf.run(samples))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoudnessMeasurement {
    /// Integrated loudness in LUFS; `-inf` when every block is gated out.
    pub integrated_lufs: f64,
    /// Blocks surviving both gates.
    pub gating_block_count: usize,
}

impl LoudnessMeasurement {
    pub fn is_silent(&self) -> bool {
        self.integrated_lufs == f64::NEG_INFINITY
    }
}

/// Per-recording outcome of [`normalize_loudness`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoudnessReport {
    pub recording_id: String,
    pub integrated_lufs: f64,
    pub gating_block_count: usize,
    pub target_lufs: f64,
    pub applied_gain_db: f64,
    pub clipped_samples: usize,
}

fn block_loudness(mean_square: f64) -> f64 {
    LOUDNESS_OFFSET + 10.0 * mean_square.log10()
}

pub fn measure_loudness(rec: &Recording) -> Result<LoudnessMeasurement, AudioError> {
    let fs = rec.sample_rate as f64;
    let block = (0.4 * fs).round() as usize;
    let step = (0.1 * fs).round() as usize;
    if rec.samples.len() < block || block == 0 {
        return Err(AudioError::TooShort {
            id: rec.id.clone(),
            secs: rec.duration_secs(),
        });
    }

    let weighted = KWeighting::new(rec.sample_rate).apply(&rec.samples);
    let mut prefix = Vec::with_capacity(weighted.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for z in &weighted {
        acc += z * z;
        prefix.push(acc);
    }

    let powers: Vec<f64> = (0..)
        .map(|j| j * step)
        .take_while(|start| start + block <= weighted.len())
        .map(|start| ((prefix[start + block] - prefix[start]) / block as f64).max(0.0))
        .collect();

    let above_absolute: Vec<f64> = powers
        .iter()
        .copied()
        .filter(|&p| p > 0.0 && block_loudness(p) > ABSOLUTE_GATE_LUFS)
        .collect();
    if above_absolute.is_empty() {
        return Ok(LoudnessMeasurement {
            integrated_lufs: f64::NEG_INFINITY,
            gating_block_count: 0,
        });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let relative_gate = block_loudness(mean(&above_absolute)) + RELATIVE_GATE_LU;
    let gated: Vec<f64> = above_absolute
        .into_iter()
        .filter(|&p| block_loudness(p) > relative_gate)
        .collect();

    Ok(LoudnessMeasurement {
        integrated_lufs: block_loudness(mean(&gated)),
        gating_block_count: gated.len(),
    })
}

/// Measure, then apply one constant gain so the result sits at `target_lufs`.
/// Samples pushed beyond ±1 are hard-clipped and counted.
pub fn normalize_loudness(
    rec: &Recording,
    target_lufs: f64,
) -> Result<(Recording, LoudnessReport), AudioError> {
    let measured = measure_loudness(rec)?;
    if measured.is_silent() {
        return Err(AudioError::Silent(rec.id.clone()));
    }
    let mut gain_db = target_lufs - measured.integrated_lufs;
    let mut clipped = 0;
    let samples = if gain_db.abs() < UNITY_GAIN_EPS_DB {
        gain_db = 0.0;
        rec.samples.clone()
    } else {
        let g = 10f64.powf(gain_db / 20.0);
        rec.samples
            .iter()
            .map(|&s| {
                let v = s * g;
                if v.abs() > 1.0 {
                    clipped += 1;
                    v.clamp(-1.0, 1.0)
                } else {
                    v
                }
            })
            .collect()
    };
    let report = LoudnessReport {
        recording_id: rec.id.clone(),
        integrated_lufs: measured.integrated_lufs,
        gating_block_count: measured.gating_block_count,
        target_lufs,
        applied_gain_db: gain_db,
        clipped_samples: clipped,
    };
    Ok((
        Recording::new(rec.id.clone(), samples, rec.sample_rate),
        report,
    ))
}
