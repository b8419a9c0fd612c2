//! Synthetic speech-like corpus with class-dependent prosody.
//!
//! Each recording alternates voiced segments and pauses. Voiced segments are
//! a sawtooth plus noise passed through three formant resonators, with a
//! slowly varying F0 contour and amplitude modulation. AD voices get flatter
//! intonation, weaker modulation and more pausing. The pseudo-MMSE decreases
//! linearly with the realized pause fraction.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{write_wav, AudioError, Recording};
use crate::config::stage_seed;
use crate::manifest::{write_manifest, Gender, ManifestEntry, ManifestError};
use crate::models::Group;

const FORMANTS: [(f64, f64); 3] = [(500.0, 80.0), (1500.0, 110.0), (2500.0, 160.0)];
const PAUSE_NOISE: f64 = 1e-3;
const AM_RATE_HZ: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams {
    /// Standard deviation of the F0 contour in semitones.
    pub f0_variability_st: f64,
    /// Range the per-recording pause fraction is drawn from.
    pub pause_ratio: (f64, f64),
    /// Depth of the syllable-rate amplitude modulation, in `[0, 1)`.
    pub am_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub cn: ClassParams,
    pub ad: ClassParams,
    pub duration_secs: f64,
    pub sample_rate: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            cn: ClassParams {
                f0_variability_st: 3.0,
                pause_ratio: (0.10, 0.25),
                am_depth: 0.5,
            },
            ad: ClassParams {
                f0_variability_st: 0.8,
                pause_ratio: (0.35, 0.55),
                am_depth: 0.15,
            },
            duration_secs: 30.0,
            sample_rate: 16_000,
        }
    }
}

impl SynthSpec {
    /// Both classes share the CN parameters.
    pub fn null() -> Self {
        let base = SynthSpec::default();
        SynthSpec {
            ad: base.cn,
            ..base
        }
    }

    pub fn params(&self, group: Group) -> &ClassParams {
        match group {
            Group::Cn => &self.cn,
            Group::Ad => &self.ad,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |r: String| Err(SynthError::Spec(r));
        if !(self.duration_secs >= 2.0) {
            return bad(format!("duration {} s is below 2 s", self.duration_secs));
        }
        if self.sample_rate < 16_000 {
            return bad(format!(
                "sample rate {} Hz is below 16000 Hz",
                self.sample_rate
            ));
        }
        for (name, p) in [("cn", &self.cn), ("ad", &self.ad)] {
            let (lo, hi) = p.pause_ratio;
            if !(0.0 <= lo && lo <= hi && hi < 0.9) {
                return bad(format!(
                    "{name}.pause_ratio ({lo}, {hi}) must satisfy 0 ≤ lo ≤ hi < 0.9"
                ));
            }
            if !(0.0..1.0).contains(&p.am_depth) {
                return bad(format!("{name}.am_depth {} outside [0, 1)", p.am_depth));
            }
            if !(0.0..=12.0).contains(&p.f0_variability_st) {
                return bad(format!(
                    "{name}.f0_variability_st {} outside [0, 12]",
                    p.f0_variability_st
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    Spec(String),
    #[error("need at least 2 recordings per class, got {0}")]
    TooFew(usize),
    #[error("test split of {test} per class leaves fewer than 2 training recordings out of {n}")]
    Split { test: usize, n: usize },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Generated signal plus the parameters it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub recording: Recording,
    pub pause_fraction: f64,
}

struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, fs: f64) -> Self {
        let r = (-PI * bandwidth / fs).exp();
        let theta = 2.0 * PI * freq / fs;
        Resonator {
            a1: 2.0 * r * theta.cos(),
            a2: -r * r,
            gain: 1.0 - r,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// One recording for `group`; deterministic in `seed`.
pub fn synthesize_recording(
    id: &str,
    params: &ClassParams,
    base_f0_hz: f64,
    duration_secs: f64,
    sample_rate: u32,
    seed: u64,
) -> SynthRecording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = sample_rate as f64;
    let n = (duration_secs * fs).round() as usize;
    let target_pause = rng.random_range(params.pause_ratio.0..=params.pause_ratio.1);

    // Voiced/pause mask.
    let mut voiced = vec![false; n];
    let mut pos = (rng.random_range(0.05..0.3) * fs) as usize;
    while pos < n {
        let seg = (rng.random_range(0.4..1.2) * fs) as usize;
        let end = (pos + seg).min(n);
        voiced[pos..end].iter_mut().for_each(|v| *v = true);
        let mean_pause = seg as f64 * target_pause / (1.0 - target_pause);
        pos = end + (mean_pause * rng.random_range(0.7..1.3)) as usize;
    }
    let pause_fraction = voiced.iter().filter(|v| !**v).count() as f64 / n as f64;

    // Two incommensurate sinusoids; unit variance overall.
    let phases: [f64; 3] = [
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
    ];
    let mut resonators: Vec<Resonator> = FORMANTS
        .iter()
        .map(|&(f, b)| Resonator::new(f, b, fs))
        .collect();
    let mut phase = 0.0;
    let mut samples = Vec::with_capacity(n);
    for (i, &is_voiced) in voiced.iter().enumerate() {
        let t = i as f64 / fs;
        let noise: f64 = rng.random_range(-1.0..1.0);
        if !is_voiced {
            for r in &mut resonators {
                r.tick(0.0);
            }
            samples.push(PAUSE_NOISE * noise);
            continue;
        }
        let contour =
            (2.0 * PI * 0.7 * t + phases[0]).sin() + (2.0 * PI * 1.9 * t + phases[1]).sin();
        let f0 = base_f0_hz * 2f64.powf(params.f0_variability_st * contour / 12.0);
        phase = (phase + f0 / fs).fract();
        let source = 2.0 * phase - 1.0 + 0.05 * noise;
        let mut y = source;
        for r in &mut resonators {
            y = r.tick(y);
        }
        let am = 1.0 + params.am_depth * (2.0 * PI * AM_RATE_HZ * t + phases[2]).sin();
        samples.push(y * am);
    }
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|s| *s *= 0.5 / peak);
    }
    SynthRecording {
        recording: Recording::new(id, samples, sample_rate),
        pause_fraction,
    }
}

/// `round(33 − 40 · pause_fraction)` clamped to `[0, 30]`.
pub fn pseudo_mmse(pause_fraction: f64) -> f64 {
    (33.0 - 40.0 * pause_fraction).round().clamp(0.0, 30.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub all: Vec<ManifestEntry>,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

/// Writes `wav/<id>.wav`, `manifest.csv`, `train.csv` and `test.csv` under
/// `out_dir`. The last `test_per_class` recordings of each class form the
/// test split. Ages are drawn from the same range for both classes and
/// genders alternate within each class.
pub fn generate_synthetic_corpus(
    spec: &SynthSpec,
    n_per_class: usize,
    test_per_class: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    if n_per_class < 2 {
        return Err(SynthError::TooFew(n_per_class));
    }
    if n_per_class < test_per_class + 2 {
        return Err(SynthError::Split {
            test: test_per_class,
            n: n_per_class,
        });
    }
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|source| SynthError::Io {
        path: wav_dir.clone(),
        source,
    })?;
    let base_seed = stage_seed(seed, "synth");
    let (mut all, mut train, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for group in Group::ALL {
        for k in 0..n_per_class {
            let id = format!("{}{k:03}", group.to_string().to_ascii_lowercase());
            let rec_seed = base_seed
                ^ ((group.index() as u64) << 32 | k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(rec_seed);
            let gender = if k % 2 == 0 {
                Gender::Female
            } else {
                Gender::Male
            };
            let base_f0 = match gender {
                Gender::Female => 200.0,
                Gender::Male => 115.0,
            } * rng.random_range(0.9..1.1);
            let age = rng.random_range(60.0f64..85.0).round();
            let synth = synthesize_recording(
                &id,
                spec.params(group),
                base_f0,
                spec.duration_secs,
                spec.sample_rate,
                rng.random(),
            );
            let rel = PathBuf::from("wav").join(format!("{id}.wav"));
            write_wav(&out_dir.join(&rel), &synth.recording)?;
            let entry = ManifestEntry {
                id,
                audio_path: rel,
                group: Some(group),
                mmse: Some(pseudo_mmse(synth.pause_fraction)),
                age,
                gender,
                language: "en".into(),
            };
            if k < n_per_class - test_per_class {
                train.push(entry.clone());
            } else {
                test.push(entry.clone());
            }
            all.push(entry);
        }
    }
    write_manifest(&out_dir.join("manifest.csv"), &all)?;
    write_manifest(&out_dir.join("train.csv"), &train)?;
    write_manifest(&out_dir.join("test.csv"), &test)?;
    let resolve = |v: Vec<ManifestEntry>| -> Vec<ManifestEntry> {
        v.into_iter()
            .map(|e| ManifestEntry {
                audio_path: out_dir.join(&e.audio_path),
                ..e
            })
            .collect()
    };
    Ok(SynthCorpus {
        all: resolve(all),
        train: resolve(train),
        test: resolve(test),
    })
}
