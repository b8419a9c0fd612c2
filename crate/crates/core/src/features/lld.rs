//! Short-time low-level descriptors over 25 ms sub-windows.

use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use super::lpc::{self, Formant};
use super::pitch;
use super::spectrum::{db, hamming, MelCepstrum, PowerSpectrum};
use super::FeatureConfig;
use crate::audio::FrameSlice;

pub const N_MFCC: usize = 4;

/// Per-formant descriptors of one voiced sub-window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormantTrack {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
    /// Harmonic peak at the formant relative to the first harmonic, dB.
    pub amplitude_rel_h1_db: f64,
}

/// Low-level descriptor trajectories of one frame.
///
/// Every per-sub-window series has `len()` entries. `jitter_local` and
/// `shimmer_local_db` are the exception: they hold only the voiced
/// sub-windows where at least three pitch cycles were located, so they are
/// empty for unvoiced or silent frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LldSeries {
    pub hop_secs: f64,
    pub frame_secs: f64,
    pub voiced: Vec<bool>,
    /// Semitones above 27.5 Hz; 0 when unvoiced.
    pub f0_semitone: Vec<f64>,
    pub loudness: Vec<f64>,
    /// Mean square of the raw sub-window samples.
    pub intensity: Vec<f64>,
    pub spectral_flux: Vec<f64>,
    pub mfcc: Vec<[f64; N_MFCC]>,
    pub jitter_local: Vec<f64>,
    pub shimmer_local_db: Vec<f64>,
    pub hnr_db: Vec<f64>,
    pub h1_h2_db: Vec<f64>,
    /// `None` when no third formant was found.
    pub h1_a3_db: Vec<Option<f64>>,
    pub formants: Vec<[Option<FormantTrack>; 3]>,
    pub alpha_ratio_db: Vec<f64>,
    pub hammarberg_db: Vec<f64>,
    pub slope_0_500: Vec<f64>,
    pub slope_500_1500: Vec<f64>,
}

impl LldSeries {
    pub fn len(&self) -> usize {
        self.voiced.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voiced.is_empty()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.voiced.iter().filter(|&&v| v).count() as f64 / self.len() as f64
        }
    }
}

/// Semitones above 27.5 Hz.
pub fn semitones(f0_hz: f64) -> f64 {
    (12.0 * (f0_hz / 27.5).log2()).max(0.0)
}

/// Reusable descriptor extractor for one sample rate. Holds the FFT plans,
/// analysis window and mel filterbank.
pub struct LldExtractor {
    sample_rate: u32,
    win_len: usize,
    hop_len: usize,
    nfft: usize,
    window: Vec<f64>,
    spectrum_fft: Arc<dyn RealToComplex<f64>>,
    acf_len: usize,
    acf_forward: Arc<dyn RealToComplex<f64>>,
    acf_inverse: Arc<dyn ComplexToReal<f64>>,
    mel: MelCepstrum,
    min_lag: usize,
    max_lag: usize,
    voicing_threshold: f64,
}

struct SubWindow {
    voiced: Option<pitch::PitchEstimate>,
    loudness: f64,
    intensity: f64,
    normalized_magnitude: Vec<f64>,
    mfcc: [f64; N_MFCC],
    jitter: Option<f64>,
    shimmer: Option<f64>,
    hnr_db: f64,
    h1_h2_db: f64,
    h1_a3_db: Option<f64>,
    formants: [Option<FormantTrack>; 3],
    alpha_ratio_db: f64,
    hammarberg_db: f64,
    slope_0_500: f64,
    slope_500_1500: f64,
}

/// FFT buffers reused across the sub-windows of one frame.
struct Scratch {
    spectrum_in: Vec<f64>,
    spectrum_out: Vec<Complex64>,
    acf_in: Vec<f64>,
    acf_spectrum: Vec<Complex64>,
    fft: Vec<Complex64>,
    /// LPC roots of the last voiced sub-window.
    roots: Vec<Complex64>,
}

impl Scratch {
    fn new(ex: &LldExtractor) -> Self {
        let fft_len = ex
            .spectrum_fft
            .get_scratch_len()
            .max(ex.acf_forward.get_scratch_len())
            .max(ex.acf_inverse.get_scratch_len());
        Scratch {
            spectrum_in: ex.spectrum_fft.make_input_vec(),
            spectrum_out: ex.spectrum_fft.make_output_vec(),
            acf_in: ex.acf_forward.make_input_vec(),
            acf_spectrum: ex.acf_forward.make_output_vec(),
            fft: vec![Complex64::new(0.0, 0.0); fft_len],
            roots: Vec::new(),
        }
    }
}

impl LldExtractor {
    pub fn new(sample_rate: u32, cfg: &FeatureConfig) -> Self {
        let fs = sample_rate as f64;
        let win_len = ((cfg.window_secs * fs).round() as usize).max(8);
        let hop_len = ((cfg.hop_secs * fs).round() as usize).max(1);
        let nfft = win_len.next_power_of_two();
        let acf_len = (2 * win_len).next_power_of_two();
        let mut planner = RealFftPlanner::<f64>::new();
        let min_lag = ((fs / cfg.f0_max_hz).floor() as usize).max(2);
        let max_lag = ((fs / cfg.f0_min_hz).ceil() as usize).min(win_len * 3 / 4);
        LldExtractor {
            sample_rate,
            win_len,
            hop_len,
            nfft,
            window: hamming(win_len),
            spectrum_fft: planner.plan_fft_forward(nfft),
            acf_len,
            acf_forward: planner.plan_fft_forward(acf_len),
            acf_inverse: planner.plan_fft_inverse(acf_len),
            mel: MelCepstrum::new(sample_rate, nfft, N_MFCC),
            min_lag,
            max_lag,
            voicing_threshold: cfg.voicing_threshold,
        }
    }

    /// Number of complete sub-windows in `len` samples.
    pub fn sub_window_count(&self, len: usize) -> usize {
        if len < self.win_len {
            0
        } else {
            (len - self.win_len) / self.hop_len + 1
        }
    }

    pub fn extract(&self, frame: &FrameSlice<'_>) -> LldSeries {
        assert_eq!(frame.sample_rate, self.sample_rate);
        let count = self.sub_window_count(frame.samples.len());
        let mut scratch = Scratch::new(self);
        let subs: Vec<SubWindow> = (0..count)
            .map(|i| {
                let start = i * self.hop_len;
                self.analyse(&frame.samples[start..start + self.win_len], &mut scratch)
            })
            .collect();

        let mut out = LldSeries {
            hop_secs: self.hop_len as f64 / self.sample_rate as f64,
            frame_secs: frame.samples.len() as f64 / self.sample_rate as f64,
            voiced: Vec::with_capacity(count),
            f0_semitone: Vec::with_capacity(count),
            loudness: Vec::with_capacity(count),
            intensity: Vec::with_capacity(count),
            spectral_flux: Vec::with_capacity(count),
            mfcc: Vec::with_capacity(count),
            jitter_local: Vec::new(),
            shimmer_local_db: Vec::new(),
            hnr_db: Vec::with_capacity(count),
            h1_h2_db: Vec::with_capacity(count),
            h1_a3_db: Vec::with_capacity(count),
            formants: Vec::with_capacity(count),
            alpha_ratio_db: Vec::with_capacity(count),
            hammarberg_db: Vec::with_capacity(count),
            slope_0_500: Vec::with_capacity(count),
            slope_500_1500: Vec::with_capacity(count),
        };
        for (i, s) in subs.iter().enumerate() {
            out.voiced.push(s.voiced.is_some());
            out.f0_semitone
                .push(s.voiced.map_or(0.0, |p| semitones(p.f0_hz)));
            out.loudness.push(s.loudness);
            out.intensity.push(s.intensity);
            let flux = if i == 0 {
                0.0
            } else {
                subs[i - 1]
                    .normalized_magnitude
                    .iter()
                    .zip(&s.normalized_magnitude)
                    .map(|(a, b)| (b - a) * (b - a))
                    .sum()
            };
            out.spectral_flux.push(flux);
            out.mfcc.push(s.mfcc);
            out.jitter_local.extend(s.jitter);
            out.shimmer_local_db.extend(s.shimmer);
            out.hnr_db.push(s.hnr_db);
            out.h1_h2_db.push(s.h1_h2_db);
            out.h1_a3_db.push(s.h1_a3_db);
            out.formants.push(s.formants);
            out.alpha_ratio_db.push(s.alpha_ratio_db);
            out.hammarberg_db.push(s.hammarberg_db);
            out.slope_0_500.push(s.slope_0_500);
            out.slope_500_1500.push(s.slope_500_1500);
        }
        out
    }

    fn power_spectrum(&self, x: &[f64], s: &mut Scratch) -> Vec<f64> {
        s.spectrum_in.fill(0.0);
        for ((dst, v), w) in s.spectrum_in.iter_mut().zip(x).zip(&self.window) {
            *dst = v * w;
        }
        self.spectrum_fft
            .process_with_scratch(&mut s.spectrum_in, &mut s.spectrum_out, &mut s.fft)
            .expect("buffer sizes come from the plan");
        s.spectrum_out.iter().map(|c| c.norm_sqr()).collect()
    }

    fn raw_autocorrelation(&self, x: &[f64], s: &mut Scratch) -> Vec<f64> {
        s.acf_in.fill(0.0);
        s.acf_in[..x.len()].copy_from_slice(x);
        self.acf_forward
            .process_with_scratch(&mut s.acf_in, &mut s.acf_spectrum, &mut s.fft)
            .expect("buffer sizes come from the plan");
        for c in s.acf_spectrum.iter_mut() {
            *c = Complex64::new(c.norm_sqr(), 0.0);
        }
        self.acf_inverse
            .process_with_scratch(&mut s.acf_spectrum, &mut s.acf_in, &mut s.fft)
            .expect("power spectrum is real");
        let scale = 1.0 / self.acf_len as f64;
        s.acf_in[..x.len()].iter().map(|v| v * scale).collect()
    }

    fn analyse(&self, x: &[f64], scratch: &mut Scratch) -> SubWindow {
        let intensity = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let power = self.power_spectrum(x, scratch);
        let spec = PowerSpectrum {
            power: &power,
            bin_hz: self.sample_rate as f64 / self.nfft as f64,
        };

        let magnitude: Vec<f64> = power.iter().map(|p| p.sqrt()).collect();
        let total: f64 = magnitude.iter().sum();
        let normalized_magnitude = if total > 0.0 {
            magnitude.iter().map(|m| m / total).collect()
        } else {
            vec![0.0; magnitude.len()]
        };

        let mut mfcc = [0.0; N_MFCC];
        mfcc.copy_from_slice(&self.mel.cepstrum(&power));

        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let raw = self.raw_autocorrelation(&centred, scratch);
        let nacf = pitch::normalized_acf(&centred, &raw, self.max_lag + 1);
        let voiced = if intensity > 1e-10 {
            pitch::estimate_pitch(
                &nacf,
                self.min_lag,
                self.max_lag,
                self.sample_rate,
                self.voicing_threshold,
            )
        } else {
            None
        };

        let mut sub = SubWindow {
            voiced,
            loudness: intensity.powf(0.3),
            intensity,
            normalized_magnitude,
            mfcc,
            jitter: None,
            shimmer: None,
            hnr_db: 0.0,
            h1_h2_db: 0.0,
            h1_a3_db: None,
            formants: [None; 3],
            alpha_ratio_db: db(spec.band_energy(50.0, 1000.0))
                - db(spec.band_energy(1000.0, 5000.0)),
            hammarberg_db: db(spec.band_peak(0.0, 2000.0)) - db(spec.band_peak(2000.0, 5000.0)),
            slope_0_500: spec.slope_db_per_octave(0.0, 500.0),
            slope_500_1500: spec.slope_db_per_octave(500.0, 1500.0),
        };

        if let Some(p) = voiced {
            let marks = pitch::cycle_marks(&centred, p.period);
            sub.jitter = pitch::jitter_local(&marks);
            sub.shimmer = pitch::shimmer_local_db(&marks);
            let r = p.strength.clamp(1e-6, 1.0 - 1e-6);
            sub.hnr_db = 10.0 * (r / (1.0 - r)).log10();

            let half = 0.5 * p.f0_hz;
            let h1 = db(spec.peak_near(p.f0_hz, half));
            let h2 = db(spec.peak_near(2.0 * p.f0_hz, half));
            sub.h1_h2_db = h1 - h2;

            let found: Vec<Formant> =
                lpc::formants_tracked(x, &self.window, self.sample_rate, &mut scratch.roots);
            for (slot, f) in sub.formants.iter_mut().zip(&found) {
                *slot = Some(FormantTrack {
                    freq_hz: f.freq_hz,
                    bandwidth_hz: f.bandwidth_hz,
                    amplitude_rel_h1_db: db(spec.peak_near(f.freq_hz, half)) - h1,
                });
            }
            sub.h1_a3_db = found
                .get(2)
                .map(|f3| h1 - db(spec.peak_near(f3.freq_hz, half)));
        }
        sub
    }
}
