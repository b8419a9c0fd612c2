//! Statistical functionals mapping descriptor trajectories onto the 88-value
//! frame vector. Ordering is fixed by [`FEATURE_NAMES`](super::FEATURE_NAMES).

use super::lld::{LldSeries, N_MFCC};
use super::{FrameFeatureVector, FEATURE_COUNT};

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Population standard deviation over the absolute mean; 0 for empty input or
/// a zero mean.
pub fn coefficient_of_variation(v: &[f64]) -> f64 {
    let m = mean(v);
    if v.is_empty() || m.abs() < 1e-12 {
        return 0.0;
    }
    std_dev(v) / m.abs()
}

pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Linearly interpolated percentile, `q` in `[0, 1]`, over an unsorted slice.
pub fn percentile(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean and standard deviation of the positive and negative per-second
/// increments of a contour. Falling slopes are reported as magnitudes.
fn slope_stats(contour: &[f64], step_secs: f64) -> [f64; 4] {
    let deltas: Vec<f64> = contour
        .windows(2)
        .map(|w| (w[1] - w[0]) / step_secs)
        .collect();
    let rising: Vec<f64> = deltas.iter().copied().filter(|d| *d > 0.0).collect();
    let falling: Vec<f64> = deltas.iter().filter(|d| **d < 0.0).map(|d| -d).collect();
    [
        mean(&rising),
        std_dev(&rising),
        mean(&falling),
        std_dev(&falling),
    ]
}

/// Ten functionals: mean, CoV, 20/50/80th percentile, 20–80 range, rising and
/// falling slope mean/std.
fn contour_block(values: &[f64], slope_values: &[f64], step_secs: f64, out: &mut Vec<f64>) {
    let p20 = percentile(values, 0.2);
    let p80 = percentile(values, 0.8);
    out.extend([
        mean(values),
        coefficient_of_variation(values),
        p20,
        percentile(values, 0.5),
        p80,
        p80 - p20,
    ]);
    out.extend(slope_stats(slope_values, step_secs));
}

fn mean_cov(values: &[f64], out: &mut Vec<f64>) {
    out.extend([mean(values), coefficient_of_variation(values)]);
}

fn select<T: Copy>(series: &[T], mask: &[bool], want: bool) -> Vec<T> {
    series
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m == want)
        .map(|(v, _)| *v)
        .collect()
}

/// Lengths in seconds of the maximal runs of `want` in `mask`.
fn run_lengths(mask: &[bool], want: bool, step_secs: f64) -> Vec<f64> {
    let mut runs = Vec::new();
    let mut current = 0usize;
    for &m in mask {
        if m == want {
            current += 1;
        } else if current > 0 {
            runs.push(current as f64 * step_secs);
            current = 0;
        }
    }
    if current > 0 {
        runs.push(current as f64 * step_secs);
    }
    runs
}

fn peak_count(v: &[f64]) -> usize {
    v.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2]).count()
}

pub fn apply_functionals(llds: &LldSeries, frame_index: usize) -> FrameFeatureVector {
    let mut out = Vec::with_capacity(FEATURE_COUNT);
    let voiced = &llds.voiced;
    let hop = llds.hop_secs;

    // Voiced-only F0 contour; slopes across consecutive voiced sub-windows.
    let f0 = select(&llds.f0_semitone, voiced, true);
    contour_block(&f0, &f0, hop, &mut out);
    contour_block(&llds.loudness, &llds.loudness, hop, &mut out);

    mean_cov(&llds.spectral_flux, &mut out);
    for k in 0..N_MFCC {
        let c: Vec<f64> = llds.mfcc.iter().map(|m| m[k]).collect();
        mean_cov(&c, &mut out);
    }
    mean_cov(&llds.jitter_local, &mut out);
    mean_cov(&llds.shimmer_local_db, &mut out);
    mean_cov(&select(&llds.hnr_db, voiced, true), &mut out);
    mean_cov(&select(&llds.h1_h2_db, voiced, true), &mut out);
    let h1_a3: Vec<f64> = select(&llds.h1_a3_db, voiced, true)
        .into_iter()
        .flatten()
        .collect();
    mean_cov(&h1_a3, &mut out);

    let voiced_formants = select(&llds.formants, voiced, true);
    for k in 0..3 {
        let tracks: Vec<_> = voiced_formants.iter().filter_map(|f| f[k]).collect();
        let freq: Vec<f64> = tracks.iter().map(|t| t.freq_hz).collect();
        let bw: Vec<f64> = tracks.iter().map(|t| t.bandwidth_hz).collect();
        let amp: Vec<f64> = tracks.iter().map(|t| t.amplitude_rel_h1_db).collect();
        mean_cov(&freq, &mut out);
        mean_cov(&bw, &mut out);
        mean_cov(&amp, &mut out);
    }

    mean_cov(&select(&llds.alpha_ratio_db, voiced, true), &mut out);
    mean_cov(&select(&llds.hammarberg_db, voiced, true), &mut out);
    mean_cov(&select(&llds.slope_0_500, voiced, true), &mut out);
    mean_cov(&select(&llds.slope_500_1500, voiced, true), &mut out);
    mean_cov(&select(&llds.spectral_flux, voiced, true), &mut out);
    let voiced_mfcc = select(&llds.mfcc, voiced, true);
    for k in 0..N_MFCC {
        let c: Vec<f64> = voiced_mfcc.iter().map(|m| m[k]).collect();
        mean_cov(&c, &mut out);
    }

    out.push(mean(&select(&llds.alpha_ratio_db, voiced, false)));
    out.push(mean(&select(&llds.hammarberg_db, voiced, false)));
    out.push(mean(&select(&llds.slope_0_500, voiced, false)));
    out.push(mean(&select(&llds.slope_500_1500, voiced, false)));
    out.push(mean(&select(&llds.spectral_flux, voiced, false)));

    let secs = if llds.frame_secs > 0.0 {
        llds.frame_secs
    } else {
        1.0
    };
    out.push(peak_count(&llds.loudness) as f64 / secs);
    let voiced_runs = run_lengths(voiced, true, hop);
    let unvoiced_runs = run_lengths(voiced, false, hop);
    out.push(voiced_runs.len() as f64 / secs);
    out.extend([mean(&voiced_runs), std_dev(&voiced_runs)]);
    out.extend([mean(&unvoiced_runs), std_dev(&unvoiced_runs)]);
    out.push(super::spectrum::db(mean(&llds.intensity)));

    assert_eq!(out.len(), FEATURE_COUNT);
    if !voiced.iter().any(|&v| v) {
        log::debug!(
            "frame {frame_index}: voiced_fraction {:.3}; voiced-only functionals imputed as 0",
            llds.voiced_fraction()
        );
    }
    for v in out.iter_mut() {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    FrameFeatureVector {
        frame_index,
        values: out,
    }
}
