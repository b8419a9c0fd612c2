//! Autocorrelation pitch tracking and cycle-level perturbation measures.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate {
    pub f0_hz: f64,
    /// Fractional period in samples.
    pub period: f64,
    /// Normalized autocorrelation at the chosen lag, in `[-1, 1]`.
    pub strength: f64,
}

/// Lags whose peak is within this fraction of the best peak count as candidates;
/// the shortest such lag wins, which suppresses sub-harmonic (octave-down) picks.
const CANDIDATE_RATIO: f64 = 0.9;

/// Normalized cross-correlation of the signal with its own lagged copy,
/// `r(τ) / sqrt(E_head(τ) · E_tail(τ))`, from raw autocorrelation values.
pub fn normalized_acf(signal: &[f64], raw: &[f64], max_lag: usize) -> Vec<f64> {
    let n = signal.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for x in signal {
        acc += x * x;
        prefix.push(acc);
    }
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|lag| {
            let head = prefix[n - lag];
            let tail = prefix[n] - prefix[lag];
            let denom = (head * tail).sqrt();
            if denom <= 1e-20 {
                0.0
            } else {
                (raw[lag] / denom).clamp(-1.0, 1.0)
            }
        })
        .collect()
}

/// Pick a pitch period in `[min_lag, max_lag]` from a normalized ACF.
pub fn estimate_pitch(
    nacf: &[f64],
    min_lag: usize,
    max_lag: usize,
    sample_rate: u32,
    voicing_threshold: f64,
) -> Option<PitchEstimate> {
    let max_lag = max_lag.min(nacf.len().saturating_sub(2));
    if min_lag < 1 || min_lag >= max_lag {
        return None;
    }
    let peaks: Vec<usize> = (min_lag..=max_lag)
        .filter(|&t| nacf[t] > 0.0 && nacf[t] >= nacf[t - 1] && nacf[t] >= nacf[t + 1])
        .collect();
    let best = peaks
        .iter()
        .map(|&t| nacf[t])
        .fold(f64::NEG_INFINITY, f64::max);
    if !(best >= voicing_threshold) {
        return None;
    }
    let lag = *peaks.iter().find(|&&t| nacf[t] >= CANDIDATE_RATIO * best)?;

    let (y0, y1, y2) = (nacf[lag - 1], nacf[lag], nacf[lag + 1]);
    let curvature = y0 - 2.0 * y1 + y2;
    let (offset, strength) = if curvature < 0.0 {
        let d = 0.5 * (y0 - y2) / curvature;
        (d, y1 - 0.25 * (y0 - y2) * d)
    } else {
        (0.0, y1)
    };
    let period = lag as f64 + offset;
    Some(PitchEstimate {
        f0_hz: sample_rate as f64 / period,
        period,
        strength: strength.clamp(-1.0, 1.0),
    })
}

/// Interpolated positive peaks, one per pitch cycle.
pub fn cycle_marks(signal: &[f64], period: f64) -> Vec<(f64, f64)> {
    let n = signal.len();
    let p = period.round() as usize;
    if p < 2 || n < 2 * p {
        return Vec::new();
    }
    let search = ((0.2 * period).round() as usize).max(1);
    let argmax = |lo: usize, hi: usize| -> Option<usize> {
        (lo..hi.min(n)).fold(None, |best: Option<usize>, i| match best {
            Some(b) if signal[b] >= signal[i] => Some(b),
            _ => Some(i),
        })
    };
    let refine = |i: usize| -> (f64, f64) {
        if i == 0 || i + 1 >= n {
            return (i as f64, signal[i]);
        }
        let (y0, y1, y2) = (signal[i - 1], signal[i], signal[i + 1]);
        let curvature = y0 - 2.0 * y1 + y2;
        if curvature < 0.0 {
            let d = 0.5 * (y0 - y2) / curvature;
            (i as f64 + d, y1 - 0.25 * (y0 - y2) * d)
        } else {
            (i as f64, y1)
        }
    };

    let mut marks = Vec::new();
    let Some(mut idx) = argmax(0, p) else {
        return marks;
    };
    marks.push(refine(idx));
    loop {
        let centre = idx + p;
        let lo = centre.saturating_sub(search);
        let hi = centre + search + 1;
        if hi > n {
            break;
        }
        match argmax(lo, hi) {
            Some(next) if next > idx => {
                marks.push(refine(next));
                idx = next;
            }
            _ => break,
        }
    }
    marks
}

/// Local jitter: mean absolute difference of consecutive periods over the mean
/// period. Needs at least three cycle marks.
pub fn jitter_local(marks: &[(f64, f64)]) -> Option<f64> {
    if marks.len() < 3 {
        return None;
    }
    let periods: Vec<f64> = marks.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let mean_period = periods.iter().sum::<f64>() / periods.len() as f64;
    if mean_period <= 0.0 {
        return None;
    }
    let diff =
        periods.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (periods.len() - 1) as f64;
    Some(diff / mean_period)
}

/// Local shimmer in dB: mean absolute log ratio of consecutive cycle peak
/// amplitudes.
pub fn shimmer_local_db(marks: &[(f64, f64)]) -> Option<f64> {
    if marks.len() < 3 || marks.iter().any(|m| m.1 <= 0.0) {
        return None;
    }
    let total: f64 = marks
        .windows(2)
        .map(|w| (20.0 * (w[1].1 / w[0].1).log10()).abs())
        .sum();
    Some(total / (marks.len() - 1) as f64)
}
