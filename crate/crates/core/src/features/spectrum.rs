//! Spectral helpers for the short-time descriptors.

use std::f64::consts::PI;

/// Floor applied before any log or dB conversion.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn db(power: f64) -> f64 {
    10.0 * power.max(LOG_FLOOR).log10()
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Power spectrum bins `0..=nfft/2` paired with their centre frequencies.
pub struct PowerSpectrum<'a> {
    pub power: &'a [f64],
    pub bin_hz: f64,
}

impl PowerSpectrum<'_> {
    fn bins_in(&self, lo_hz: f64, hi_hz: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let bin_hz = self.bin_hz;
        let n = self.power.len();
        let freq = move |k: usize| k as f64 * bin_hz;
        // Index range of bins with lo_hz <= f <= hi_hz, nudged so the
        // comparison matches the per-bin test exactly.
        let guess = |hz: f64| {
            if hz.is_nan() {
                0
            } else {
                ((hz / bin_hz).max(0.0).min(n as f64)) as usize
            }
        };
        let mut start = guess(lo_hz).min(n);
        while start > 0 && freq(start - 1) >= lo_hz {
            start -= 1;
        }
        while start < n && !(freq(start) >= lo_hz) {
            start += 1;
        }
        let mut end = guess(hi_hz).max(start).min(n);
        while end > start && !(freq(end - 1) <= hi_hz) {
            end -= 1;
        }
        while end < n && freq(end) <= hi_hz {
            end += 1;
        }
        (start..end).map(move |k| (freq(k), self.power[k]))
    }

    pub fn band_energy(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        self.bins_in(lo_hz, hi_hz).map(|(_, p)| p).sum()
    }

    pub fn band_peak(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        self.bins_in(lo_hz, hi_hz)
            .map(|(_, p)| p)
            .fold(0.0, f64::max)
    }

    /// Peak power within `±half_width_hz` of `centre_hz`, always covering at
    /// least the nearest bin.
    pub fn peak_near(&self, centre_hz: f64, half_width_hz: f64) -> f64 {
        let half = half_width_hz.max(self.bin_hz);
        self.band_peak(centre_hz - half, centre_hz + half)
    }

    /// Least-squares slope of the dB spectrum against log2 frequency, in dB
    /// per octave, over bins with `lo_hz <= f <= hi_hz` and `f > 0`.
    pub fn slope_db_per_octave(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let points: Vec<(f64, f64)> = self
            .bins_in(lo_hz, hi_hz)
            .filter(|&(f, _)| f > 0.0)
            .map(|(f, p)| (f.log2(), db(p)))
            .collect();
        if points.len() < 2 {
            return 0.0;
        }
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx <= 0.0 {
            0.0
        } else {
            sxy / sxx
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank followed by a DCT-II, yielding cepstral
/// coefficients 1..=n_ceps.
pub struct MelCepstrum {
    filters: Vec<Vec<(usize, f64)>>,
    /// DCT-II basis, one row per coefficient.
    dct: Vec<Vec<f64>>,
}

impl MelCepstrum {
    pub const BANDS: usize = 26;
    pub const LOW_HZ: f64 = 20.0;
    pub const HIGH_HZ: f64 = 8000.0;

    pub fn new(sample_rate: u32, nfft: usize, n_ceps: usize) -> Self {
        let high = Self::HIGH_HZ.min(sample_rate as f64 / 2.0);
        let (mlo, mhi) = (hz_to_mel(Self::LOW_HZ), hz_to_mel(high));
        let edges: Vec<f64> = (0..Self::BANDS + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (Self::BANDS + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / nfft as f64;
        let filters = (0..Self::BANDS)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..=nfft / 2)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        let m = Self::BANDS as f64;
        let dct = (1..=n_ceps)
            .map(|n| {
                (0..Self::BANDS)
                    .map(|j| (PI * n as f64 * (j as f64 + 0.5) / m).cos())
                    .collect()
            })
            .collect();
        MelCepstrum { filters, dct }
    }

    pub fn cepstrum(&self, power: &[f64]) -> Vec<f64> {
        let log_energies: Vec<f64> = self
            .filters
            .iter()
            .map(|f| {
                f.iter()
                    .map(|&(k, w)| w * power[k])
                    .sum::<f64>()
                    .max(LOG_FLOOR)
                    .ln()
            })
            .collect();
        self.dct
            .iter()
            .map(|row| row.iter().zip(&log_energies).map(|(c, e)| c * e).sum())
            .collect()
    }
}
