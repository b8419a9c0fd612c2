//! Linear prediction and formant estimation from LPC polynomial roots.

use std::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
}

const PRE_EMPHASIS: f64 = 0.97;
const MIN_FORMANT_HZ: f64 = 90.0;
const MAX_BANDWIDTH_HZ: f64 = 700.0;

/// LPC coefficients `a[1..=order]` of `A(z) = 1 + Σ a_k z^-k` by the
/// autocorrelation method (Levinson–Durbin). `None` for zero-energy input or
/// an unstable recursion.
pub fn lpc(signal: &[f64], order: usize) -> Option<Vec<f64>> {
    if signal.len() <= order {
        return None;
    }
    let r: Vec<f64> = (0..=order)
        .map(|lag| {
            signal[lag..]
                .iter()
                .zip(signal)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .collect();
    if r[0] <= 1e-20 {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| a[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return None;
        }
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            return None;
        }
    }
    Some(a[1..].to_vec())
}

/// All complex roots of the monic polynomial
/// `z^n + c[0] z^(n-1) + ... + c[n-1]` by Aberth–Ehrlich iteration.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len();
    // Start on the circle whose radius is the geometric mean of the root
    // moduli.
    let radius = coeffs.last().map_or(1.0, |c| c.abs().powf(1.0 / n as f64));
    let radius = if radius.is_finite() && radius > 1e-3 {
        radius
    } else {
        1.0
    };
    let mut roots: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / n as f64 + 0.4))
        .collect();
    aberth(coeffs, &mut roots, 200);
    roots
}

/// Like [`polynomial_roots`], but starts from `guess` (e.g. the roots of a
/// neighbouring sub-frame) when it has the right length, falling back to
/// the circle start if that does not converge quickly.
pub fn polynomial_roots_near(coeffs: &[f64], guess: &[Complex64]) -> Vec<Complex64> {
    if guess.len() == coeffs.len() && guess.iter().all(|z| z.is_finite()) {
        let mut roots = guess.to_vec();
        if aberth(coeffs, &mut roots, 30) {
            return roots;
        }
    }
    polynomial_roots(coeffs)
}

/// Aberth sweeps in place until every root's relative step is below 1e-13.
/// Returns whether that happened within `max_sweeps`.
fn aberth(coeffs: &[f64], roots: &mut [Complex64], max_sweeps: usize) -> bool {
    let n = roots.len();
    let eval = |z: Complex64| {
        let mut p = Complex64::new(1.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in coeffs {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    };
    let mut done = vec![false; n];
    for _ in 0..max_sweeps {
        let mut active = false;
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (p, dp) = eval(roots[i]);
            if p.norm_sqr() == 0.0 {
                done[i] = true;
                continue;
            }
            let ratio = p / dp;
            let zi = roots[i];
            let (mut rre, mut rim) = (0.0, 0.0);
            for (j, r) in roots.iter().enumerate() {
                let (dre, dim) = (zi.re - r.re, zi.im - r.im);
                let n2 = dre * dre + dim * dim;
                if j != i && n2 != 0.0 {
                    rre += dre / n2;
                    rim -= dim / n2;
                }
            }
            let denom = Complex64::new(1.0, 0.0) - ratio * Complex64::new(rre, rim);
            let step = if denom.norm_sqr() == 0.0 {
                ratio
            } else {
                ratio / denom
            };
            if step.is_finite() {
                roots[i] -= step;
                if step.norm_sqr() < 1e-26 * roots[i].norm_sqr().max(1.0) {
                    done[i] = true;
                } else {
                    active = true;
                }
            } else {
                done[i] = true;
            }
        }
        if !active {
            return true;
        }
    }
    false
}

/// Formant candidates of a windowed sub-frame, sorted by frequency.
pub fn formants(frame: &[f64], window: &[f64], sample_rate: u32) -> Vec<Formant> {
    formants_tracked(frame, window, sample_rate, &mut Vec::new())
}

/// [`formants`] seeded with the LPC roots of the previous sub-frame, which
/// are replaced by this sub-frame's roots.
pub fn formants_tracked(
    frame: &[f64],
    window: &[f64],
    sample_rate: u32,
    roots: &mut Vec<Complex64>,
) -> Vec<Formant> {
    let fs = sample_rate as f64;
    let order = 2 + (sample_rate / 1000) as usize;
    let emphasized: Vec<f64> = frame
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let prev = if i == 0 { 0.0 } else { frame[i - 1] };
            (x - PRE_EMPHASIS * prev) * window[i]
        })
        .collect();
    let Some(a) = lpc(&emphasized, order) else {
        return Vec::new();
    };
    *roots = polynomial_roots_near(&a, roots);
    let mut found: Vec<Formant> = roots
        .iter()
        .filter(|z| z.im > 0.0 && z.norm() > 0.0)
        .map(|z| Formant {
            freq_hz: z.im.atan2(z.re) * fs / (2.0 * PI),
            bandwidth_hz: -z.norm().ln() * fs / PI,
        })
        .filter(|f| {
            f.freq_hz > MIN_FORMANT_HZ
                && f.freq_hz < fs / 2.0 - MIN_FORMANT_HZ
                && f.bandwidth_hz > 0.0
                && f.bandwidth_hz < MAX_BANDWIDTH_HZ
        })
        .collect();
    found.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_known_polynomial() {
        // (z-0.5)(z+0.25)(z^2 - 2*0.9*cos(0.7) z + 0.81)
        let c = 0.9 * 0.7f64.cos();
        let quad = [1.0, -2.0 * c, 0.81];
        let lin = [1.0, -0.25, -0.125]; // (z-0.5)(z+0.25)
        let mut prod = [0.0; 5];
        for (i, a) in lin.iter().enumerate() {
            for (j, b) in quad.iter().enumerate() {
                prod[i + j] += a * b;
            }
        }
        let mut roots = polynomial_roots(&prod[1..]);
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let expect_pair = Complex64::from_polar(0.9, 0.7);
        assert!(roots.iter().any(|r| (r - expect_pair).norm() < 1e-10));
        assert!(roots
            .iter()
            .any(|r| (r - expect_pair.conj()).norm() < 1e-10));
        assert!(roots
            .iter()
            .any(|r| (r - Complex64::new(0.5, 0.0)).norm() < 1e-10));
        assert!(roots
            .iter()
            .any(|r| (r - Complex64::new(-0.25, 0.0)).norm() < 1e-10));
    }

    #[test]
    fn warm_start_finds_the_same_roots() {
        let c = [0.3, -0.2, 0.15, 0.05, -0.1, 0.02];
        let cold = polynomial_roots(&c);
        let guess: Vec<Complex64> = cold
            .iter()
            .map(|z| z * 1.02 + Complex64::new(0.01, -0.01))
            .collect();
        let warm = polynomial_roots_near(&c, &guess);
        for z in &cold {
            assert!(warm.iter().any(|w| (w - z).norm() < 1e-10));
        }
        // A guess of the wrong length falls back to the circle start.
        assert_eq!(polynomial_roots_near(&c, &[]).len(), c.len());
    }

    #[test]
    fn single_resonance_recovered() {
        // Impulse train through a two-pole resonator at 700 Hz, 80 Hz bandwidth.
        let fs = 16_000u32;
        let r = (-PI * 80.0 / fs as f64).exp();
        let theta = 2.0 * PI * 700.0 / fs as f64;
        let (a1, a2) = (-2.0 * r * theta.cos(), r * r);
        let mut y = vec![0.0; 400];
        for n in 0..400 {
            let x = if n % 100 == 0 { 1.0 } else { 0.0 };
            let y1 = if n >= 1 { y[n - 1] } else { 0.0 };
            let y2 = if n >= 2 { y[n - 2] } else { 0.0 };
            y[n] = x - a1 * y1 - a2 * y2;
        }
        let window: Vec<f64> = (0..400)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / 399.0).cos())
            .collect();
        let f = formants(&y, &window, fs);
        assert!(
            f.iter().any(|f| (f.freq_hz - 700.0).abs() < 40.0),
            "formants {f:?}"
        );
    }

    #[test]
    fn silence_has_no_lpc() {
        assert!(lpc(&[0.0; 100], 10).is_none());
    }
}
