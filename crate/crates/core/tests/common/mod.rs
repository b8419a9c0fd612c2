//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- SVR dual

/// ε-SVR dual value `−½βᵀKβ − ε Σ(α+α*) + yᵀβ`, `β = α − α*`.
pub fn svr_dual_value(
    k: &[Vec<f64>],
    y: &[f64],
    eps: f64,
    alpha: &[f64],
    alpha_star: &[f64],
) -> f64 {
    let n = y.len();
    let beta: Vec<f64> = (0..n).map(|i| alpha[i] - alpha_star[i]).collect();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * beta[j] * k[i][j];
        }
    }
    let lin: f64 = (0..n)
        .map(|i| y[i] * beta[i] - eps * (alpha[i] + alpha_star[i]))
        .sum();
    lin - 0.5 * quad
}

/// Euclidean projection of `(a, a*)` onto `{0 ≤ ·≤ c, Σa − Σa* = 0}` by
/// bisection on the multiplier of the equality constraint.
fn project(a: &mut [f64], a_star: &mut [f64], c: f64) {
    let za = a.to_vec();
    let zs = a_star.to_vec();
    let residual = |lambda: f64| -> f64 {
        za.iter().map(|v| (v - lambda).clamp(0.0, c)).sum::<f64>()
            - zs.iter().map(|v| (v + lambda).clamp(0.0, c)).sum::<f64>()
    };
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    for (dst, v) in a.iter_mut().zip(&za) {
        *dst = (v - lambda).clamp(0.0, c);
    }
    for (dst, v) in a_star.iter_mut().zip(&zs) {
        *dst = (v + lambda).clamp(0.0, c);
    }
}

/// Accelerated projected-gradient ascent on the full 2N-variable dual.
/// Returns the best dual value found.
pub fn svr_dual_projected_gradient(
    k: &[Vec<f64>],
    y: &[f64],
    eps: f64,
    c: f64,
    iterations: usize,
) -> f64 {
    let n = y.len();
    // Lipschitz bound of the gradient: 2·max row sum of |K|.
    let lip = 2.0
        * k.iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
    let step = 1.0 / lip;
    let (mut a, mut s) = (vec![0.0; n], vec![0.0; n]);
    let (mut ya, mut ys) = (a.clone(), s.clone());
    let mut t = 1.0f64;
    let mut best = svr_dual_value(k, y, eps, &a, &s);
    for _ in 0..iterations {
        let beta: Vec<f64> = (0..n).map(|i| ya[i] - ys[i]).collect();
        let kb: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| k[i][j] * beta[j]).sum())
            .collect();
        let mut na: Vec<f64> = (0..n)
            .map(|i| ya[i] + step * (y[i] - eps - kb[i]))
            .collect();
        let mut ns: Vec<f64> = (0..n)
            .map(|i| ys[i] + step * (-y[i] - eps + kb[i]))
            .collect();
        project(&mut na, &mut ns, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for i in 0..n {
            ya[i] = na[i] + momentum * (na[i] - a[i]);
            ys[i] = ns[i] + momentum * (ns[i] - s[i]);
        }
        a = na;
        s = ns;
        t = t_next;
        let v = svr_dual_value(k, y, eps, &a, &s);
        if v > best {
            best = v;
        }
    }
    best
}

pub fn rbf_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| {
            x.iter()
                .map(|b| {
                    (-gamma * a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>()).exp()
                })
                .collect()
        })
        .collect()
}

/// Scale rows with stored column statistics.
pub fn scale_rows(x: &[Vec<f64>], mean: &[f64], std: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| {
            r.iter()
                .zip(mean.iter().zip(std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------- KDE NB

/// Sorted-copy percentile with linear interpolation between order
/// statistics.
fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

pub fn silverman(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile(v, 0.75) - quantile(v, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    (1.06 * spread * n.powf(-0.2)).max(1e-6)
}

/// Posterior `[P(CN), P(AD)]` by direct summation of Gaussian kernels,
/// multiplied across features in linear space.
pub fn nb_direct_posterior(x: &[Vec<f64>], is_ad: &[bool], query: &[f64]) -> [f64; 2] {
    let mut joint = [0.0; 2];
    for (k, class_is_ad) in [false, true].into_iter().enumerate() {
        let rows: Vec<&Vec<f64>> = x
            .iter()
            .zip(is_ad)
            .filter(|(_, &a)| a == class_is_ad)
            .map(|(r, _)| r)
            .collect();
        let mut p = rows.len() as f64 / x.len() as f64;
        for (j, &q) in query.iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let h = silverman(&col);
            let sum: f64 = col
                .iter()
                .map(|v| (-(q - v).powi(2) / (2.0 * h * h)).exp())
                .sum();
            p *= sum / (col.len() as f64 * h * (2.0 * PI).sqrt());
        }
        joint[k] = p;
    }
    let z = joint[0] + joint[1];
    [joint[0] / z, joint[1] / z]
}

// ---------------------------------------------------------------- BS.1770

/// Standard 48 kHz K-weighting coefficients: high-shelf then high-pass.
pub const K_SHELF_48K: ([f64; 3], [f64; 3]) = (
    [1.53512485958697, -2.69169618940638, 1.19839281085285],
    [1.0, -1.69065929318241, 0.73248077421585],
);
pub const K_HIGHPASS_48K: ([f64; 3], [f64; 3]) =
    ([1.0, -2.0, 1.0], [1.0, -1.99004745483398, 0.99007225036621]);

fn biquad_response(b: &[f64; 3], a: &[f64; 3], w: f64) -> Complex64 {
    let z1 = Complex64::from_polar(1.0, -w);
    let z2 = z1 * z1;
    (b[0] + b[1] * z1 + b[2] * z2) / (a[0] + a[1] * z1 + a[2] * z2)
}

/// Integrated loudness of a steady full-scale sine at 48 kHz from the
/// analytic K-filter gain: `−0.691 + 10 log10(½ |H(f)|²)`.
pub fn analytic_sine_lufs(freq: f64, amplitude: f64) -> f64 {
    let w = 2.0 * PI * freq / 48_000.0;
    let h = biquad_response(&K_SHELF_48K.0, &K_SHELF_48K.1, w)
        * biquad_response(&K_HIGHPASS_48K.0, &K_HIGHPASS_48K.1, w);
    -0.691 + 10.0 * (0.5 * amplitude * amplitude * h.norm_sqr()).log10()
}

// ---------------------------------------------------------------- k-means

/// Lloyd's algorithm from the given seeds, run until assignments repeat.
pub fn kmeans(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let d = points[0].len();
    let mut assign = vec![usize::MAX; points.len()];
    loop {
        let next: Vec<usize> = points
            .iter()
            .map(|p| {
                (0..centers.len())
                    .min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b])))
                    .unwrap()
            })
            .collect();
        if next == assign {
            return centers;
        }
        assign = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            *center = (0..d)
                .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64)
                .collect();
        }
    }
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

// ---------------------------------------------------------------- logistic

/// Bernoulli log-likelihood computed directly from probabilities.
pub fn logistic_ll(x: &[Vec<f64>], t: &[bool], w: &[f64]) -> f64 {
    x.iter()
        .zip(t)
        .map(|(r, &ti)| {
            let eta = w[0] + r.iter().zip(&w[1..]).map(|(a, b)| a * b).sum::<f64>();
            let p = 1.0 / (1.0 + (-eta).exp());
            if ti {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// Coarse-to-fine grid maximization of the log-likelihood over
/// (intercept, w1, w2).
pub fn logistic_grid_max(x: &[Vec<f64>], t: &[bool]) -> (f64, [f64; 3]) {
    let mut center = [0.0; 3];
    let mut half = 4.0;
    let mut best = (logistic_ll(x, t, &center), center);
    const STEPS: i32 = 10;
    for _ in 0..30 {
        for i in -STEPS..=STEPS {
            for j in -STEPS..=STEPS {
                for k in -STEPS..=STEPS {
                    let w = [
                        center[0] + half * i as f64 / STEPS as f64,
                        center[1] + half * j as f64 / STEPS as f64,
                        center[2] + half * k as f64 / STEPS as f64,
                    ];
                    let ll = logistic_ll(x, t, &w);
                    if ll > best.0 {
                        best = (ll, w);
                    }
                }
            }
        }
        center = best.1;
        half *= 0.5;
    }
    best
}

// ---------------------------------------------------------------- signals

pub fn sine(freq: f64, amplitude: f64, secs: f64, fs: u32) -> Vec<f64> {
    let n = (secs * fs as f64) as usize;
    (0..n)
        .map(|i| amplitude * (2.0 * PI * freq * i as f64 / fs as f64).sin())
        .collect()
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}
