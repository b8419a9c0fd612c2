//! ε-support-vector regression with an RBF kernel, trained by sequential
//! minimal optimization.
//!
//! The dual is solved in the stacked form over `2N` variables
//! `β = (α, α*)` with signs `s = (+1…, −1…)`:
//!
//! ```text
//! min ½ βᵀQβ + pᵀβ   s.t.  sᵀβ = 0,  0 ≤ β ≤ C
//! Q_uv = s_u s_v K(x_u, x_v),  p = (ε − y, ε + y)
//! ```
//!
//! Each iteration picks the maximal-violating pair with second-order
//! working-set selection, updates it analytically, and stops once the
//! KKT gap `max_{up} −s·∇ + max_{low} s·∇` falls below the tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TAU: f64 = 1e-12;

/// MMSE is an integer score on this range; predictions are clamped to it.
pub const MMSE_RANGE: (f64, f64) = (0.0, 30.0);

#[derive(Debug, Error, PartialEq)]
pub enum SvrError {
    #[error("need at least 2 training rows, got {0}")]
    TooFewSamples(usize),
    #[error("RBF width gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("{rows} rows but {targets} targets")]
    TargetCount { rows: usize, targets: usize },
    #[error("expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite training value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvrParams {
    /// RBF width; `None` uses `1 / (d · var(X_scaled))`.
    pub gamma: Option<f64>,
    pub epsilon: f64,
    pub c_box: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            gamma: None,
            epsilon: 0.5,
            c_box: 1.0,
            tolerance: 1e-3,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    /// Scaled training rows with non-zero dual coefficient.
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i − α*_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub c_box: f64,
    pub scale_mean: Vec<f64>,
    pub scale_std: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Final KKT gap.
    pub kkt_gap: f64,
    /// Value of the (maximized) dual objective at the solution.
    pub dual_objective: f64,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d).exp()
}

pub fn train_svr(x: &[Vec<f64>], y: &[f64], params: &SvrParams) -> Result<SvrModel, SvrError> {
    let n = x.len();
    if n < 2 {
        return Err(SvrError::TooFewSamples(n));
    }
    if y.len() != n {
        return Err(SvrError::TargetCount {
            rows: n,
            targets: y.len(),
        });
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(SvrError::Dimension {
            expected: d,
            got: bad.len(),
        });
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(SvrError::NonFinite);
    }
    if let Some(g) = params.gamma {
        if !(g > 0.0) {
            return Err(SvrError::NonPositiveGamma(g));
        }
    }

    // Per-feature standardization (population statistics).
    let scale_mean: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let scale_std: Vec<f64> = (0..d)
        .map(|j| {
            let v = x
                .iter()
                .map(|r| (r[j] - scale_mean[j]).powi(2))
                .sum::<f64>()
                / n as f64;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let xs: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            r.iter()
                .zip(scale_mean.iter().zip(&scale_std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();
    let gamma = params.gamma.unwrap_or_else(|| {
        let all: Vec<f64> = xs.iter().flatten().copied().collect();
        let m = all.iter().sum::<f64>() / all.len().max(1) as f64;
        let var = all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / all.len().max(1) as f64;
        if var > 0.0 && d > 0 {
            1.0 / (d as f64 * var)
        } else {
            1.0 / d.max(1) as f64
        }
    });

    let kernel: Vec<Vec<f64>> = xs
        .iter()
        .map(|a| xs.iter().map(|b| rbf(gamma, a, b)).collect())
        .collect();
    let solution = smo(
        &kernel,
        y,
        params.epsilon,
        params.c_box,
        params.tolerance,
        params.max_iterations,
    );
    if !solution.converged {
        log::warn!(
            "SMO stopped at the iteration cap ({}) with KKT gap {:.3e}",
            solution.iterations,
            solution.kkt_gap
        );
    }

    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for (i, row) in xs.iter().enumerate() {
        let c = solution.beta[i] - solution.beta[i + n];
        if c != 0.0 {
            support_vectors.push(row.clone());
            dual_coef.push(c);
        }
    }
    Ok(SvrModel {
        support_vectors,
        dual_coef,
        bias: -solution.rho,
        gamma,
        epsilon: params.epsilon,
        c_box: params.c_box,
        scale_mean,
        scale_std,
        converged: solution.converged,
        iterations: solution.iterations,
        kkt_gap: solution.kkt_gap,
        dual_objective: -solution.objective,
    })
}

struct SmoSolution {
    beta: Vec<f64>,
    rho: f64,
    objective: f64,
    converged: bool,
    iterations: usize,
    kkt_gap: f64,
}

fn smo(
    kernel: &[Vec<f64>],
    y: &[f64],
    epsilon: f64,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> SmoSolution {
    let n = y.len();
    let m = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let k = |s: usize, t: usize| kernel[s % n][t % n];
    let q = |s: usize, t: usize| sign(s) * sign(t) * k(s, t);
    let p: Vec<f64> = (0..m)
        .map(|t| {
            if t < n {
                epsilon - y[t]
            } else {
                epsilon + y[t - n]
            }
        })
        .collect();

    let mut beta = vec![0.0; m];
    let mut grad = p.clone();
    let in_up = |b: f64, t: usize| (sign(t) > 0.0 && b < c) || (sign(t) < 0.0 && b > 0.0);
    let in_low = |b: f64, t: usize| (sign(t) > 0.0 && b > 0.0) || (sign(t) < 0.0 && b < c);

    let mut iterations = 0;
    let mut converged = false;
    let mut kkt_gap = f64::INFINITY;
    while iterations < max_iter {
        // Select i: maximal -s·G over I_up.
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..m {
            if in_up(beta[t], t) {
                let v = -sign(t) * grad[t];
                if v > g_max {
                    g_max = v;
                    i_sel = Some(t);
                }
            }
        }
        // Select j by second-order gain among I_low.
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_gain = f64::INFINITY;
        for t in 0..m {
            if !in_low(beta[t], t) {
                continue;
            }
            let yg = sign(t) * grad[t];
            g_max2 = g_max2.max(yg);
            if let Some(i) = i_sel {
                let b = g_max + yg;
                if b > 0.0 {
                    let a = k(i, i) + k(t, t) - 2.0 * k(i, t);
                    let a = if a > 0.0 { a } else { TAU };
                    let gain = -(b * b) / a;
                    if gain < best_gain {
                        best_gain = gain;
                        j_sel = Some(t);
                    }
                }
            }
        }
        kkt_gap = g_max + g_max2;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            converged = true;
            kkt_gap = kkt_gap.max(0.0);
            break;
        };
        if kkt_gap < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (beta[i], beta[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if sign(i) != sign(j) {
            let quad = (k(i, i) + k(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (k(i, i) + k(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        beta[i] = ai;
        beta[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Threshold from free variables, else the midpoint of the feasible range.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..m {
        let yg = sign(t) * grad[t];
        if beta[t] >= c {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if beta[t] <= 0.0 {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_count += 1;
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = 0.5
        * beta
            .iter()
            .zip(grad.iter().zip(&p))
            .map(|(b, (g, pp))| b * (g + pp))
            .sum::<f64>();
    SmoSolution {
        beta,
        rho,
        objective,
        converged,
        iterations,
        kkt_gap: if kkt_gap.is_finite() {
            kkt_gap.max(0.0)
        } else {
            0.0
        },
    }
}

impl SvrModel {
    pub fn dim(&self) -> usize {
        self.scale_mean.len()
    }

    fn check(&self, x: &[f64]) -> Result<(), SvrError> {
        if x.len() != self.dim() {
            return Err(SvrError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Decision function without clamping.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64, SvrError> {
        self.check(x)?;
        let scaled: Vec<f64> = x
            .iter()
            .zip(self.scale_mean.iter().zip(&self.scale_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * rbf(self.gamma, sv, &scaled))
            .sum::<f64>()
            + self.bias)
    }

    /// MMSE estimate clamped to `[0, 30]`.
    pub fn predict(&self, x: &[f64]) -> Result<f64, SvrError> {
        Ok(self.predict_raw(x)?.clamp(MMSE_RANGE.0, MMSE_RANGE.1))
    }

    /// `Σ (α_i − α*_i)`, zero at a feasible solution.
    pub fn coefficient_sum(&self) -> f64 {
        self.dual_coef.iter().sum()
    }
}
