//! Binary logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum LogisticError {
    #[error("need at least {needed} rows for {covariates} covariates, got {rows}")]
    TooFewRows {
        rows: usize,
        covariates: usize,
        needed: usize,
    },
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("covariate matrix is rank deficient")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub converged: bool,
    /// The fitted linear predictor separates the classes perfectly, so the
    /// maximum-likelihood estimate does not exist and weights are diverging.
    pub separated: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log σ(z)` without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of `(intercept, weights)`.
pub fn log_likelihood(x: &[Vec<f64>], t: &[bool], intercept: f64, weights: &[f64]) -> f64 {
    x.iter()
        .zip(t)
        .map(|(row, &treated)| {
            let eta = intercept + row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
            if treated {
                log_sigmoid(eta)
            } else {
                log_sigmoid(-eta)
            }
        })
        .sum()
}

impl LogisticModel {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.weights)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(row))
    }
}

pub fn fit_logistic(x: &[Vec<f64>], t: &[bool]) -> Result<LogisticModel, LogisticError> {
    let n = x.len();
    if t.len() != n {
        return Err(LogisticError::LabelCount {
            rows: n,
            labels: t.len(),
        });
    }
    let d = x.first().map_or(0, Vec::len);
    if n < d + 1 {
        return Err(LogisticError::TooFewRows {
            rows: n,
            covariates: d,
            needed: d + 1,
        });
    }
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let target = DVector::from_fn(n, |i, _| if t[i] { 1.0 } else { 0.0 });
    let mut beta = DVector::zeros(d + 1);

    let separates = |eta: &DVector<f64>| {
        let lowest_treated = (0..n)
            .filter(|&i| t[i])
            .map(|i| eta[i])
            .fold(f64::INFINITY, f64::min);
        let highest_control = (0..n)
            .filter(|&i| !t[i])
            .map(|i| eta[i])
            .fold(f64::NEG_INFINITY, f64::max);
        lowest_treated > 0.0 && highest_control < 0.0
    };

    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let eta = &design * &beta;
        let prob = eta.map(sigmoid);
        let w = prob.map(|p| p * (1.0 - p));
        let gradient = design.transpose() * (&target - &prob);
        let mut hessian = design.transpose() * DMatrix::from_diagonal(&w) * &design;
        hessian.fill_upper_triangle_with_lower_triangle();
        let Some(chol) = hessian.cholesky() else {
            if separates(&eta) {
                separated = true;
                break;
            }
            return Err(LogisticError::Singular);
        };
        let step = chol.solve(&gradient);
        beta += &step;
        if !beta.iter().all(|v| v.is_finite()) {
            separated = true;
            break;
        }
        if step.amax() < TOLERANCE {
            converged = true;
            break;
        }
    }
    let eta = &design * &beta;
    if separates(&eta) {
        separated = true;
        converged = false;
    }
    let weights: Vec<f64> = beta.iter().skip(1).copied().collect();
    Ok(LogisticModel {
        intercept: beta[0],
        log_likelihood: log_likelihood(x, t, beta[0], &weights),
        weights,
        converged,
        separated,
        iterations,
    })
}
