//! Naive Bayes with Gaussian-kernel class-conditional densities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Group;
use crate::features::percentile;

const MIN_BANDWIDTH: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum NbError {
    #[error("training data must contain both CN and AD examples")]
    SingleClass,
    #[error("training data has no features")]
    NoFeatures,
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Per-class training values and bandwidth for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureDensity {
    values: Vec<f64>,
    bandwidth: f64,
}

impl FeatureDensity {
    fn log_density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let exponents: Vec<f64> = self
            .values
            .iter()
            .map(|v| -0.5 * ((x - v) / h).powi(2))
            .collect();
        log_sum_exp(&exponents) - (self.values.len() as f64).ln() - (h * (2.0 * PI).sqrt()).ln()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Silverman's rule: `1.06 · min(sd, IQR/1.349) · n^(-1/5)`, using the sample
/// standard deviation alone when the IQR is zero, floored at 1e-6.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return MIN_BANDWIDTH;
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = percentile(values, 0.75) - percentile(values, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    (1.06 * spread * n.powf(-0.2)).max(MIN_BANDWIDTH)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeNaiveBayes {
    /// Indexed by [`Group::index`].
    priors: [f64; 2],
    densities: [Vec<FeatureDensity>; 2],
    dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub group: Group,
    /// Posterior probability per group, indexed by [`Group::index`].
    pub posterior: [f64; 2],
}

pub fn train_nb(x: &[Vec<f64>], y: &[Group]) -> Result<KdeNaiveBayes, NbError> {
    if x.len() != y.len() {
        return Err(NbError::LabelCount {
            rows: x.len(),
            labels: y.len(),
        });
    }
    let dim = x.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(NbError::NoFeatures);
    }
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(NbError::Dimension {
            expected: dim,
            got: bad.len(),
        });
    }
    let fit_class = |g: Group| -> Vec<FeatureDensity> {
        (0..dim)
            .map(|j| {
                let values: Vec<f64> = x
                    .iter()
                    .zip(y)
                    .filter(|(_, &label)| label == g)
                    .map(|(r, _)| r[j])
                    .collect();
                let bandwidth = silverman_bandwidth(&values);
                FeatureDensity { values, bandwidth }
            })
            .collect()
    };
    let count = |g: Group| y.iter().filter(|&&l| l == g).count();
    let (n_cn, n_ad) = (count(Group::Cn), count(Group::Ad));
    if n_cn == 0 || n_ad == 0 {
        return Err(NbError::SingleClass);
    }
    let total = y.len() as f64;
    Ok(KdeNaiveBayes {
        priors: [n_cn as f64 / total, n_ad as f64 / total],
        densities: [fit_class(Group::Cn), fit_class(Group::Ad)],
        dim,
    })
}

impl KdeNaiveBayes {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn priors(&self) -> [f64; 2] {
        self.priors
    }

    pub fn bandwidths(&self, group: Group) -> Vec<f64> {
        self.densities[group.index()]
            .iter()
            .map(|d| d.bandwidth)
            .collect()
    }

    /// Unnormalized log posterior per group.
    pub fn log_joint(&self, x: &[f64]) -> Result<[f64; 2], NbError> {
        if x.len() != self.dim {
            return Err(NbError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut out = [0.0; 2];
        for g in Group::ALL {
            let k = g.index();
            out[k] = self.priors[k].ln()
                + self.densities[k]
                    .iter()
                    .zip(x)
                    .map(|(d, &v)| d.log_density(v))
                    .sum::<f64>();
        }
        Ok(out)
    }

    /// Arg-max posterior; exact ties go to CN.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, NbError> {
        let lj = self.log_joint(x)?;
        // Two classes: the posterior is a logistic function of the log-odds.
        // Differencing first keeps exact ties exact even when both joints
        // are huge in magnitude.
        let log_odds = lj[1] - lj[0];
        let posterior = if log_odds.is_nan() {
            // Both joints are -inf; fall back to the priors.
            self.priors
        } else {
            let ad = if log_odds >= 0.0 {
                1.0 / (1.0 + (-log_odds).exp())
            } else {
                let e = log_odds.exp();
                e / (1.0 + e)
            };
            [1.0 - ad, ad]
        };
        let group = if posterior[1] > posterior[0] {
            Group::Ad
        } else {
            Group::Cn
        };
        Ok(Prediction { group, posterior })
    }
}
