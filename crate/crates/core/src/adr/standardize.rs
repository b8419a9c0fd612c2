use serde::{Deserialize, Serialize};

use super::AdrError;

/// Per-column mean and population standard deviation of the training frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    /// Always positive; zero-variance columns carry 1.
    pub std: Vec<f64>,
    /// Columns whose variance was zero.
    pub constant_columns: Vec<usize>,
}

impl StandardizationStats {
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

pub fn fit_standardizer<R: AsRef<[f64]>>(rows: &[R]) -> Result<StandardizationStats, AdrError> {
    if rows.len() < 2 {
        return Err(AdrError::TooFewFrames(rows.len()));
    }
    let d = rows[0].as_ref().len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        let r = r.as_ref();
        if r.len() != d {
            return Err(AdrError::Dimension {
                got: r.len(),
                expected: d,
            });
        }
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut var = vec![0.0; d];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let mut constant_columns = Vec::new();
    let std = var
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let s = (v / n).sqrt();
            if s > 0.0 {
                s
            } else {
                constant_columns.push(j);
                1.0
            }
        })
        .collect();
    if !constant_columns.is_empty() {
        log::warn!(
            "standardizer: {} constant column(s) left unscaled",
            constant_columns.len()
        );
    }
    Ok(StandardizationStats {
        mean,
        std,
        constant_columns,
    })
}
