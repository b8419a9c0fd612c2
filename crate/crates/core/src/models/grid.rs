//! Grid search over the ADR node count.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Node counts searched by default.
pub const DEFAULT_C_CANDIDATES: [usize; 5] = [5, 10, 15, 20, 25];
/// Default node count for AD/CN classification.
pub const DEFAULT_NODES_CLASSIFICATION: usize = 15;
/// Default node count for MMSE regression.
pub const DEFAULT_NODES_REGRESSION: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Higher is better.
    Accuracy,
    /// Lower is better.
    Rmse,
}

impl Objective {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Objective::Accuracy => a > b,
            Objective::Rmse => a < b,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Accuracy => "accuracy",
            Objective::Rmse => "rmse",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub objective: Objective,
    pub candidates: Vec<usize>,
    pub scores: Vec<f64>,
    pub chosen: usize,
}

/// The candidate with the best score; ties (and NaN scores, which never win)
/// resolve to the smallest C. `None` for an empty grid.
pub fn select_best(candidates: &[usize], scores: &[f64], objective: Objective) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&c, &s) in candidates.iter().zip(scores) {
        if s.is_nan() {
            continue;
        }
        best = match best {
            None => Some((c, s)),
            Some((bc, bs)) if objective.better(s, bs) || (s == bs && c < bc) => Some((c, s)),
            keep => keep,
        };
    }
    best.map(|(c, _)| c)
        .or_else(|| candidates.iter().copied().min())
}

/// Score every candidate (in parallel) and pick the winner. The first
/// failing candidate, in candidate order, aborts the search.
pub fn grid_search<E, F>(
    candidates: &[usize],
    objective: Objective,
    score: F,
) -> Result<GridSearchResult, (usize, E)>
where
    E: Send,
    F: Fn(usize) -> Result<f64, E> + Sync,
{
    let results: Vec<Result<f64, E>> = candidates.par_iter().map(|&c| score(c)).collect();
    let mut scores = Vec::with_capacity(candidates.len());
    for (&c, r) in candidates.iter().zip(results) {
        scores.push(r.map_err(|e| (c, e))?);
    }
    let chosen = select_best(candidates, &scores, objective).unwrap_or(0);
    Ok(GridSearchResult {
        objective,
        candidates: candidates.to_vec(),
        scores,
        chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate() {
        let r = grid_search(&[20], Objective::Accuracy, |_| Ok::<_, ()>(0.3)).unwrap();
        assert_eq!(r.chosen, 20);
    }

    #[test]
    fn ties_pick_smaller_c() {
        assert_eq!(
            select_best(&[25, 10, 15], &[0.8, 0.8, 0.7], Objective::Accuracy),
            Some(10)
        );
        assert_eq!(select_best(&[5, 10], &[3.0, 3.0], Objective::Rmse), Some(5));
    }

    #[test]
    fn direction_follows_objective() {
        let c = DEFAULT_C_CANDIDATES;
        let s = [0.6, 0.7, 0.9, 0.5, 0.4];
        assert_eq!(select_best(&c, &s, Objective::Accuracy), Some(15));
        assert_eq!(select_best(&c, &s, Objective::Rmse), Some(25));
    }

    #[test]
    fn failure_names_candidate() {
        let r = grid_search(&[5, 10, 15], Objective::Rmse, |c| {
            if c == 10 {
                Err("boom")
            } else {
                Ok(1.0)
            }
        });
        assert_eq!(r, Err((10, "boom")));
    }
}
