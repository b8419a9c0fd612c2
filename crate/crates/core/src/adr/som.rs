//! Online self-organising map on a 1-D chain of nodes.
//!
//! Training presents every frame once per epoch in a seeded random order.
//! The learning rate decays linearly from 0.5 to 0.01 and the Gaussian
//! neighbourhood radius from `C/2` to 0.5 over all presentations. A final
//! consolidation phase shrinks the neighbourhood to the BMU alone and
//! repeats batch centroid updates until no assignment changes, so every
//! node ends at the mean of the frames it wins.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AdrError;

const LEARNING_RATE: (f64, f64) = (0.5, 0.01);
const FINAL_RADIUS: f64 = 0.5;
const MAX_CONSOLIDATION_PASSES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SomConfig {
    pub nodes: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SomConfig {
    fn default() -> Self {
        SomConfig {
            nodes: 15,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomCodebook {
    /// `C` node weight vectors in chain order.
    pub weights: Vec<Vec<f64>>,
    pub epochs: usize,
    pub seed: u64,
    /// Mean BMU distance over the training frames: before training, then
    /// after each epoch.
    pub quantization_error_history: Vec<f64>,
    /// After consolidation.
    pub quantization_error: f64,
}

impl SomCodebook {
    pub fn node_count(&self) -> usize {
        self.weights.len()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(weights: &[Vec<f64>], frame: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, w) in weights.iter().enumerate() {
        let d = squared_distance(w, frame);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Index of the closest node by Euclidean distance; ties go to the lowest index.
pub fn assign_bmu(codebook: &SomCodebook, frame: &[f64]) -> usize {
    nearest(&codebook.weights, frame)
}

/// Mean Euclidean distance from each frame to its BMU.
pub fn quantization_error<R: AsRef<[f64]>>(weights: &[Vec<f64>], frames: &[R]) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    frames
        .iter()
        .map(|f| {
            let f = f.as_ref();
            squared_distance(&weights[nearest(weights, f)], f).sqrt()
        })
        .sum::<f64>()
        / frames.len() as f64
}

pub fn train_som<R: AsRef<[f64]>>(
    frames: &[R],
    config: &SomConfig,
) -> Result<SomCodebook, AdrError> {
    let nodes = config.nodes;
    if nodes < 1 {
        return Err(AdrError::NoNodes);
    }
    if frames.len() < nodes {
        return Err(AdrError::FewerFramesThanNodes {
            frames: frames.len(),
            nodes,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights: Vec<Vec<f64>> = index::sample(&mut rng, frames.len(), nodes)
        .into_iter()
        .map(|i| frames[i].as_ref().to_vec())
        .collect();

    let mut history = vec![quantization_error(&weights, frames)];
    let total_steps = (config.epochs * frames.len()).max(1);
    let start_radius = (nodes as f64 / 2.0).max(FINAL_RADIUS);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut step = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let progress = if total_steps > 1 {
                step as f64 / (total_steps - 1) as f64
            } else {
                1.0
            };
            let rate = LEARNING_RATE.0 + (LEARNING_RATE.1 - LEARNING_RATE.0) * progress;
            let radius = start_radius + (FINAL_RADIUS - start_radius) * progress;
            let x = frames[i].as_ref();
            let bmu = nearest(&weights, x);
            for (j, w) in weights.iter_mut().enumerate() {
                let d = j as f64 - bmu as f64;
                let h = (-(d * d) / (2.0 * radius * radius)).exp();
                let g = rate * h;
                if g < 1e-12 {
                    continue;
                }
                for (wk, xk) in w.iter_mut().zip(x) {
                    *wk += g * (xk - *wk);
                }
            }
            step += 1;
        }
        history.push(quantization_error(&weights, frames));
    }

    consolidate(&mut weights, frames);
    let quantization_error = quantization_error(&weights, frames);
    Ok(SomCodebook {
        weights,
        epochs: config.epochs,
        seed: config.seed,
        quantization_error_history: history,
        quantization_error,
    })
}

fn consolidate<R: AsRef<[f64]>>(weights: &mut [Vec<f64>], frames: &[R]) {
    let dim = weights.first().map_or(0, Vec::len);
    let mut assignment: Vec<usize> = vec![usize::MAX; frames.len()];
    for _ in 0..MAX_CONSOLIDATION_PASSES {
        let mut changed = false;
        for (a, f) in assignment.iter_mut().zip(frames) {
            let b = nearest(weights, f.as_ref());
            if *a != b {
                *a = b;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; weights.len()];
        let mut counts = vec![0usize; weights.len()];
        for (&a, f) in assignment.iter().zip(frames) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(f.as_ref()) {
                *s += x;
            }
        }
        for ((w, s), &c) in weights.iter_mut().zip(sums).zip(&counts) {
            if c > 0 {
                *w = s.into_iter().map(|v| v / c as f64).collect();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, [Vec<f64>; 2]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let centres = [vec![-2.0, 1.0, 0.5], vec![2.5, -1.0, 0.0]];
        let frames = (0..200)
            .map(|i| {
                centres[i % 2]
                    .iter()
                    .map(|c| c + noise.sample(&mut rng))
                    .collect()
            })
            .collect();
        (frames, centres)
    }

    #[test]
    fn node_count_errors() {
        let frames = vec![vec![0.0]; 3];
        let cfg = |nodes| SomConfig {
            nodes,
            epochs: 1,
            seed: 0,
        };
        assert_eq!(train_som(&frames, &cfg(0)), Err(AdrError::NoNodes));
        assert_eq!(
            train_som(&frames, &cfg(4)),
            Err(AdrError::FewerFramesThanNodes {
                frames: 3,
                nodes: 4
            })
        );
    }

    #[test]
    fn bmu_ties_go_low() {
        let cb = SomCodebook {
            weights: vec![vec![9.0], vec![-1.0], vec![5.0], vec![7.0], vec![1.0]],
            epochs: 0,
            seed: 0,
            quantization_error_history: vec![],
            quantization_error: 0.0,
        };
        assert_eq!(assign_bmu(&cb, &[0.0]), 1);
        assert_eq!(assign_bmu(&cb, &[7.0]), 3);
    }

    #[test]
    fn bmu_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let weights: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let cb = SomCodebook {
            weights: weights.clone(),
            epochs: 0,
            seed: 0,
            quantization_error_history: vec![],
            quantization_error: 0.0,
        };
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dists: Vec<f64> = weights
                .iter()
                .map(|w| {
                    w.iter()
                        .zip(&x)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let expect = dists.iter().position(|&d| d == min).unwrap();
            assert_eq!(assign_bmu(&cb, &x), expect);
        }
    }

    #[test]
    fn training_reduces_quantization_error() {
        let (frames, _) = blobs(1);
        let cb = train_som(
            &frames,
            &SomConfig {
                nodes: 4,
                epochs: 20,
                seed: 9,
            },
        )
        .unwrap();
        let first = cb.quantization_error_history[0];
        assert!(cb.quantization_error < first);
        assert_eq!(cb.quantization_error_history.len(), 21);
    }
}
