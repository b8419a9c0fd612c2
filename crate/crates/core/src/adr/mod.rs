//! Active data representation: cluster frame features with a 1-D
//! self-organising map and describe each recording by how its frames occupy
//! the clusters, plus age and gender.

mod som;
mod standardize;

pub use som::{assign_bmu, quantization_error, train_som, SomCodebook, SomConfig};
pub use standardize::{fit_standardizer, StandardizationStats};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FrameFeatureMatrix, FEATURE_TABLE_VERSION};

#[derive(Debug, Error, PartialEq)]
pub enum AdrError {
    #[error("need at least 2 frames to standardize, got {0}")]
    TooFewFrames(usize),
    #[error("node count must be at least 1")]
    NoNodes,
    #[error("{frames} frames cannot train {nodes} nodes")]
    FewerFramesThanNodes { frames: usize, nodes: usize },
    #[error("recording {0} has no frames")]
    EmptyRecording(String),
    #[error("frame has {got} features, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("model was built with feature table v{model}, this build uses v{current}")]
    FeatureTableVersion { model: u16, current: u16 },
}

/// Second-order statistics computed over the BMU sequence of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondOrder {
    /// Normalized occupancy histogram, `C` values.
    #[default]
    Histogram,
    /// Histogram followed by each node's mean dwell (consecutive-frame run
    /// length over frame count), `2C` values. Depends on frame order.
    HistogramWithDwell,
}

/// Fixed-length description of one recording: ADR values, then age and gender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingVector {
    pub recording_id: String,
    pub adr: Vec<f64>,
    pub age: f64,
    pub gender: f64,
}

impl RecordingVector {
    /// `adr ++ [age, gender]`.
    pub fn features(&self) -> Vec<f64> {
        let mut v = self.adr.clone();
        v.push(self.age);
        v.push(self.gender);
        v
    }
}

/// Frozen standardizer and codebook from one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdrModel {
    pub feature_table_version: u16,
    pub stats: StandardizationStats,
    pub codebook: SomCodebook,
    pub second_order: SecondOrder,
}

impl AdrModel {
    /// Standardize the pooled training frames and train the map on them.
    pub fn fit(
        matrices: &[FrameFeatureMatrix],
        config: &SomConfig,
        second_order: SecondOrder,
    ) -> Result<Self, AdrError> {
        let pooled: Vec<&[f64]> = matrices
            .iter()
            .flat_map(|m| m.rows.iter().map(|r| r.values.as_slice()))
            .collect();
        let stats = fit_standardizer(&pooled)?;
        let standardized: Vec<Vec<f64>> = pooled.iter().map(|r| stats.transform(r)).collect();
        let codebook = train_som(&standardized, config)?;
        Ok(AdrModel {
            feature_table_version: FEATURE_TABLE_VERSION,
            stats,
            codebook,
            second_order,
        })
    }

    pub fn check_version(&self) -> Result<(), AdrError> {
        if self.feature_table_version != FEATURE_TABLE_VERSION {
            return Err(AdrError::FeatureTableVersion {
                model: self.feature_table_version,
                current: FEATURE_TABLE_VERSION,
            });
        }
        Ok(())
    }

    pub fn transform(
        &self,
        matrix: &FrameFeatureMatrix,
        age: f64,
        gender: f64,
    ) -> Result<RecordingVector, AdrError> {
        self.check_version()?;
        represent_recording(
            &self.codebook,
            matrix,
            &self.stats,
            age,
            gender,
            self.second_order,
        )
    }
}

/// BMU occupancy representation of one recording.
pub fn represent_recording(
    codebook: &SomCodebook,
    matrix: &FrameFeatureMatrix,
    stats: &StandardizationStats,
    age: f64,
    gender: f64,
    mode: SecondOrder,
) -> Result<RecordingVector, AdrError> {
    if matrix.rows.is_empty() {
        return Err(AdrError::EmptyRecording(matrix.recording_id.clone()));
    }
    let nodes = codebook.node_count();
    let mut bmus = Vec::with_capacity(matrix.rows.len());
    for row in &matrix.rows {
        if row.values.len() != stats.mean.len() {
            return Err(AdrError::Dimension {
                got: row.values.len(),
                expected: stats.mean.len(),
            });
        }
        bmus.push(assign_bmu(codebook, &stats.transform(&row.values)));
    }
    let total = bmus.len() as f64;
    let mut counts = vec![0usize; nodes];
    for &b in &bmus {
        counts[b] += 1;
    }
    let mut adr: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();

    if mode == SecondOrder::HistogramWithDwell {
        let mut runs = vec![0usize; nodes];
        for (i, &b) in bmus.iter().enumerate() {
            if i == 0 || bmus[i - 1] != b {
                runs[b] += 1;
            }
        }
        adr.extend((0..nodes).map(|c| {
            if runs[c] == 0 {
                0.0
            } else {
                counts[c] as f64 / runs[c] as f64 / total
            }
        }));
    }
    Ok(RecordingVector {
        recording_id: matrix.recording_id.clone(),
        adr,
        age,
        gender,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FrameFeatureVector;

    fn codebook(weights: Vec<Vec<f64>>) -> SomCodebook {
        SomCodebook {
            weights,
            epochs: 0,
            seed: 0,
            quantization_error_history: vec![],
            quantization_error: 0.0,
        }
    }

    fn identity_stats(d: usize) -> StandardizationStats {
        StandardizationStats {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            constant_columns: vec![],
        }
    }

    fn matrix(rows: Vec<Vec<f64>>) -> FrameFeatureMatrix {
        FrameFeatureMatrix {
            recording_id: "r".into(),
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(frame_index, values)| FrameFeatureVector {
                    frame_index,
                    values,
                })
                .collect(),
        }
    }

    fn five_nodes() -> SomCodebook {
        codebook((0..5).map(|i| vec![i as f64 * 10.0, 0.0]).collect())
    }

    #[test]
    fn all_frames_on_one_node() {
        let m = matrix(vec![vec![20.0, 0.1]; 10]);
        let v = represent_recording(
            &five_nodes(),
            &m,
            &identity_stats(2),
            70.0,
            1.0,
            SecondOrder::Histogram,
        )
        .unwrap();
        assert_eq!(v.adr, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(v.features(), vec![0.0, 0.0, 1.0, 0.0, 0.0, 70.0, 1.0]);
    }

    #[test]
    fn split_three_seven() {
        let mut rows = vec![vec![0.0, 0.0]; 3];
        rows.extend(vec![vec![41.0, 0.0]; 7]);
        let v = represent_recording(
            &five_nodes(),
            &matrix(rows),
            &identity_stats(2),
            0.0,
            0.0,
            SecondOrder::Histogram,
        )
        .unwrap();
        let expect = [0.3, 0.0, 0.0, 0.0, 0.7];
        for (a, b) in v.adr.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_node_is_always_one() {
        let cb = codebook(vec![vec![0.0, 0.0]]);
        let m = matrix(vec![vec![5.0, -3.0], vec![1.0, 1.0]]);
        let v = represent_recording(
            &cb,
            &m,
            &identity_stats(2),
            0.0,
            0.0,
            SecondOrder::Histogram,
        )
        .unwrap();
        assert_eq!(v.adr, vec![1.0]);
    }

    #[test]
    fn empty_recording_rejected() {
        let m = matrix(vec![]);
        assert_eq!(
            represent_recording(
                &five_nodes(),
                &m,
                &identity_stats(2),
                0.0,
                0.0,
                SecondOrder::Histogram
            ),
            Err(AdrError::EmptyRecording("r".into()))
        );
    }

    #[test]
    fn dwell_statistics() {
        // BMUs 0 0 4 0: node 0 has 3 frames in 2 runs, node 4 one frame.
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![40.0, 0.0],
            vec![0.0, 0.0],
        ];
        let v = represent_recording(
            &five_nodes(),
            &matrix(rows),
            &identity_stats(2),
            0.0,
            0.0,
            SecondOrder::HistogramWithDwell,
        )
        .unwrap();
        assert_eq!(v.adr.len(), 10);
        assert_eq!(&v.adr[..5], &[0.75, 0.0, 0.0, 0.0, 0.25]);
        assert_eq!(&v.adr[5..], &[1.5 / 4.0, 0.0, 0.0, 0.0, 0.25]);
    }
}
