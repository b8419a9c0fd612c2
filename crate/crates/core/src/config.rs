//! Pipeline configuration (TOML) and per-stage seed derivation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adr::{SecondOrder, SomConfig};
use crate::audio::DEFAULT_TARGET_LUFS;
use crate::eval::Task;
use crate::features::FeatureConfig;
use crate::models::{
    SvrParams, DEFAULT_C_CANDIDATES, DEFAULT_NODES_CLASSIFICATION, DEFAULT_NODES_REGRESSION,
};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Seed for a named stage: the first 8 bytes (little endian) of
/// `SHA-256(seed as u64 LE ‖ stage name)`.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("config schema version {found}, this build reads {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoudnessConfig {
    pub target_lufs: f64,
}

impl Default for LoudnessConfig {
    fn default() -> Self {
        LoudnessConfig {
            target_lufs: DEFAULT_TARGET_LUFS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdrConfig {
    /// Node count for AD/CN classification.
    pub nodes_classification: usize,
    /// Node count for MMSE regression.
    pub nodes_regression: usize,
    pub epochs: usize,
    pub second_order: SecondOrder,
}

impl Default for AdrConfig {
    fn default() -> Self {
        AdrConfig {
            nodes_classification: DEFAULT_NODES_CLASSIFICATION,
            nodes_regression: DEFAULT_NODES_REGRESSION,
            epochs: SomConfig::default().epochs,
            second_order: SecondOrder::Histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Replace the configured node count by a cross-validated search.
    pub enabled: bool,
    pub candidates: Vec<usize>,
    pub folds: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            enabled: false,
            candidates: DEFAULT_C_CANDIDATES.to_vec(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Root under which run directories are created.
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            out_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub loudness: LoudnessConfig,
    pub features: FeatureConfig,
    pub adr: AdrConfig,
    pub svr: SvrParams,
    pub grid: GridConfig,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            loudness: LoudnessConfig::default(),
            features: FeatureConfig::default(),
            adr: AdrConfig::default(),
            svr: SvrParams::default(),
            grid: GridConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(s).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: PipelineConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML serialization, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn nodes_for(&self, task: Task) -> usize {
        match task {
            Task::Classification => self.adr.nodes_classification,
            Task::Regression => self.adr.nodes_regression,
        }
    }

    pub fn som_config(&self, nodes: usize, stage: &str) -> SomConfig {
        SomConfig {
            nodes,
            epochs: self.adr.epochs,
            seed: stage_seed(self.seed, stage),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                found: self.schema_version,
                expected: CONFIG_SCHEMA_VERSION,
            });
        }
        if !self.loudness.target_lufs.is_finite() || self.loudness.target_lufs > 0.0 {
            return bad(format!(
                "loudness.target_lufs {} must be finite and ≤ 0",
                self.loudness.target_lufs
            ));
        }
        self.features
            .validate()
            .map_err(|m| ConfigError::Invalid(format!("features: {m}")))?;
        if self.adr.nodes_classification == 0 || self.adr.nodes_regression == 0 {
            return bad("adr node counts must be ≥ 1".into());
        }
        if self.adr.epochs == 0 {
            return bad("adr.epochs must be ≥ 1".into());
        }
        let s = &self.svr;
        if !(s.epsilon >= 0.0) || !(s.c_box > 0.0) || !(s.tolerance > 0.0) || s.max_iterations == 0
        {
            return bad(
                "svr: need epsilon ≥ 0, c_box > 0, tolerance > 0, max_iterations ≥ 1".into(),
            );
        }
        if let Some(g) = s.gamma {
            if !(g > 0.0) {
                return bad(format!("svr.gamma {g} must be positive"));
            }
        }
        if self.grid.candidates.is_empty() || self.grid.candidates.contains(&0) {
            return bad("grid.candidates must be non-empty and ≥ 1".into());
        }
        if self.grid.folds < 2 {
            return bad(format!("grid.folds {} must be ≥ 2", self.grid.folds));
        }
        Ok(())
    }
}
