//! Versioned model files.
//!
//! Layout: 8-byte magic `ADRMODEL`, schema version (u16 LE), feature-table
//! version (u16 LE), kind tag (u8), then the model as JSON.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adr::AdrModel;
use crate::features::FEATURE_TABLE_VERSION;
use crate::models::{KdeNaiveBayes, SvrModel};

pub const MODEL_MAGIC: &[u8; 8] = b"ADRMODEL";
pub const MODEL_SCHEMA_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Adr,
    NaiveBayes,
    Svr,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Adr => 1,
            ModelKind::NaiveBayes => 2,
            ModelKind::Svr => 3,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(ModelKind::Adr),
            2 => Some(ModelKind::NaiveBayes),
            3 => Some(ModelKind::Svr),
            _ => None,
        }
    }
}

/// Types storable in a model file.
pub trait Persist: Serialize + DeserializeOwned {
    const KIND: ModelKind;
}

impl Persist for AdrModel {
    const KIND: ModelKind = ModelKind::Adr;
}

impl Persist for KdeNaiveBayes {
    const KIND: ModelKind = ModelKind::NaiveBayes;
}

impl Persist for SvrModel {
    const KIND: ModelKind = ModelKind::Svr;
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not a model file")]
    Magic { path: PathBuf },
    #[error("{path}: model schema version {found}, this build reads {expected}")]
    SchemaVersion {
        path: PathBuf,
        found: u16,
        expected: u16,
    },
    #[error("{path}: model built for feature table version {found}, this build uses {expected}")]
    FeatureTableVersion {
        path: PathBuf,
        found: u16,
        expected: u16,
    },
    #[error("{path}: expected a {expected:?} model, found {found}")]
    Kind {
        path: PathBuf,
        expected: ModelKind,
        found: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

pub fn save_model<M: Persist>(path: &Path, model: &M) -> Result<(), PersistError> {
    let json = serde_json::to_vec(model).map_err(|source| PersistError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut buf = Vec::with_capacity(json.len() + 13);
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_SCHEMA_VERSION.to_le_bytes());
    buf.extend_from_slice(&FEATURE_TABLE_VERSION.to_le_bytes());
    buf.push(M::KIND.tag());
    buf.extend_from_slice(&json);
    let io = |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)
}

/// Reads the header only.
pub fn model_kind(path: &Path) -> Result<ModelKind, PersistError> {
    let (kind, _) = read_header(path)?;
    ModelKind::from_tag(kind).ok_or_else(|| PersistError::Kind {
        path: path.to_path_buf(),
        expected: ModelKind::Adr,
        found: format!("unknown tag {kind}"),
    })
}

fn read_header(path: &Path) -> Result<(u8, Vec<u8>), PersistError> {
    let io = |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io)?
        .read_to_end(&mut bytes)
        .map_err(io)?;
    if bytes.len() < 13 || &bytes[..8] != MODEL_MAGIC {
        return Err(PersistError::Magic {
            path: path.to_path_buf(),
        });
    }
    let schema = u16::from_le_bytes([bytes[8], bytes[9]]);
    if schema != MODEL_SCHEMA_VERSION {
        return Err(PersistError::SchemaVersion {
            path: path.to_path_buf(),
            found: schema,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    let table = u16::from_le_bytes([bytes[10], bytes[11]]);
    if table != FEATURE_TABLE_VERSION {
        return Err(PersistError::FeatureTableVersion {
            path: path.to_path_buf(),
            found: table,
            expected: FEATURE_TABLE_VERSION,
        });
    }
    let kind = bytes[12];
    Ok((kind, bytes.split_off(13)))
}

pub fn load_model<M: Persist>(path: &Path) -> Result<M, PersistError> {
    let (tag, payload) = read_header(path)?;
    if tag != M::KIND.tag() {
        return Err(PersistError::Kind {
            path: path.to_path_buf(),
            expected: M::KIND,
            found: ModelKind::from_tag(tag)
                .map_or_else(|| format!("unknown tag {tag}"), |k| format!("{k:?}")),
        });
    }
    serde_json::from_slice(&payload).map_err(|source| PersistError::Json {
        path: path.to_path_buf(),
        source,
    })
}
