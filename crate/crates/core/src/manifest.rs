//! Recording manifests: `id,audio_path,group,mmse,age,gender,language`.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::CohortMember;
use crate::models::Group;

pub const MANIFEST_HEADER: [&str; 7] = [
    "id",
    "audio_path",
    "group",
    "mmse",
    "age",
    "gender",
    "language",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
}

impl Gender {
    /// Numeric code used in feature vectors: M = 0, F = 1.
    pub fn code(self) -> f64 {
        match self {
            Gender::Male => 0.0,
            Gender::Female => 1.0,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "M",
            Gender::Female => "F",
        })
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "M" | "MALE" => Ok(Gender::Male),
            "F" | "FEMALE" => Ok(Gender::Female),
            other => Err(format!("unknown gender {other:?}; expected M or F")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub audio_path: PathBuf,
    pub group: Option<Group>,
    pub mmse: Option<f64>,
    pub age: f64,
    pub gender: Gender,
    pub language: String,
}

impl ManifestEntry {
    /// Copy with group and MMSE removed.
    pub fn without_labels(&self) -> ManifestEntry {
        ManifestEntry {
            group: None,
            mmse: None,
            ..self.clone()
        }
    }

    pub fn cohort_member(&self) -> Option<CohortMember> {
        self.group.map(|g| CohortMember {
            id: self.id.clone(),
            age: self.age,
            gender: self.gender.code(),
            treated: g.is_positive(),
        })
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: header must be exactly `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path} line {line}: {reason}")]
    Row {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: duplicate id {id}")]
    DuplicateId { path: PathBuf, id: String },
}

fn optional(field: &str) -> Option<&str> {
    let t = field.trim();
    (!t.is_empty()).then_some(t)
}

/// Reads a manifest. Relative audio paths resolve against the manifest's
/// directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, ManifestError> {
    let csv_err = |source| ManifestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header != MANIFEST_HEADER {
        return Err(ManifestError::Header {
            path: path.to_path_buf(),
            expected: MANIFEST_HEADER.join(","),
            found: header.join(","),
        });
    }
    let base = path.parent().unwrap_or(Path::new(""));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = i + 2;
        let row_err = |reason: String| ManifestError::Row {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(row_err("empty id".into()));
        }
        let audio = PathBuf::from(&record[1]);
        let audio_path = if audio.is_relative() {
            base.join(audio)
        } else {
            audio
        };
        let group = optional(&record[2])
            .map(Group::from_str)
            .transpose()
            .map_err(row_err)?;
        let mmse = optional(&record[3])
            .map(|s| s.parse::<f64>().map_err(|e| format!("mmse {s:?}: {e}")))
            .transpose()
            .map_err(row_err)?;
        if let Some(m) = mmse {
            if !(0.0..=30.0).contains(&m) || m.fract() != 0.0 {
                return Err(row_err(format!("mmse {m} is not an integer in [0, 30]")));
            }
        }
        let age: f64 = record[4]
            .parse()
            .map_err(|e| row_err(format!("age {:?}: {e}", &record[4])))?;
        if !(age > 0.0 && age.is_finite()) {
            return Err(row_err(format!("age {age} must be positive")));
        }
        let gender = Gender::from_str(&record[5]).map_err(row_err)?;
        if !seen.insert(id.clone()) {
            return Err(ManifestError::DuplicateId {
                path: path.to_path_buf(),
                id,
            });
        }
        out.push(ManifestEntry {
            id,
            audio_path,
            group,
            mmse,
            age,
            gender,
            language: record[6].to_string(),
        });
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), ManifestError> {
    let csv_err = |source| ManifestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
    for e in entries {
        w.write_record([
            e.id.clone(),
            e.audio_path.display().to_string(),
            e.group.map(|g| g.to_string()).unwrap_or_default(),
            e.mmse.map(|m| format!("{m}")).unwrap_or_default(),
            format!("{}", e.age),
            e.gender.to_string(),
            e.language.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
