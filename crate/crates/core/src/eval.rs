//! Evaluation metrics: AD/CN classification (AD is the positive class) and
//! MMSE regression, plus scoring of prediction files against a manifest.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::ManifestEntry;
use crate::models::Group;

pub const POSITIVE_CLASS: Group = Group::Ad;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no predictions to score")]
    Empty,
    #[error("{predicted} predictions for {actual} reference values")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("reference {id} has no {what}")]
    MissingReference { id: String, what: &'static str },
    #[error("submission does not match the reference: {}", describe_ids(.missing, .duplicate, .unknown))]
    Ids {
        missing: Vec<String>,
        duplicate: Vec<String>,
        unknown: Vec<String>,
    },
    #[error("{path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn describe_ids(missing: &[String], duplicate: &[String], unknown: &[String]) -> String {
    let mut parts = Vec::new();
    for (label, ids) in [
        ("missing", missing),
        ("duplicate", duplicate),
        ("unknown", unknown),
    ] {
        if !ids.is_empty() {
            parts.push(format!("{label} ids [{}]", ids.join(", ")));
        }
    }
    parts.join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Task 1: AD vs CN.
    Classification,
    /// Task 2: MMSE.
    Regression,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "task1" | "classification" => Ok(Task::Classification),
            "2" | "task2" | "regression" => Ok(Task::Regression),
            other => Err(format!(
                "unknown task {other:?}; expected classification or regression"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn from_labels(predicted: &[Group], actual: &[Group]) -> Result<Self, EvalError> {
        if predicted.len() != actual.len() {
            return Err(EvalError::LengthMismatch {
                predicted: predicted.len(),
                actual: actual.len(),
            });
        }
        let mut cm = ConfusionMatrix::default();
        for (p, a) in predicted.iter().zip(actual) {
            match (*p == POSITIVE_CLASS, *a == POSITIVE_CLASS) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (false, true) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }
}

/// Metric values; `None` marks a ratio with a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    Ok(ClassificationMetrics {
        accuracy: (cm.tp + cm.tn) as f64 / cm.total() as f64,
        sensitivity,
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        precision,
        f1: ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub rmse: f64,
    /// `None` when either vector has zero variance.
    pub pearson_r: Option<f64>,
    /// `None` when the actual values have zero variance.
    pub r_squared: Option<f64>,
    pub n: usize,
}

pub fn regression_metrics(
    predicted: &[f64],
    actual: &[f64],
) -> Result<RegressionReport, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = predicted.len() as f64;
    let mp = predicted.iter().sum::<f64>() / n;
    let ma = actual.iter().sum::<f64>() / n;
    let (mut ss_res, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &a) in predicted.iter().zip(actual) {
        ss_res += (p - a).powi(2);
        sxy += (p - mp) * (a - ma);
        sxx += (p - mp).powi(2);
        syy += (a - ma).powi(2);
    }
    let pearson_r =
        (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0));
    Ok(RegressionReport {
        rmse: (ss_res / n).sqrt(),
        pearson_r,
        r_squared: (syy > 0.0).then(|| 1.0 - ss_res / syy),
        n: predicted.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub positive_class: Group,
    pub confusion: ConfusionMatrix,
    pub metrics: ClassificationMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum EvaluationReport {
    Classification(ClassificationReport),
    Regression(RegressionReport),
}

fn fmt4(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

impl EvaluationReport {
    pub fn task(&self) -> Task {
        match self {
            EvaluationReport::Classification(_) => Task::Classification,
            EvaluationReport::Regression(_) => Task::Regression,
        }
    }

    /// Accuracy for classification (higher is better), RMSE for regression
    /// (lower is better).
    pub fn ranking_key(&self) -> f64 {
        match self {
            EvaluationReport::Classification(r) => r.metrics.accuracy,
            EvaluationReport::Regression(r) => r.rmse,
        }
    }

    fn rows(&self) -> Vec<(&'static str, String)> {
        match self {
            EvaluationReport::Classification(r) => {
                let m = &r.metrics;
                let c = &r.confusion;
                vec![
                    ("positive_class", r.positive_class.to_string()),
                    ("tp", c.tp.to_string()),
                    ("fp", c.fp.to_string()),
                    ("tn", c.tn.to_string()),
                    ("fn", c.fn_.to_string()),
                    ("accuracy", fmt4(Some(m.accuracy))),
                    ("sensitivity", fmt4(m.sensitivity)),
                    ("specificity", fmt4(m.specificity)),
                    ("precision", fmt4(m.precision)),
                    ("f1", fmt4(m.f1)),
                ]
            }
            EvaluationReport::Regression(r) => vec![
                ("n", r.n.to_string()),
                ("rmse", fmt4(Some(r.rmse))),
                ("pearson_r", fmt4(r.pearson_r)),
                ("r_squared", fmt4(r.r_squared)),
            ],
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in self.rows() {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = match self {
            EvaluationReport::Classification(_) => {
                "Task: classification (positive class = AD)\n".to_string()
            }
            EvaluationReport::Regression(_) => "Task: MMSE regression\n".to_string(),
        };
        for (k, v) in self
            .rows()
            .into_iter()
            .filter(|(k, _)| *k != "positive_class")
        {
            let _ = writeln!(s, "  {k:<12} {v}");
        }
        s
    }
}

/// One row of a predictions file.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictedValue {
    Label(Group),
    Mmse(f64),
}

/// Reads `id,label` (classification) or `id,mmse` (regression).
pub fn read_predictions(
    path: &Path,
    task: Task,
) -> Result<Vec<(String, PredictedValue)>, EvalError> {
    let csv_err = |source| EvalError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let expected = match task {
        Task::Classification => ["id", "label"],
        Task::Regression => ["id", "mmse"],
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header != expected {
        return Err(EvalError::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!(
                "header must be `{}`, found `{}`",
                expected.join(","),
                header.join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse_err = |reason: String| EvalError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            reason,
        };
        let value = match task {
            Task::Classification => {
                PredictedValue::Label(Group::from_str(&rec[1]).map_err(parse_err)?)
            }
            Task::Regression => {
                let v: f64 = rec[1]
                    .parse()
                    .map_err(|e| parse_err(format!("mmse {:?}: {e}", &rec[1])))?;
                if !v.is_finite() {
                    return Err(parse_err(format!("mmse {v} is not finite")));
                }
                PredictedValue::Mmse(v)
            }
        };
        out.push((rec[0].to_string(), value));
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, rows: &[(String, PredictedValue)]) -> Result<(), EvalError> {
    let io_err = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let header = match rows.first().map(|r| &r.1) {
        Some(PredictedValue::Mmse(_)) => "id,mmse",
        _ => "id,label",
    };
    let mut s = format!("{header}\n");
    for (id, v) in rows {
        let _ = match v {
            PredictedValue::Label(g) => writeln!(s, "{id},{g}"),
            // Shortest round-trip representation keeps re-scoring exact.
            PredictedValue::Mmse(m) => writeln!(s, "{id},{m:?}"),
        };
    }
    std::fs::write(path, s).map_err(io_err)
}

/// Joins predictions to the reference by id and computes the task report.
/// Every reference id must appear exactly once and no other ids may appear.
pub fn score_predictions(
    predictions: &[(String, PredictedValue)],
    reference: &[ManifestEntry],
    task: Task,
) -> Result<EvaluationReport, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_id: HashMap<&str, &PredictedValue> = HashMap::new();
    let mut duplicate = BTreeSet::new();
    for (id, v) in predictions {
        if by_id.insert(id.as_str(), v).is_some() {
            duplicate.insert(id.clone());
        }
    }
    let known: BTreeSet<&str> = reference.iter().map(|e| e.id.as_str()).collect();
    let missing: Vec<String> = reference
        .iter()
        .filter(|e| !by_id.contains_key(e.id.as_str()))
        .map(|e| e.id.clone())
        .collect();
    let unknown: BTreeSet<String> = predictions
        .iter()
        .filter(|(id, _)| !known.contains(id.as_str()))
        .map(|(id, _)| id.clone())
        .collect();
    if !missing.is_empty() || !duplicate.is_empty() || !unknown.is_empty() {
        return Err(EvalError::Ids {
            missing,
            duplicate: duplicate.into_iter().collect(),
            unknown: unknown.into_iter().collect(),
        });
    }

    match task {
        Task::Classification => {
            let mut predicted = Vec::with_capacity(reference.len());
            let mut actual = Vec::with_capacity(reference.len());
            for e in reference {
                let PredictedValue::Label(g) = by_id[e.id.as_str()] else {
                    return Err(EvalError::MissingReference {
                        id: e.id.clone(),
                        what: "predicted label",
                    });
                };
                predicted.push(*g);
                actual.push(e.group.ok_or_else(|| EvalError::MissingReference {
                    id: e.id.clone(),
                    what: "group",
                })?);
            }
            let confusion = ConfusionMatrix::from_labels(&predicted, &actual)?;
            Ok(EvaluationReport::Classification(ClassificationReport {
                positive_class: POSITIVE_CLASS,
                metrics: classification_metrics(&confusion)?,
                confusion,
            }))
        }
        Task::Regression => {
            let mut predicted = Vec::with_capacity(reference.len());
            let mut actual = Vec::with_capacity(reference.len());
            for e in reference {
                let PredictedValue::Mmse(m) = by_id[e.id.as_str()] else {
                    return Err(EvalError::MissingReference {
                        id: e.id.clone(),
                        what: "predicted MMSE",
                    });
                };
                predicted.push(*m);
                actual.push(e.mmse.ok_or_else(|| EvalError::MissingReference {
                    id: e.id.clone(),
                    what: "mmse",
                })?);
            }
            Ok(EvaluationReport::Regression(regression_metrics(
                &predicted, &actual,
            )?))
        }
    }
}

/// [`read_predictions`] followed by [`score_predictions`].
pub fn score_submission(
    predictions_path: &Path,
    reference: &[ManifestEntry],
    task: Task,
) -> Result<EvaluationReport, EvalError> {
    let rows = read_predictions(predictions_path, task)?;
    score_predictions(&rows, reference, task)
}
