//! End-to-end orchestration: normalize → extract → ADR → learner → predict →
//! evaluate, with cross-validated node-count search.
//!
//! Test labels are stripped before any stage runs and only come back in the
//! evaluation stage. Per-recording stages run on the rayon pool; the
//! orchestrator alone writes the run directory.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adr::{AdrModel, RecordingVector};
use crate::audio::{load_audio, normalize_loudness, LoudnessReport};
use crate::config::{stage_seed, PipelineConfig};
use crate::eval::{
    classification_metrics, regression_metrics, score_predictions, write_predictions,
    ConfusionMatrix, EvaluationReport, PredictedValue, Task,
};
use crate::features::{
    extract_frame_features, write_feature_cache, FrameFeatureMatrix, FEATURE_TABLE_VERSION,
};
use crate::manifest::{write_manifest, ManifestEntry};
use crate::models::{
    grid_search, train_nb, train_svr, GridSearchResult, Group, KdeNaiveBayes, Objective, SvrModel,
};
use crate::persist::{save_model, PersistError};

/// Failure of one pipeline stage.
#[derive(Debug, Error)]
pub struct StageError {
    pub stage: String,
    pub recording_id: Option<String>,
    pub cause: String,
    /// Numerical/convergence failure rather than bad input.
    pub numerical: bool,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}", self.stage)?;
        if let Some(id) = &self.recording_id {
            write!(f, ", recording {id}")?;
        }
        write!(f, ": {}", self.cause)
    }
}

impl StageError {
    pub fn data(stage: &str, id: Option<&str>, cause: impl fmt::Display) -> Self {
        StageError {
            stage: stage.into(),
            recording_id: id.map(str::to_string),
            cause: cause.to_string(),
            numerical: false,
        }
    }

    pub fn numerical(stage: &str, id: Option<&str>, cause: impl fmt::Display) -> Self {
        StageError {
            numerical: true,
            ..StageError::data(stage, id, cause)
        }
    }
}

fn io_stage(stage: &str, path: &Path, e: impl fmt::Display) -> StageError {
    StageError::data(stage, None, format!("{}: {e}", path.display()))
}

impl From<PersistError> for StageError {
    fn from(e: PersistError) -> Self {
        StageError::data("persist", None, e)
    }
}

/// Load, loudness-normalize and extract one recording. The matrix takes the
/// manifest id.
pub fn prepare_recording(
    entry: &ManifestEntry,
    config: &PipelineConfig,
) -> Result<(FrameFeatureMatrix, LoudnessReport), StageError> {
    let id = Some(entry.id.as_str());
    let mut rec = load_audio(&entry.audio_path).map_err(|e| StageError::data("load", id, e))?;
    rec.id = entry.id.clone();
    let (normalized, report) = normalize_loudness(&rec, config.loudness.target_lufs)
        .map_err(|e| StageError::data("normalize", id, e))?;
    let matrix = extract_frame_features(&normalized, &config.features)
        .map_err(|e| StageError::data("extract", id, e))?;
    if matrix.is_empty() {
        return Err(StageError::data(
            "extract",
            id,
            "recording is shorter than one 1 s frame",
        ));
    }
    Ok((matrix, report))
}

/// [`prepare_recording`] over a manifest in parallel; the first failure in
/// manifest order is reported.
pub fn prepare_all(
    entries: &[ManifestEntry],
    config: &PipelineConfig,
) -> Result<(Vec<FrameFeatureMatrix>, Vec<LoudnessReport>), StageError> {
    let results: Vec<_> = entries
        .par_iter()
        .map(|e| prepare_recording(e, config))
        .collect();
    let mut matrices = Vec::with_capacity(entries.len());
    let mut reports = Vec::with_capacity(entries.len());
    for r in results {
        let (m, l) = r?;
        matrices.push(m);
        reports.push(l);
    }
    Ok((matrices, reports))
}

pub fn loudness_csv(reports: &[LoudnessReport]) -> String {
    let mut s = String::from("id,measured_lufs,gain_db,clipped_samples\n");
    for r in reports {
        s.push_str(&format!(
            "{},{:.4},{:.4},{}\n",
            r.recording_id, r.integrated_lufs, r.applied_gain_db, r.clipped_samples
        ));
    }
    s
}

/// ADR vectors for matrices paired with their manifest entries.
pub fn represent_all(
    adr: &AdrModel,
    matrices: &[FrameFeatureMatrix],
    entries: &[ManifestEntry],
) -> Result<Vec<RecordingVector>, StageError> {
    matrices
        .iter()
        .zip(entries)
        .map(|(m, e)| {
            adr.transform(m, e.age, e.gender.code())
                .map_err(|err| StageError::data("adr transform", Some(&e.id), err))
        })
        .collect()
}

/// Trained task learner.
#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    NaiveBayes(KdeNaiveBayes),
    Svr(SvrModel),
}

fn groups(entries: &[ManifestEntry]) -> Result<Vec<Group>, StageError> {
    entries
        .iter()
        .map(|e| {
            e.group
                .ok_or_else(|| StageError::data("train", Some(&e.id), "missing group label"))
        })
        .collect()
}

fn mmse_targets(entries: &[ManifestEntry]) -> Result<Vec<f64>, StageError> {
    entries
        .iter()
        .map(|e| {
            e.mmse
                .ok_or_else(|| StageError::data("train", Some(&e.id), "missing MMSE score"))
        })
        .collect()
}

impl Learner {
    pub fn train(
        task: Task,
        vectors: &[RecordingVector],
        entries: &[ManifestEntry],
        config: &PipelineConfig,
    ) -> Result<Learner, StageError> {
        let x: Vec<Vec<f64>> = vectors.iter().map(RecordingVector::features).collect();
        match task {
            Task::Classification => {
                let y = groups(entries)?;
                train_nb(&x, &y)
                    .map(Learner::NaiveBayes)
                    .map_err(|e| StageError::data("train", None, e))
            }
            Task::Regression => {
                let y = mmse_targets(entries)?;
                let model = train_svr(&x, &y, &config.svr)
                    .map_err(|e| StageError::data("train", None, e))?;
                if !model.converged {
                    log::warn!(
                        "SVR stopped at the iteration cap ({} iterations, KKT gap {:.3e})",
                        model.iterations,
                        model.kkt_gap
                    );
                }
                Ok(Learner::Svr(model))
            }
        }
    }

    pub fn predict(
        &self,
        vectors: &[RecordingVector],
    ) -> Result<Vec<(String, PredictedValue)>, StageError> {
        vectors
            .iter()
            .map(|v| {
                let x = v.features();
                let id = Some(v.recording_id.as_str());
                let value = match self {
                    Learner::NaiveBayes(m) => PredictedValue::Label(
                        m.predict(&x)
                            .map_err(|e| StageError::data("predict", id, e))?
                            .group,
                    ),
                    Learner::Svr(m) => PredictedValue::Mmse(
                        m.predict(&x)
                            .map_err(|e| StageError::data("predict", id, e))?,
                    ),
                };
                Ok((v.recording_id.clone(), value))
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), PersistError> {
        match self {
            Learner::NaiveBayes(m) => save_model(path, m),
            Learner::Svr(m) => save_model(path, m),
        }
    }
}

/// Fold index per entry: stratified by group for classification, by MMSE
/// rank for regression. Order within strata is shuffled by `seed`.
pub fn assign_folds(entries: &[ManifestEntry], task: Task, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.shuffle(&mut rng);
    match task {
        Task::Classification => order.sort_by_key(|&i| entries[i].group.map(Group::index)),
        Task::Regression => order.sort_by(|&a, &b| {
            entries[a]
                .mmse
                .unwrap_or(f64::NAN)
                .total_cmp(&entries[b].mmse.unwrap_or(f64::NAN))
        }),
    }
    let mut fold = vec![0; entries.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// Pooled out-of-fold accuracy or RMSE for one node count.
pub fn cross_validate(
    matrices: &[FrameFeatureMatrix],
    entries: &[ManifestEntry],
    task: Task,
    nodes: usize,
    config: &PipelineConfig,
) -> Result<f64, StageError> {
    let folds = config.grid.folds.min(entries.len());
    let fold_of = assign_folds(entries, task, folds, stage_seed(config.seed, "grid/folds"));
    let mut predicted = Vec::new();
    let mut actual = Vec::new();
    for k in 0..folds {
        let pick = |held_out: bool| -> (Vec<FrameFeatureMatrix>, Vec<ManifestEntry>) {
            (0..entries.len())
                .filter(|&i| (fold_of[i] == k) == held_out)
                .map(|i| (matrices[i].clone(), entries[i].clone()))
                .unzip()
        };
        let (train_m, train_e) = pick(false);
        let (val_m, val_e) = pick(true);
        if val_e.is_empty() {
            continue;
        }
        let som = config.som_config(nodes, &format!("grid/adr/fold{k}"));
        let adr = AdrModel::fit(&train_m, &som, config.adr.second_order).map_err(|e| {
            StageError::data("grid-search", None, format!("C={nodes}, fold {k}: {e}"))
        })?;
        let train_v = represent_all(&adr, &train_m, &train_e)?;
        let val_v = represent_all(&adr, &val_m, &val_e)?;
        let learner = Learner::train(task, &train_v, &train_e, config)?;
        for ((_, p), e) in learner.predict(&val_v)?.into_iter().zip(&val_e) {
            predicted.push(p);
            actual.push(e.clone());
        }
    }
    match task {
        Task::Classification => {
            let p: Vec<Group> = predicted
                .iter()
                .map(|v| match v {
                    PredictedValue::Label(g) => *g,
                    PredictedValue::Mmse(_) => unreachable!("classifier returns labels"),
                })
                .collect();
            let cm = ConfusionMatrix::from_labels(&p, &groups(&actual)?)
                .map_err(|e| StageError::data("grid-search", None, e))?;
            Ok(classification_metrics(&cm)
                .map_err(|e| StageError::data("grid-search", None, e))?
                .accuracy)
        }
        Task::Regression => {
            let p: Vec<f64> = predicted
                .iter()
                .map(|v| match v {
                    PredictedValue::Mmse(m) => *m,
                    PredictedValue::Label(_) => unreachable!("regressor returns scores"),
                })
                .collect();
            Ok(regression_metrics(&p, &mmse_targets(&actual)?)
                .map_err(|e| StageError::data("grid-search", None, e))?
                .rmse)
        }
    }
}

/// Cross-validated search over `config.grid.candidates`.
pub fn grid_search_nodes(
    matrices: &[FrameFeatureMatrix],
    entries: &[ManifestEntry],
    task: Task,
    config: &PipelineConfig,
) -> Result<GridSearchResult, StageError> {
    let objective = match task {
        Task::Classification => Objective::Accuracy,
        Task::Regression => Objective::Rmse,
    };
    grid_search(&config.grid.candidates, objective, |c| {
        cross_validate(matrices, entries, task, c, config)
    })
    .map_err(|(c, e)| StageError {
        cause: format!("C={c}: {}", e.cause),
        ..e
    })
}

/// Self-description of a run directory (`run.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub task: Task,
    pub config_hash: String,
    pub seed: u64,
    pub adr_seed: u64,
    pub feature_table_version: u16,
    pub nodes: usize,
    pub grid_search: Option<GridSearchResult>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub learner_converged: bool,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub predictions: Vec<(String, PredictedValue)>,
    /// Present when the test manifest carries labels for the task.
    pub report: Option<EvaluationReport>,
    pub manifest: RunManifest,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), StageError> {
    std::fs::write(path, contents).map_err(|e| io_stage("write", path, e))
}

/// Evaluate predictions against labelled entries and write
/// `report.{csv,txt,json}` into `dir`.
pub fn write_report(
    dir: &Path,
    predictions: &[(String, PredictedValue)],
    reference: &[ManifestEntry],
    task: Task,
) -> Result<EvaluationReport, StageError> {
    let report = score_predictions(predictions, reference, task)
        .map_err(|e| StageError::data("evaluate", None, e))?;
    write_file(&dir.join("report.csv"), report.to_csv())?;
    write_file(&dir.join("report.txt"), report.to_text())?;
    write_file(
        &dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}

fn has_labels(entries: &[ManifestEntry], task: Task) -> bool {
    entries.iter().all(|e| match task {
        Task::Classification => e.group.is_some(),
        Task::Regression => e.mmse.is_some(),
    })
}

/// Run the full chain and write every artifact under `run_dir`.
pub fn run_pipeline(
    config: &PipelineConfig,
    train: &[ManifestEntry],
    test: &[ManifestEntry],
    task: Task,
    run_dir: &Path,
) -> Result<RunOutcome, StageError> {
    config
        .validate()
        .map_err(|e| StageError::data("config", None, e))?;
    if train.is_empty() || test.is_empty() {
        return Err(StageError::data(
            "config",
            None,
            "train and test manifests must be non-empty",
        ));
    }
    std::fs::create_dir_all(run_dir.join("features")).map_err(|e| io_stage("setup", run_dir, e))?;
    let blind: Vec<ManifestEntry> = test.iter().map(ManifestEntry::without_labels).collect();

    log::info!(
        "extracting features for {} train and {} test recordings",
        train.len(),
        blind.len()
    );
    let (train_m, train_l) = prepare_all(train, config)?;
    let (test_m, test_l) = prepare_all(&blind, config)?;
    write_feature_cache(&run_dir.join("features/train.bin"), &train_m)
        .map_err(|e| StageError::data("extract", None, e))?;
    write_feature_cache(&run_dir.join("features/test.bin"), &test_m)
        .map_err(|e| StageError::data("extract", None, e))?;
    let all_l: Vec<LoudnessReport> = train_l.into_iter().chain(test_l).collect();
    write_file(&run_dir.join("loudness.csv"), loudness_csv(&all_l))?;

    let grid = if config.grid.enabled {
        log::info!("grid search over C ∈ {:?}", config.grid.candidates);
        Some(grid_search_nodes(&train_m, train, task, config)?)
    } else {
        None
    };
    let nodes = grid
        .as_ref()
        .map_or_else(|| config.nodes_for(task), |g| g.chosen);

    let som = config.som_config(nodes, "adr");
    let adr = AdrModel::fit(&train_m, &som, config.adr.second_order)
        .map_err(|e| StageError::data("adr fit", None, e))?;
    save_model(&run_dir.join("adr.model"), &adr)?;
    let train_v = represent_all(&adr, &train_m, train)?;
    let test_v = represent_all(&adr, &test_m, &blind)?;
    write_file(&run_dir.join("vectors_train.csv"), vectors_csv(&train_v))?;
    write_file(&run_dir.join("vectors_test.csv"), vectors_csv(&test_v))?;

    let learner = Learner::train(task, &train_v, train, config)?;
    learner.save(&run_dir.join("learner.model"))?;
    let predictions = learner.predict(&test_v)?;
    let pred_path = run_dir.join("predictions.csv");
    write_predictions(&pred_path, &predictions)
        .map_err(|e| StageError::data("predict", None, e))?;

    let mut artifacts: Vec<String> = [
        "config.toml",
        "features/train.bin",
        "features/test.bin",
        "loudness.csv",
        "adr.model",
        "vectors_train.csv",
        "vectors_test.csv",
        "learner.model",
        "predictions.csv",
    ]
    .map(String::from)
    .to_vec();

    let report = if has_labels(test, task) {
        let reference = run_dir.join("reference.csv");
        write_manifest(&reference, test).map_err(|e| StageError::data("evaluate", None, e))?;
        let r = write_report(run_dir, &predictions, test, task)?;
        artifacts
            .extend(["reference.csv", "report.csv", "report.txt", "report.json"].map(String::from));
        Some(r)
    } else {
        None
    };

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        task,
        config_hash: config.hash(),
        seed: config.seed,
        adr_seed: som.seed,
        feature_table_version: FEATURE_TABLE_VERSION,
        nodes,
        grid_search: grid,
        train_ids: train.iter().map(|e| e.id.clone()).collect(),
        test_ids: test.iter().map(|e| e.id.clone()).collect(),
        learner_converged: match &learner {
            Learner::NaiveBayes(_) => true,
            Learner::Svr(m) => m.converged,
        },
        artifacts,
    };
    write_file(&run_dir.join("config.toml"), config.to_toml())?;
    write_file(
        &run_dir.join("run.json"),
        serde_json::to_string_pretty(&manifest).expect("run manifest serializes"),
    )?;
    Ok(RunOutcome {
        run_dir: run_dir.to_path_buf(),
        predictions,
        report,
        manifest,
    })
}

/// `id,adr_0..adr_{k-1},age,gender`.
pub fn vectors_csv(vectors: &[RecordingVector]) -> String {
    let k = vectors.first().map_or(0, |v| v.adr.len());
    let mut s = String::from("id");
    for i in 0..k {
        s.push_str(&format!(",adr_{i}"));
    }
    s.push_str(",age,gender\n");
    for v in vectors {
        s.push_str(&v.recording_id);
        for x in v.adr.iter().chain([&v.age, &v.gender]) {
            s.push_str(&format!(",{x:?}"));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Error)]
#[error("{path}: {reason}")]
pub struct VectorsError {
    pub path: PathBuf,
    pub reason: String,
}

pub fn read_vectors(path: &Path) -> Result<Vec<RecordingVector>, VectorsError> {
    let err = |reason: String| VectorsError {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    let width = header.len();
    if width < 3
        || &header[0] != "id"
        || &header[width - 2] != "age"
        || &header[width - 1] != "gender"
    {
        return Err(err("header must be id,adr_0..,age,gender".into()));
    }
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let values: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(format!("line {}: {e}", line + 2)))?;
        let (adr, rest) = values.split_at(width - 3);
        out.push(RecordingVector {
            recording_id: rec[0].to_string(),
            adr: adr.to_vec(),
            age: rest[0],
            gender: rest[1],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Gender;

    fn entry(id: &str, group: Group, mmse: f64) -> ManifestEntry {
        ManifestEntry {
            id: id.into(),
            audio_path: PathBuf::from("x.wav"),
            group: Some(group),
            mmse: Some(mmse),
            age: 70.0,
            gender: Gender::Male,
            language: "en".into(),
        }
    }

    #[test]
    fn folds_are_stratified() {
        let entries: Vec<ManifestEntry> = (0..20)
            .map(|i| {
                entry(
                    &i.to_string(),
                    if i < 8 { Group::Ad } else { Group::Cn },
                    i as f64,
                )
            })
            .collect();
        let f = assign_folds(&entries, Task::Classification, 4, 3);
        for k in 0..4 {
            let ad = (0..20).filter(|&i| f[i] == k && i < 8).count();
            assert_eq!(ad, 2);
            assert_eq!((0..20).filter(|&i| f[i] == k).count(), 5);
        }
        assert_eq!(f, assign_folds(&entries, Task::Classification, 4, 3));
    }

    #[test]
    fn vectors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = vec![RecordingVector {
            recording_id: "a".into(),
            adr: vec![0.1, 0.7, 0.2],
            age: 71.0,
            gender: 1.0,
        }];
        let p = dir.path().join("v.csv");
        std::fs::write(&p, vectors_csv(&v)).unwrap();
        assert_eq!(read_vectors(&p).unwrap(), v);
    }

    #[test]
    fn stage_error_names_stage_and_id() {
        let e = StageError::data("load", Some("r7"), "file not found");
        assert_eq!(e.to_string(), "stage load, recording r7: file not found");
    }
}
