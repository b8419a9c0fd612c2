use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adress::adr::{AdrModel, SecondOrder, SomConfig};
use adress::audio::{load_audio, normalize_loudness, write_wav, DEFAULT_TARGET_LUFS};
use adress::config::{stage_seed, PipelineConfig};
use adress::eval::{score_submission, write_predictions, Task};
use adress::features::{
    read_feature_cache, write_feature_cache, write_feature_csv, FrameFeatureMatrix,
};
use adress::manifest::{read_manifest, ManifestEntry};
use adress::matching::{
    cohort_balance, match_pairs, matched_balance, propensity_scores, read_cohort, MatchError,
    MatchOptions,
};
use adress::models::KdeNaiveBayes;
use adress::persist::{load_model, model_kind, save_model, ModelKind};
use adress::pipeline::{
    grid_search_nodes, loudness_csv, prepare_all, read_vectors, represent_all, run_pipeline,
    vectors_csv, write_report, Learner, StageError,
};
use adress::synth::{generate_synthetic_corpus, SynthSpec};

/// Acoustic AD/CN classification and MMSE regression from speech recordings.
#[derive(Parser)]
#[command(name = "adress", version)]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Loudness-normalize WAV files.
    Normalize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TARGET_LUFS, allow_negative_numbers = true)]
        target_lufs: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Extract frame features for every recording in a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Fit or apply an ADR model.
    #[command(subcommand)]
    Adr(AdrCommand),
    /// Train the task learner on ADR vectors.
    Train {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        vectors: PathBuf,
        /// Manifest providing the labels.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Predict with a trained learner.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated search over the ADR node count.
    GridSearch {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        task: Task,
        /// Comma-separated node counts.
        #[arg(long, value_delimiter = ',')]
        candidates: Option<Vec<usize>>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Propensity-score matching of a cohort (`id,age,gender,group`).
    Match {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Caliper on the logit score; default 0.2 SD.
        #[arg(long)]
        caliper: Option<f64>,
        /// Allow pairs of different gender.
        #[arg(long)]
        any_gender: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a predictions file against a labelled manifest.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        task: Task,
        /// Write report.{csv,txt,json} here as well as printing it.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// End-to-end runs.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Generate a synthetic corpus with manifests.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_per_class: usize,
        #[arg(long, default_value_t = 0)]
        test_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        duration_secs: Option<f64>,
        /// Give both classes identical generative parameters.
        #[arg(long)]
        null: bool,
    },
}

#[derive(Subcommand)]
enum AdrCommand {
    Fit {
        /// Feature cache written by `extract`.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        dwell: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    Transform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Manifest providing age and gender.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PipelineCommand {
    Run {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        task: Task,
        /// Defaults to `<paths.out_dir>/<task>-<config hash prefix>`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig, Failure> {
        match &self.config {
            Some(p) => PipelineConfig::load(p).map_err(Failure::usage),
            None => Ok(PipelineConfig::default()),
        }
    }
}

/// Error with its exit code: 1 usage, 2 data, 3 numerical.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(e: impl Display) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }

    fn data(e: impl Display) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }

    fn numerical(e: impl Display) -> Self {
        Failure {
            code: 3,
            message: e.to_string(),
        }
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        if e.numerical {
            Failure::numerical(e)
        } else {
            Failure::data(e)
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Pair cached matrices with manifest entries by id, in manifest order.
fn align(
    matrices: Vec<FrameFeatureMatrix>,
    entries: &[ManifestEntry],
) -> Result<Vec<FrameFeatureMatrix>, Failure> {
    let mut by_id: std::collections::HashMap<String, FrameFeatureMatrix> = matrices
        .into_iter()
        .map(|m| (m.recording_id.clone(), m))
        .collect();
    entries
        .iter()
        .map(|e| {
            by_id
                .remove(&e.id)
                .ok_or_else(|| Failure::data(format!("no cached features for recording {}", e.id)))
        })
        .collect()
}

fn labelled_for<'a>(
    entries: &'a [ManifestEntry],
    ids: impl Iterator<Item = &'a str>,
) -> Result<Vec<ManifestEntry>, Failure> {
    ids.map(|id| {
        entries
            .iter()
            .find(|e| e.id == id)
            .cloned()
            .ok_or_else(|| Failure::data(format!("recording {id} is not in the manifest")))
    })
    .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Normalize {
            inputs,
            target_lufs,
            out_dir,
        } => {
            create_dir(&out_dir)?;
            let mut reports = Vec::new();
            for path in &inputs {
                let rec = load_audio(path).map_err(Failure::data)?;
                let (norm, report) =
                    normalize_loudness(&rec, target_lufs).map_err(Failure::data)?;
                write_wav(&out_dir.join(format!("{}.wav", rec.id)), &norm)
                    .map_err(Failure::data)?;
                reports.push(report);
            }
            let csv = loudness_csv(&reports);
            print!("{csv}");
            write(&out_dir.join("loudness.csv"), csv)
        }
        Command::Extract {
            manifest,
            out_dir,
            config,
        } => {
            let cfg = config.load()?;
            let entries = read_manifest(&manifest).map_err(Failure::data)?;
            let (matrices, reports) = prepare_all(&entries, &cfg)?;
            create_dir(&out_dir)?;
            for m in &matrices {
                write_feature_csv(&out_dir.join(format!("{}.csv", m.recording_id)), m)
                    .map_err(Failure::data)?;
            }
            write_feature_cache(&out_dir.join("features.bin"), &matrices).map_err(Failure::data)?;
            write(&out_dir.join("loudness.csv"), loudness_csv(&reports))?;
            eprintln!(
                "wrote features for {} recordings to {}",
                matrices.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Adr(AdrCommand::Fit {
            features,
            nodes,
            task,
            dwell,
            out,
            config,
        }) => {
            let cfg = config.load()?;
            let nodes =
                nodes.unwrap_or_else(|| cfg.nodes_for(task.unwrap_or(Task::Classification)));
            let matrices = read_feature_cache(&features).map_err(Failure::data)?;
            let som = SomConfig {
                nodes,
                epochs: cfg.adr.epochs,
                seed: stage_seed(cfg.seed, "adr"),
            };
            let mode = if dwell {
                SecondOrder::HistogramWithDwell
            } else {
                cfg.adr.second_order
            };
            let model = AdrModel::fit(&matrices, &som, mode).map_err(Failure::data)?;
            save_model(&out, &model).map_err(Failure::data)?;
            eprintln!(
                "ADR C={nodes}: quantization error {:.4} after {} epochs",
                model.codebook.quantization_error, model.codebook.epochs
            );
            Ok(())
        }
        Command::Adr(AdrCommand::Transform {
            model,
            features,
            manifest,
            out,
        }) => {
            let adr: AdrModel = load_model(&model).map_err(Failure::data)?;
            let entries = read_manifest(&manifest).map_err(Failure::data)?;
            let matrices = read_feature_cache(&features).map_err(Failure::data)?;
            let entries = labelled_for(&entries, matrices.iter().map(|m| m.recording_id.as_str()))?;
            let vectors = represent_all(&adr, &matrices, &entries)?;
            write(&out, vectors_csv(&vectors))
        }
        Command::Train {
            task,
            vectors,
            manifest,
            out,
            config,
        } => {
            let cfg = config.load()?;
            let v = read_vectors(&vectors).map_err(Failure::data)?;
            let entries = read_manifest(&manifest).map_err(Failure::data)?;
            let entries = labelled_for(&entries, v.iter().map(|r| r.recording_id.as_str()))?;
            let learner = Learner::train(task, &v, &entries, &cfg)?;
            learner.save(&out).map_err(Failure::data)?;
            if let Learner::Svr(m) = &learner {
                eprintln!(
                    "SVR: {} support vectors, {} iterations, converged: {}",
                    m.support_vectors.len(),
                    m.iterations,
                    m.converged
                );
            }
            Ok(())
        }
        Command::Predict {
            model,
            vectors,
            out,
        } => {
            let learner = match model_kind(&model).map_err(Failure::data)? {
                ModelKind::NaiveBayes => {
                    Learner::NaiveBayes(load_model::<KdeNaiveBayes>(&model).map_err(Failure::data)?)
                }
                ModelKind::Svr => Learner::Svr(load_model(&model).map_err(Failure::data)?),
                ModelKind::Adr => {
                    return Err(Failure::usage("--model is an ADR model, not a learner"))
                }
            };
            let v = read_vectors(&vectors).map_err(Failure::data)?;
            let predictions = learner.predict(&v)?;
            write_predictions(&out, &predictions).map_err(Failure::data)
        }
        Command::GridSearch {
            features,
            manifest,
            task,
            candidates,
            folds,
            out,
            config,
        } => {
            let mut cfg = config.load()?;
            if let Some(c) = candidates {
                cfg.grid.candidates = c;
            }
            if let Some(f) = folds {
                cfg.grid.folds = f;
            }
            cfg.validate().map_err(Failure::usage)?;
            let entries = read_manifest(&manifest).map_err(Failure::data)?;
            let matrices = align(
                read_feature_cache(&features).map_err(Failure::data)?,
                &entries,
            )?;
            let result = grid_search_nodes(&matrices, &entries, task, &cfg)?;
            for (c, s) in result.candidates.iter().zip(&result.scores) {
                println!("C={c:<3} {}={s:.4}", result.objective);
            }
            println!("chosen C={}", result.chosen);
            if let Some(out) = out {
                write(
                    &out,
                    serde_json::to_string_pretty(&result).expect("result serializes"),
                )?;
            }
            Ok(())
        }
        Command::Match {
            cohort,
            out_dir,
            caliper,
            any_gender,
            seed,
        } => {
            let members = read_cohort(&cohort).map_err(Failure::data)?;
            let scores = propensity_scores(&members).map_err(|e| match e {
                MatchError::Separation | MatchError::Logistic(_) => Failure::numerical(e),
                other => Failure::data(other),
            })?;
            let result = match_pairs(
                &members,
                &scores.scores,
                &MatchOptions {
                    caliper,
                    exact_gender: !any_gender,
                    seed,
                },
            )
            .map_err(Failure::data)?;
            create_dir(&out_dir)?;
            let before = cohort_balance(&members);
            let after = matched_balance(&members, &result);
            let mut pairs = String::from("treated_id,control_id,logit_distance\n");
            for p in &result.pairs {
                pairs.push_str(&format!(
                    "{},{},{:.6}\n",
                    members[p.treated].id, members[p.control].id, p.distance
                ));
            }
            write(&out_dir.join("matched.csv"), pairs)?;
            write(&out_dir.join("balance_before.csv"), before.to_csv())?;
            write(&out_dir.join("balance_after.csv"), after.to_csv())?;
            let text = format!(
                "Before matching\n{}\nAfter matching ({} pairs, caliper {:.4}, {} treated unmatched)\n{}",
                before.to_text(),
                result.pairs.len(),
                result.caliper,
                result.unmatched_treated.len(),
                after.to_text()
            );
            print!("{text}");
            write(&out_dir.join("balance.txt"), text)
        }
        Command::Evaluate {
            predictions,
            manifest,
            task,
            out_dir,
        } => {
            let reference = read_manifest(&manifest).map_err(Failure::data)?;
            match out_dir {
                Some(dir) => {
                    create_dir(&dir)?;
                    let rows = adress::eval::read_predictions(&predictions, task)
                        .map_err(Failure::data)?;
                    let report = write_report(&dir, &rows, &reference, task)?;
                    print!("{}", report.to_text());
                }
                None => {
                    let report =
                        score_submission(&predictions, &reference, task).map_err(Failure::data)?;
                    print!("{}", report.to_text());
                }
            }
            Ok(())
        }
        Command::Pipeline(PipelineCommand::Run {
            train,
            test,
            task,
            out_dir,
            config,
        }) => {
            let cfg = config.load()?;
            let train = read_manifest(&train).map_err(Failure::data)?;
            let test = read_manifest(&test).map_err(Failure::data)?;
            let run_dir = out_dir.unwrap_or_else(|| {
                cfg.paths
                    .out_dir
                    .join(format!("{task}-{}", &cfg.hash()[..12]))
            });
            let outcome = run_pipeline(&cfg, &train, &test, task, &run_dir)?;
            eprintln!(
                "run written to {} (C={}, {} predictions)",
                run_dir.display(),
                outcome.manifest.nodes,
                outcome.predictions.len()
            );
            if let Some(r) = outcome.report {
                print!("{}", r.to_text());
            }
            Ok(())
        }
        Command::Synth {
            out_dir,
            n_per_class,
            test_per_class,
            seed,
            duration_secs,
            null,
        } => {
            let mut spec = if null {
                SynthSpec::null()
            } else {
                SynthSpec::default()
            };
            if let Some(d) = duration_secs {
                spec.duration_secs = d;
            }
            let corpus =
                generate_synthetic_corpus(&spec, n_per_class, test_per_class, seed, &out_dir)
                    .map_err(|e| match e {
                        adress::synth::SynthError::Spec(_)
                        | adress::synth::SynthError::TooFew(_)
                        | adress::synth::SynthError::Split { .. } => Failure::usage(e),
                        other => Failure::data(other),
                    })?;
            eprintln!(
                "wrote {} recordings ({} train, {} test) to {}",
                corpus.all.len(),
                corpus.train.len(),
                corpus.test.len(),
                out_dir.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
