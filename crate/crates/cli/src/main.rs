//! `figrec` — the waltz figure recognition pipeline on the command line.
//!
//! Subcommands follow the pipeline: `simulate` writes a synthetic corpus,
//! `ingest` turns raw logs into 4×100 samples, `train-hmm` / `train-nn`
//! fit models, `eval` runs leave-dances-out cross-validation, `correct`
//! applies the Markov correction to any posterior CSV, and `report`
//! re-renders a saved evaluation report.
//!
//! Exit codes: 0 success, 2 usage errors, 3 input errors (missing or
//! malformed files), 4 runtime failures.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use figrec_core::correction::{self, correct_sequence, correct_sequence_chained};
use figrec_core::data::Dataset;
use figrec_core::eval::{self, CvConfig, PipelineClassifier};
use figrec_core::ghmm::{self, FitOptions, PiInit};
use figrec_core::ingest::{self, SegmentationSpec, DEFAULT_EXTENSION_S};
use figrec_core::label::FigureLabel;
use figrec_core::mlp::{self, MlpSpec, TrainConfig};
use figrec_core::synth::{self, SynthConfig};
use figrec_core::transitions::TransitionMatrix;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "figrec", version, about = "Waltz figure recognition pipeline")]
struct Cli {
    /// Cap the worker-thread count (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus: raw logs, labels, samples.
    Simulate(SimulateArgs),
    /// Parse raw logs, segment by tempo, downsample to 4x100 samples.
    Ingest(IngestArgs),
    /// Fit the Gaussian HMM on a labeled dataset.
    TrainHmm(TrainHmmArgs),
    /// Train the feed-forward softmax classifier on a labeled dataset.
    TrainNn(TrainNnArgs),
    /// Leave-dances-out cross-validation with Markov correction.
    Eval(EvalArgs),
    /// Apply the Markov correction to a posterior CSV.
    Correct(CorrectArgs),
    /// Re-render a saved evaluation report.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Corpus config (TOML); defaults to the embedded fixture.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's dance count.
    #[arg(long)]
    dances: Option<usize>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the generating chain with a transition matrix JSON.
    #[arg(long)]
    transitions: Option<PathBuf>,
    /// Copy one figure's template onto another (`TARGET=SOURCE`), making
    /// the pair indistinguishable; may repeat.
    #[arg(long, value_name = "TARGET=SOURCE")]
    identical: Vec<String>,
    /// Write the embedded default config here and exit.
    #[arg(long)]
    write_default_config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, required_unless_present = "write_default_config")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// One raw log CSV (single-dance mode).
    #[arg(long, conflicts_with = "index")]
    log: Option<PathBuf>,
    /// Corpus index CSV (batch mode): dance_id,log,tempo_bpm,intro_s,n_figures.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Song tempo in beats per minute (single-dance mode).
    #[arg(long)]
    tempo: Option<f64>,
    /// Intro length in seconds with no dancing.
    #[arg(long)]
    intro: Option<f64>,
    /// Number of figures danced.
    #[arg(long)]
    figures: Option<usize>,
    /// Window extension in seconds on both sides.
    #[arg(long, default_value_t = DEFAULT_EXTENSION_S)]
    extension: f64,
    /// Keep yaw exactly as logged instead of unwrapping it.
    #[arg(long)]
    no_unwrap_yaw: bool,
    /// Ground-truth labels CSV to attach to the samples.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Dance id for single-dance mode (default: log file stem).
    #[arg(long)]
    id: Option<String>,
    /// Output dataset JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainHmmArgs {
    /// Labeled dataset JSON.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Keep transitions fixed at the trained matrix.
    #[arg(long)]
    freeze_transitions: bool,
    /// Initial-state distribution: uniform or empirical first figures.
    #[arg(long, value_enum, default_value_t = PiInitArg::Uniform)]
    pi: PiInitArg,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the trained transition matrix JSON.
    #[arg(long)]
    transitions_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PiInitArg {
    Uniform,
    Empirical,
}

#[derive(Args)]
struct TrainNnArgs {
    /// Labeled dataset JSON.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Dataset JSON to score after training.
    #[arg(long)]
    predict: Option<PathBuf>,
    /// Where to write the posterior CSV for `--predict`.
    #[arg(long, requires = "predict")]
    posteriors_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierArg {
    Mlp,
    Ghmm,
    Oracle,
    Uniform,
}

#[derive(Args)]
struct EvalArgs {
    /// Labeled dataset JSON.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_enum, default_value_t = ClassifierArg::Mlp)]
    classifier: ClassifierArg,
    #[arg(long, default_value_t = 7)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long)]
    freeze_transitions: bool,
    /// Also write the held-out posteriors as CSV.
    #[arg(long)]
    emit_posteriors: bool,
    /// Also write the per-figure corrections as CSV.
    #[arg(long)]
    emit_corrections: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrectArgs {
    /// Posterior CSV (from eval, train-nn, or an external classifier).
    #[arg(long)]
    posteriors: PathBuf,
    /// Transition matrix JSON to correct with.
    #[arg(long, conflicts_with = "unbiased")]
    transitions: Option<PathBuf>,
    /// Correct with the rule-based unbiased matrix.
    #[arg(long)]
    unbiased: bool,
    /// Experimental: feed corrected labels forward instead of raw ones.
    #[arg(long)]
    chained: bool,
    /// Output corrections CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Evaluation report JSON.
    #[arg(long)]
    report: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// The one supported environment variable: a directory holding
/// `default_synth.toml`, used by `simulate` when `--config` is absent.
fn default_config_dir() -> Option<PathBuf> {
    std::env::var_os("FIGREC_CONFIG_DIR").map(PathBuf::from)
}

/// Input errors exit 3, runtime errors exit 4.
enum AppError {
    Input(String),
    Runtime(String),
}

impl AppError {
    fn input(e: impl std::fmt::Display) -> AppError {
        AppError::Input(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> AppError {
        AppError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = figrec_core::par::set_jobs(jobs) {
            eprintln!("figrec: --jobs: {e}");
            return ExitCode::from(4);
        }
    }
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::TrainHmm(args) => cmd_train_hmm(args),
        Command::TrainNn(args) => cmd_train_nn(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Correct(args) => cmd_correct(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Input(msg)) => {
            eprintln!("figrec: input error: {msg}");
            ExitCode::from(3)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("figrec: error: {msg}");
            ExitCode::from(4)
        }
    }
}

fn read_file(path: &Path) -> Result<String, AppError> {
    std::fs::read_to_string(path).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), AppError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| AppError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, content).map_err(|e| AppError::Runtime(format!("{}: {e}", path.display())))
}

fn read_dataset(path: &Path) -> Result<Dataset, AppError> {
    Dataset::from_json(&read_file(path)?)
        .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))
}

fn read_matrix(path: &Path) -> Result<TransitionMatrix, AppError> {
    TransitionMatrix::from_json(&read_file(path)?)
        .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), AppError> {
    if let Some(path) = &args.write_default_config {
        write_file(path, synth::DEFAULT_CONFIG_TOML)?;
        println!("wrote default config to {}", path.display());
        if args.out.is_none() {
            return Ok(());
        }
    }
    let out = args.out.as_ref().expect("clap enforces --out");
    let mut config = match &args.config {
        Some(path) => SynthConfig::from_toml_str(&read_file(path)?).map_err(AppError::input)?,
        None => match default_config_dir() {
            Some(dir) => {
                let path = dir.join("default_synth.toml");
                SynthConfig::from_toml_str(&read_file(&path)?).map_err(AppError::input)?
            }
            None => SynthConfig::default_fixture(),
        },
    };
    if let Some(n) = args.dances {
        config.n_dances = n;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(path) = &args.transitions {
        config.transitions = read_matrix(path)?;
    }
    for pair in &args.identical {
        let (target, source) = pair.split_once('=').ok_or_else(|| {
            AppError::Input(format!("--identical {pair:?}: expected TARGET=SOURCE"))
        })?;
        let target = FigureLabel::from_short_name(target).map_err(AppError::input)?;
        let source = FigureLabel::from_short_name(source).map_err(AppError::input)?;
        config
            .make_identical(target, source)
            .map_err(AppError::input)?;
    }
    config.validate().map_err(AppError::input)?;

    let corpus = synth::gen_corpus(&config).map_err(AppError::runtime)?;
    let mut outputs = Vec::new();

    let mut index = String::from("dance_id,log,tempo_bpm,intro_s,n_figures\n");
    let mut labels: Vec<(String, Vec<FigureLabel>)> = Vec::new();
    for g in &corpus {
        let log_rel = format!("logs/{}.csv", g.dance.id);
        write_file(&out.join(&log_rel), &ingest::log_to_csv(&g.log))?;
        index.push_str(&format!(
            "{},{},{},{},{}\n",
            g.dance.id,
            log_rel,
            g.dance.tempo_bpm,
            g.dance.intro_s,
            g.labels.len()
        ));
        labels.push((g.dance.id.clone(), g.labels.clone()));
        outputs.push(log_rel);
    }
    write_file(&out.join("index.csv"), &index)?;
    write_file(&out.join("labels.csv"), &synth::labels_to_csv(&labels))?;
    let dataset = synth::corpus_dataset(&corpus);
    write_file(&out.join("samples.json"), &dataset.to_json())?;
    outputs.extend([
        "index.csv".into(),
        "labels.csv".into(),
        "samples.json".into(),
    ]);

    RunManifest::new("simulate", args.config.as_deref(), Some(config.seed))
        .with_outputs(out, &outputs)
        .write(&out.join("manifest.json"))
        .map_err(AppError::runtime)?;
    println!(
        "wrote {} dances ({} figures) to {}",
        corpus.len(),
        dataset.n_figures(),
        out.display()
    );
    Ok(())
}

/// Attach labels to freshly ingested samples.
fn apply_labels(
    dance: &mut figrec_core::data::DanceSequence,
    labels: &[(String, Vec<FigureLabel>)],
) -> Result<(), AppError> {
    let Some((_, seq)) = labels.iter().find(|(id, _)| *id == dance.id) else {
        return Err(AppError::Input(format!(
            "labels file has no rows for dance {:?}",
            dance.id
        )));
    };
    if seq.len() != dance.figures.len() {
        return Err(AppError::Input(format!(
            "dance {:?}: {} labels for {} figures",
            dance.id,
            seq.len(),
            dance.figures.len()
        )));
    }
    for (figure, &label) in dance.figures.iter_mut().zip(seq) {
        *figure = figure.clone().with_label(Some(label));
    }
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<(), AppError> {
    let labels = match &args.labels {
        Some(path) => Some(synth::labels_from_csv(&read_file(path)?).map_err(AppError::input)?),
        None => None,
    };

    let mut dances = Vec::new();
    if let Some(log_path) = &args.log {
        let (tempo, intro, figures) = match (args.tempo, args.intro, args.figures) {
            (Some(t), Some(i), Some(f)) => (t, i, f),
            _ => {
                return Err(AppError::Input(
                    "single-log mode needs --tempo, --intro, and --figures".to_string(),
                ))
            }
        };
        let id = args.id.clone().unwrap_or_else(|| {
            log_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dance".to_string())
        });
        dances.push(ingest_one(
            log_path,
            &id,
            tempo,
            intro,
            figures,
            args.extension,
            !args.no_unwrap_yaw,
        )?);
    } else if let Some(index_path) = &args.index {
        let base = index_path.parent().unwrap_or(Path::new("."));
        for entry in parse_index(&read_file(index_path)?)? {
            dances.push(ingest_one(
                &base.join(&entry.log),
                &entry.dance_id,
                entry.tempo_bpm,
                entry.intro_s,
                entry.n_figures,
                args.extension,
                !args.no_unwrap_yaw,
            )?);
        }
    } else {
        return Err(AppError::Input("pass either --log or --index".to_string()));
    }

    if let Some(labels) = &labels {
        for dance in &mut dances {
            apply_labels(dance, labels)?;
        }
    }
    let dataset = Dataset::new(dances).map_err(AppError::input)?;
    write_file(&args.out, &dataset.to_json())?;
    RunManifest::new("ingest", args.labels.as_deref(), None)
        .with_inputs(&[args.log.as_deref(), args.index.as_deref()])
        .with_output_file(&args.out)
        .write(&manifest::sibling(&args.out))
        .map_err(AppError::runtime)?;
    println!(
        "ingested {} dances ({} figures) to {}",
        dataset.dances().len(),
        dataset.n_figures(),
        args.out.display()
    );
    Ok(())
}

struct IndexEntry {
    dance_id: String,
    log: String,
    tempo_bpm: f64,
    intro_s: f64,
    n_figures: usize,
}

fn parse_index(content: &str) -> Result<Vec<IndexEntry>, AppError> {
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == "dance_id,log,tempo_bpm,intro_s,n_figures" => {}
        _ => {
            return Err(AppError::Input(
                "index csv must start with header 'dance_id,log,tempo_bpm,intro_s,n_figures'"
                    .to_string(),
            ))
        }
    }
    let mut out = Vec::new();
    for (idx, raw_line) in lines {
        let line = idx + 1;
        let row = raw_line.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 5 {
            return Err(AppError::Input(format!(
                "index csv line {line}: expected 5 columns"
            )));
        }
        let parse_err = |what: &str| AppError::Input(format!("index csv line {line}: bad {what}"));
        out.push(IndexEntry {
            dance_id: f[0].to_string(),
            log: f[1].to_string(),
            tempo_bpm: f[2].parse().map_err(|_| parse_err("tempo"))?,
            intro_s: f[3].parse().map_err(|_| parse_err("intro"))?,
            n_figures: f[4].parse().map_err(|_| parse_err("figure count"))?,
        });
    }
    Ok(out)
}

fn ingest_one(
    log_path: &Path,
    id: &str,
    tempo: f64,
    intro: f64,
    figures: usize,
    extension: f64,
    unwrap: bool,
) -> Result<figrec_core::data::DanceSequence, AppError> {
    let log = ingest::parse_log(log_path)
        .map_err(|e| AppError::Input(format!("{}: {e}", log_path.display())))?;
    let spec = SegmentationSpec::new(tempo, intro, figures, extension).map_err(AppError::input)?;
    let samples = ingest::ingest_log(log, &spec, unwrap)
        .map_err(|e| AppError::Input(format!("{}: {e}", log_path.display())))?;
    Ok(figrec_core::data::DanceSequence {
        id: id.to_string(),
        tempo_bpm: tempo,
        intro_s: intro,
        figures: samples,
    })
}

fn cmd_train_hmm(args: TrainHmmArgs) -> Result<(), AppError> {
    let dataset = read_dataset(&args.samples)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut training_pairs = Vec::new();
    for d in dataset.dances() {
        let seq_labels = d
            .labels()
            .ok_or_else(|| AppError::Input(format!("dance {:?} has unlabeled figures", d.id)))?;
        features.push(d.figures.iter().map(ghmm::reduce_means).collect::<Vec<_>>());
        training_pairs.push((d.id.clone(), seq_labels.clone()));
        labels.push(seq_labels);
    }
    let (t_trained, _) = TransitionMatrix::trained(&training_pairs).map_err(AppError::input)?;
    let opts = FitOptions {
        max_iters: args.max_iters,
        tol: args.tol,
        freeze_transitions: args.freeze_transitions,
        ..FitOptions::default()
    };
    let pi = match args.pi {
        PiInitArg::Uniform => PiInit::Uniform,
        PiInitArg::Empirical => PiInit::EmpiricalFirsts,
    };
    let (model, fit) = ghmm::train_figure_hmm(&features, &labels, &t_trained, pi, &opts)
        .map_err(AppError::runtime)?;
    write_file(&args.out, &model.to_json())?;
    if let Some(path) = &args.transitions_out {
        write_file(path, &t_trained.to_json())?;
    }
    RunManifest::new("train-hmm", None, None)
        .with_inputs(&[Some(args.samples.as_path())])
        .with_output_file(&args.out)
        .write(&manifest::sibling(&args.out))
        .map_err(AppError::runtime)?;
    println!(
        "fitted in {} iterations (converged: {}), log-likelihood {:.3}",
        fit.log_likelihood_trace.len(),
        fit.converged,
        fit.log_likelihood_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_train_nn(args: TrainNnArgs) -> Result<(), AppError> {
    let dataset = read_dataset(&args.samples)?;
    let samples: Vec<figrec_core::data::FigureSample> = dataset
        .dances()
        .iter()
        .flat_map(|d| d.figures.iter().cloned())
        .collect();
    let spec = MlpSpec::for_figures(args.depth, args.width, args.seed);
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.learning_rate,
    };
    let (model, trace) = mlp::train_on_samples(&spec, &samples, &cfg).map_err(AppError::runtime)?;
    write_file(&args.out, &model.to_json())?;
    if let (Some(predict), Some(posteriors_out)) = (&args.predict, &args.posteriors_out) {
        let target = read_dataset(predict)?;
        let mut per_dance = Vec::new();
        for d in target.dances() {
            let posts = model
                .predict_proba_samples(&d.figures)
                .map_err(AppError::runtime)?;
            per_dance.push((d.id.clone(), posts));
        }
        write_file(posteriors_out, &mlp::posteriors_to_csv(&per_dance))?;
    }
    RunManifest::new("train-nn", None, Some(args.seed))
        .with_inputs(&[Some(args.samples.as_path()), args.predict.as_deref()])
        .with_output_file(&args.out)
        .write(&manifest::sibling(&args.out))
        .map_err(AppError::runtime)?;
    println!(
        "trained {} epochs, final loss {:.4}",
        trace.len(),
        trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), AppError> {
    let dataset = read_dataset(&args.samples)?;
    let classifier = match args.classifier {
        ClassifierArg::Mlp => PipelineClassifier::Mlp {
            depth: args.depth,
            width: args.width,
            train: TrainConfig {
                epochs: args.epochs,
                batch_size: args.batch,
                learning_rate: args.learning_rate,
            },
        },
        ClassifierArg::Ghmm => PipelineClassifier::GaussianHmm {
            max_iters: args.max_iters,
            tol: args.tol,
            freeze_transitions: args.freeze_transitions,
        },
        ClassifierArg::Oracle => PipelineClassifier::Oracle,
        ClassifierArg::Uniform => PipelineClassifier::Uniform,
    };
    let cfg = CvConfig {
        n_folds: args.folds,
        seed: args.seed,
        classifier,
    };
    let outcome = eval::run_cv(&dataset, &cfg).map_err(AppError::runtime)?;
    let report = &outcome.report;

    let mut outputs = vec![
        "report.json".to_string(),
        "report.txt".to_string(),
        "confusion_raw.csv".to_string(),
        "confusion_corrected.csv".to_string(),
        "confusion_raw_counts.csv".to_string(),
        "confusion_corrected_counts.csv".to_string(),
        "improvements.json".to_string(),
    ];
    write_file(&args.out.join("report.json"), &report.to_json())?;
    write_file(&args.out.join("report.txt"), &report.render_text())?;
    write_file(
        &args.out.join("confusion_raw.csv"),
        &report.confusion_raw.to_csv(true),
    )?;
    write_file(
        &args.out.join("confusion_corrected.csv"),
        &report.confusion_corrected.to_csv(true),
    )?;
    write_file(
        &args.out.join("confusion_raw_counts.csv"),
        &report.confusion_raw.to_csv(false),
    )?;
    write_file(
        &args.out.join("confusion_corrected_counts.csv"),
        &report.confusion_corrected.to_csv(false),
    )?;
    let stats = eval::improvement_stats(report);
    write_file(
        &args.out.join("improvements.json"),
        &serde_json::to_string_pretty(&stats).expect("stats serialize"),
    )?;
    if args.emit_posteriors {
        let per_dance: Vec<(String, Vec<figrec_core::prob::ProbVector>)> = outcome
            .dances
            .iter()
            .map(|d| (d.dance_id.clone(), d.posteriors.clone()))
            .collect();
        write_file(
            &args.out.join("posteriors.csv"),
            &mlp::posteriors_to_csv(&per_dance),
        )?;
        outputs.push("posteriors.csv".to_string());
    }
    if args.emit_corrections {
        let per_dance: Vec<(String, correction::CorrectionResult)> = outcome
            .dances
            .iter()
            .map(|d| {
                (
                    d.dance_id.clone(),
                    correction::CorrectionResult {
                        raw_labels: d.raw.clone(),
                        corrected_labels: d.corrected.clone(),
                        changed: d
                            .raw
                            .iter()
                            .zip(&d.corrected)
                            .map(|(r, c)| r != c)
                            .collect(),
                    },
                )
            })
            .collect();
        write_file(
            &args.out.join("corrections.csv"),
            &correction::corrections_to_csv(&per_dance),
        )?;
        outputs.push("corrections.csv".to_string());
    }
    RunManifest::new("eval", None, Some(args.seed))
        .with_inputs(&[Some(args.samples.as_path())])
        .with_outputs(&args.out, &outputs)
        .write(&args.out.join("manifest.json"))
        .map_err(AppError::runtime)?;
    print!("{}", report.render_text());
    Ok(())
}

fn cmd_correct(args: CorrectArgs) -> Result<(), AppError> {
    let matrix = if args.unbiased {
        TransitionMatrix::unbiased()
    } else {
        let path = args
            .transitions
            .as_ref()
            .ok_or_else(|| AppError::Input("pass --transitions FILE or --unbiased".to_string()))?;
        read_matrix(path)?
    };
    let posteriors =
        mlp::posteriors_from_csv(&read_file(&args.posteriors)?).map_err(AppError::input)?;
    let per_dance: Vec<(String, correction::CorrectionResult)> = posteriors
        .into_iter()
        .map(|(id, posts)| {
            let r = if args.chained {
                correct_sequence_chained(&posts, &matrix)
            } else {
                correct_sequence(&posts, &matrix)
            };
            (id, r)
        })
        .collect();
    write_file(&args.out, &correction::corrections_to_csv(&per_dance))?;
    RunManifest::new("correct", None, None)
        .with_inputs(&[Some(args.posteriors.as_path()), args.transitions.as_deref()])
        .with_output_file(&args.out)
        .write(&manifest::sibling(&args.out))
        .map_err(AppError::runtime)?;
    let changed: usize = per_dance.iter().map(|(_, r)| r.n_changed()).sum();
    let total: usize = per_dance.iter().map(|(_, r)| r.len()).sum();
    println!("corrected {changed} of {total} figures");
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), AppError> {
    let report = eval::EvalReport::from_json(&read_file(&args.report)?)
        .map_err(|e| AppError::Input(format!("{}: {e}", args.report.display())))?;
    write_file(&args.out.join("report.txt"), &report.render_text())?;
    write_file(
        &args.out.join("confusion_raw.csv"),
        &report.confusion_raw.to_csv(true),
    )?;
    write_file(
        &args.out.join("confusion_corrected.csv"),
        &report.confusion_corrected.to_csv(true),
    )?;
    let stats = eval::improvement_stats(&report);
    write_file(
        &args.out.join("improvements.json"),
        &serde_json::to_string_pretty(&stats).expect("stats serialize"),
    )?;
    RunManifest::new("report", None, None)
        .with_inputs(&[Some(args.report.as_path())])
        .with_outputs(
            &args.out,
            &[
                "report.txt".to_string(),
                "confusion_raw.csv".to_string(),
                "confusion_corrected.csv".to_string(),
                "improvements.json".to_string(),
            ],
        )
        .write(&args.out.join("manifest.json"))
        .map_err(AppError::runtime)?;
    print!("{}", report.render_text());
    Ok(())
}
