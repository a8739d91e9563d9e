//! `engage` command-line front end.
//!
//! Machine-readable JSON goes to stdout, progress and summaries to stderr.
//! Exit codes: 0 success, 1 usage, 2 data/format, 3 numeric failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::emotion::{Emotion, EmotionScores};
use crate::error::{Error, Result};
use crate::io::{self, IMAGE_SIDE};
use crate::mindstate::{stream_states, RuleSet};
use crate::nn::Model;
use crate::pipeline::{classify_frame, preprocess};
use crate::report::{self, aggregate, agreement_rate, ReportFormat};
use crate::training::{self, compute_metrics, evaluate, Example, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "engage", version, about = "Learner engagement from facial expressions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the default CNN on a FER-style CSV.
    Train(TrainArgs),
    /// Evaluate a model on a FER-style CSV and print metrics.
    Eval(EvalArgs),
    /// Score a single PGM frame.
    Infer(InferArgs),
    /// Run a frame manifest through classification and state detection.
    Stream(StreamArgs),
    /// Aggregate a timeline and compute learner agreement.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Emotion treated as the positive class for the binary aggregate.
    #[arg(long)]
    positive: Option<String>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct StreamArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Rule table JSON; the built-in default table when omitted.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Report JSON destination. The timeline CSV is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// A report or timeline JSON document.
    #[arg(long)]
    timeline: PathBuf,
    /// Learner feedback, JSON Lines.
    #[arg(long)]
    feedback: Option<PathBuf>,
}

/// Path of the epoch log written beside a model file.
pub fn epoch_log_path(model: &Path) -> PathBuf {
    model.with_extension("epochs.csv")
}

/// Path of the timeline CSV written beside a stream report.
pub fn timeline_csv_path(report: &Path) -> PathBuf {
    report.with_extension("timeline.csv")
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let value = match command {
        Command::Train(a) => cmd_train(a, stderr)?,
        Command::Eval(a) => cmd_eval(a, stderr)?,
        Command::Infer(a) => cmd_infer(a)?,
        Command::Stream(a) => cmd_stream(a, stderr)?,
        Command::Report(a) => cmd_report(a, stderr)?,
    };
    let text = serde_json::to_string_pretty(&value).expect("output serializes");
    writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("output serializes")
}

fn cmd_train(a: TrainArgs, stderr: &mut dyn Write) -> Result<serde_json::Value> {
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
        ..TrainConfig::default()
    };
    config.validate()?;
    let dataset = io::load_fer_csv(&a.data)?;
    if dataset.is_empty() {
        return Err(Error::Data(format!("{}: no samples", a.data.display())));
    }
    let examples = dataset.to_examples();
    let _ = writeln!(
        stderr,
        "training on {} samples for {} epochs (lr {}, batch {}, seed {})",
        examples.len(),
        config.epochs,
        config.learning_rate,
        config.batch_size,
        config.seed
    );
    let model = Model::default_architecture(IMAGE_SIDE, IMAGE_SIDE)?.init_parameters(config.seed);
    let outcome = training::train_with(model, &examples, &config, |s| {
        let _ = writeln!(
            stderr,
            "epoch {:>3}  loss {:.4}  train accuracy {:.4}",
            s.epoch, s.loss, s.train_accuracy
        );
    })?;
    io::save_model(&outcome.model, &a.out)?;
    let log_path = epoch_log_path(&a.out);
    std::fs::write(&log_path, training::epoch_log_csv(&outcome.log)).map_err(|e| Error::io(&log_path, e))?;
    let last = outcome.log.last().expect("at least one epoch");
    Ok(serde_json::json!({
        "model": a.out,
        "epoch_log": log_path,
        "epochs": outcome.log.len(),
        "final_loss": last.loss,
        "train_accuracy": last.train_accuracy,
    }))
}

fn cmd_eval(a: EvalArgs, stderr: &mut dyn Write) -> Result<serde_json::Value> {
    let positive = a.positive.as_deref().map(str::parse::<Emotion>).transpose()?;
    let model = io::load_model(&a.model)?;
    let dataset = io::load_fer_csv(&a.data)?;
    let examples = dataset
        .samples
        .iter()
        .map(|s| {
            Ok(Example {
                input: preprocess(&s.to_frame(), &model)?,
                label: s.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cm = evaluate(&model, &examples)?;
    let metrics = compute_metrics(&cm, positive)?;
    let _ = writeln!(
        stderr,
        "{} samples, accuracy {:.4}, macro F1 {:.4}",
        metrics.samples, metrics.accuracy, metrics.macro_f1
    );
    let mut value = json(&metrics);
    value["confusion_matrix"] = json(cm.counts());
    Ok(value)
}

#[derive(Serialize)]
struct InferOutput {
    label: Emotion,
    score: f64,
    scores: EmotionScores,
}

fn cmd_infer(a: InferArgs) -> Result<serde_json::Value> {
    let model = io::load_model(&a.model)?;
    let frame = io::load_pgm(&a.frame)?;
    let scores = classify_frame(&model, &frame)?;
    let label = scores.dominant();
    Ok(json(&InferOutput {
        label,
        score: scores.get(label),
        scores,
    }))
}

fn cmd_stream(a: StreamArgs, stderr: &mut dyn Write) -> Result<serde_json::Value> {
    let manifest = io::load_manifest(&a.manifest)?;
    if manifest.entries.is_empty() {
        return Err(Error::Data(format!("{}: manifest has no frames", a.manifest.display())));
    }
    let rules = match &a.rules {
        Some(path) => RuleSet::load(path)?,
        None => RuleSet::default_rules(),
    };
    let model = io::load_model(&a.model)?;
    let mut scored = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let frame = io::load_pgm(manifest.resolve(entry))?.with_timestamp(entry.t);
        scored.push((entry.t, classify_frame(&model, &frame)?));
    }
    let session = a
        .manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "session".into());
    let mut timeline = stream_states(&rules, &session, &scored)?;
    timeline.source = Some(a.manifest.display().to_string());
    let report = aggregate(&timeline);
    report::write_report(&report, ReportFormat::Json, &a.out)?;
    report::write_report(&report, ReportFormat::Csv, timeline_csv_path(&a.out))?;
    let _ = writeln!(
        stderr,
        "{} frames -> {} windows ({} residual), dominant state: {}",
        scored.len(),
        timeline.states.len(),
        timeline.residual_frames,
        report.dominant.as_deref().unwrap_or("none")
    );
    Ok(json(&report))
}

fn cmd_report(a: ReportArgs, stderr: &mut dyn Write) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(&a.timeline).map_err(|e| Error::io(&a.timeline, e))?;
    let timeline = report::parse_timeline_document(&text)?;
    let mut summary = aggregate(&timeline);
    if let Some(path) = &a.feedback {
        let feedback = report::load_feedback(path)?;
        summary.agreement_rate = Some(agreement_rate(&summary, &feedback)?);
    }
    let _ = writeln!(
        stderr,
        "session {}: {} windows, dominant {}{}",
        summary.session,
        summary.timeline.states.len(),
        summary.dominant.as_deref().unwrap_or("none"),
        summary
            .agreement_rate
            .map(|r| format!(", agreement {r:.3}"))
            .unwrap_or_default()
    );
    Ok(json(&summary))
}
