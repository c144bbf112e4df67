//! The `latentwatch` command line: `train`, `detect`, `evaluate`, `plot`.
//!
//! Each subcommand is a plain function over its parsed arguments so the
//! pipeline can be driven in-process as well as from the binary.

pub mod config;
pub mod plot;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use latentwatch::data::{parse_timestamp, TIMESTAMP_FORMAT};
use latentwatch::{
    load_csv, load_labels, read_events, render_table, score, train_pipeline, DetectionEvent, ErrorTrace, MetricsReport,
    ModelBundle, Rule, ScoreOptions, TableRow,
};

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] latentwatch::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 usage/config, 2 data, 3 training divergence.
    pub fn exit_code(&self) -> i32 {
        use latentwatch::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Core(E::Config(_) | E::MissingKey(_)) => 1,
            CliError::Core(E::Diverged { .. }) => 3,
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Core(_) => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(
    name = "latentwatch",
    version,
    about = "Online anomaly detection from latent-space forecasting errors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the autoencoder and forecaster and write a model bundle.
    Train(TrainArgs),
    /// Stream a series through a trained bundle and emit events.
    Detect(DetectArgs),
    /// Score events against labeled anomaly windows.
    Evaluate(EvaluateArgs),
    /// Render series, label windows, events and errors as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    /// Bundle manifest written by `train`.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Series CSV (`timestamp,value…`).
    #[arg(long)]
    pub data: PathBuf,
    /// `A` or `B`; defaults to the bundle's rule.
    #[arg(long)]
    pub rule: Option<String>,
    /// Consecutive pairs for Rule A.
    #[arg(long = "p")]
    pub pairs: Option<usize>,
    /// Threshold for Rule B; defaults to the calibrated one.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Steps observed before any decision.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Event JSON lines; stdout when omitted.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Per-step error CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Event JSON lines written by `detect`.
    #[arg(long)]
    pub events: PathBuf,
    /// Label windows JSON (dataset key → list of [start, end]).
    #[arg(long)]
    pub labels: PathBuf,
    /// Label entry: exact key or a unique file stem.
    #[arg(long)]
    pub key: String,
    /// Window size shown in the table.
    #[arg(long)]
    pub window: Option<usize>,
    /// Count at most one true positive per label window.
    #[arg(long)]
    pub dedup: bool,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Series CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Event JSON lines.
    #[arg(long)]
    pub events: PathBuf,
    /// Label windows JSON.
    #[arg(long)]
    pub labels: PathBuf,
    /// Error trace CSV written by `detect --trace`.
    #[arg(long)]
    pub trace: PathBuf,
    /// SVG output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Label entry; defaults to the data file stem.
    #[arg(long)]
    pub key: Option<String>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args).map(|summary| {
            println!("{}", summary.bundle.display());
        }),
        Command::Detect(args) => cmd_detect(&args).map(|_| ()),
        Command::Evaluate(args) => cmd_evaluate(&args).map(|(_, table)| print!("{table}")),
        Command::Plot(args) => cmd_plot(&args),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub bundle: PathBuf,
    pub report: PathBuf,
}

#[derive(Serialize)]
struct TrainReportFile<'a> {
    dataset: &'a str,
    window: usize,
    seed: u64,
    autoencoder_losses: &'a [f64],
    forecaster_losses: &'a [f64],
    validation_steps: usize,
    threshold: Option<f64>,
}

pub const BUNDLE_FILE: &str = "bundle.json";
pub const REPORT_FILE: &str = "train_report.json";

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    let frame = load_csv(&config.dataset)?;
    let output = train_pipeline(&frame, &config.pipeline()?)?;

    std::fs::create_dir_all(&config.out).map_err(|e| CliError::io(&config.out, e))?;
    let bundle = config.out.join(BUNDLE_FILE);
    output.bundle.save(&bundle)?;

    let report = config.out.join(REPORT_FILE);
    let file = TrainReportFile {
        dataset: &output.bundle.metadata.dataset,
        window: config.window,
        seed: config.seed,
        autoencoder_losses: &output.autoencoder_report.epoch_losses,
        forecaster_losses: &output.forecaster_report.epoch_losses,
        validation_steps: output.validation_errors.len(),
        threshold: output.bundle.detector.config.threshold,
    };
    let mut json = serde_json::to_string_pretty(&file).map_err(latentwatch::Error::from)?;
    json.push('\n');
    std::fs::write(&report, json).map_err(|e| CliError::io(&report, e))?;
    Ok(TrainSummary { bundle, report })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOutcome {
    pub events: Vec<DetectionEvent>,
    pub trace: ErrorTrace,
}

pub fn cmd_detect(args: &DetectArgs) -> Result<DetectOutcome> {
    let bundle = ModelBundle::load(&args.bundle)?;
    let frame = load_csv(&args.data)?;

    let mut config = bundle.detector.config;
    if let Some(rule) = &args.rule {
        config.rule = rule.parse::<Rule>()?;
    }
    if let Some(p) = args.pairs {
        config.pairs = p;
    }
    if let Some(tau) = args.tau {
        config.threshold = Some(tau);
    }
    if let Some(warmup) = args.warmup {
        config.warmup = warmup;
    }

    let mut sink: Box<dyn Write> = match &args.events {
        Some(path) => Box::new(File::create(path).map_err(|e| CliError::io(path, e))?),
        None => Box::new(io::stdout().lock()),
    };
    let sink_name = args.events.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    // One line per event, flushed as soon as it exists.
    let (events, trace) = bundle.detect_with(&frame, &config, |event| {
        let line = serde_json::to_string(event)?;
        writeln!(sink, "{line}")
            .and_then(|()| sink.flush())
            .map_err(|e| latentwatch::Error::io(&sink_name, e))
    })?;

    if let Some(path) = &args.trace {
        write_trace(path, &trace, &frame, bundle.autoencoder.window())?;
    }
    Ok(DetectOutcome { events, trace })
}

/// `step,index,timestamp,error,running_mean`, one row per online step.
pub fn write_trace(path: &Path, trace: &ErrorTrace, frame: &latentwatch::SeriesFrame, window: usize) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e),
    };
    out.write_record(["step", "index", "timestamp", "error", "running_mean"])
        .map_err(csv_err)?;
    for (step, &error) in trace.errors().iter().enumerate() {
        let index = step + window;
        let mean = trace.mean_of_first(step + 1).unwrap_or(0.0);
        out.write_record([
            step.to_string(),
            index.to_string(),
            frame.timestamps()[index].format(TIMESTAMP_FORMAT).to_string(),
            error.to_string(),
            mean.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub index: usize,
    pub timestamp: NaiveDateTime,
    pub error: f64,
    pub running_mean: f64,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e),
    })?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| CliError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", record.len())));
        }
        let num = |k: usize| {
            record[k]
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("{}: {e}", &record[k])))
        };
        let int = |k: usize| {
            record[k]
                .trim()
                .parse::<usize>()
                .map_err(|e| bad(format!("{}: {e}", &record[k])))
        };
        rows.push(TraceRow {
            step: int(0)?,
            index: int(1)?,
            timestamp: parse_timestamp(&record[2]).ok_or_else(|| bad(format!("bad timestamp {:?}", &record[2])))?,
            error: num(3)?,
            running_mean: num(4)?,
        });
    }
    Ok(rows)
}

/// Returns the report and the rendered table.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(MetricsReport, String)> {
    let events = read_events(&args.events)?;
    let labels = load_labels(&args.labels, &args.key)?;
    let report = score(
        &events,
        &labels,
        ScoreOptions {
            dedup_per_window: args.dedup,
        },
    );
    let table = render_table(&[TableRow {
        dataset: args.key.clone(),
        window: args.window,
        report: report.clone(),
    }]);
    if let Some(path) = &args.out {
        let mut json = report.to_json()?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| CliError::io(path, e))?;
    }
    Ok((report, table))
}

pub fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let frame = load_csv(&args.data)?;
    let events = read_events(&args.events)?;
    let key = args.key.clone().unwrap_or_else(|| {
        args.data
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let labels = load_labels(&args.labels, &key)?;
    let trace = read_trace(&args.trace)?;
    let svg = plot::render(&frame, &events, &labels, &trace);
    std::fs::write(&args.out, svg).map_err(|e| CliError::io(&args.out, e))
}
