mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use common::*;
use latentwatch::{load_labels, score, ModelBundle, ScoreOptions};
use latentwatch_cli::{cmd_detect, cmd_evaluate, cmd_plot, cmd_train, DetectArgs, EvaluateArgs, PlotArgs, TrainArgs};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latentwatch"))
}

struct Toy {
    dir: tempfile::TempDir,
    data: PathBuf,
    labels: PathBuf,
    bundle: PathBuf,
}

const KEY: &str = "synthetic/toy.csv";

/// Trains the toy config through the binary; a spike sits in the test rows.
fn toy(rule: &str) -> Toy {
    let dir = tempfile::tempdir().unwrap();
    let mut values = sine_values(600, 25.0, 0.02, 11);
    values[450] += 4.0;
    let data = dir.path().join("toy.csv");
    frame("toy", values).write_csv(&data).unwrap();
    let labels = dir.path().join("labels.json");
    write_labels(&labels, KEY, &[(440, 470), (520, 540), (560, 570), (580, 590)]);
    let config = write_toy_config(dir.path(), &data, rule);

    let status = bin().arg("train").arg("--config").arg(&config).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let bundle = dir.path().join("run").join("bundle.json");
    assert!(bundle.exists());
    assert!(dir.path().join("run").join("train_report.json").exists());
    Toy {
        dir,
        data,
        labels,
        bundle,
    }
}

fn detect_args(toy: &Toy, events: &Path, trace: &Path) -> DetectArgs {
    DetectArgs {
        bundle: toy.bundle.clone(),
        data: toy.data.clone(),
        rule: None,
        pairs: None,
        tau: None,
        warmup: None,
        events: Some(events.to_path_buf()),
        trace: Some(trace.to_path_buf()),
    }
}

#[test]
fn detect_evaluate_plot_round_trip() {
    let toy = toy("A");
    let events_path = toy.dir.path().join("events.jsonl");
    let trace_path = toy.dir.path().join("trace.csv");
    let outcome = cmd_detect(&detect_args(&toy, &events_path, &trace_path)).unwrap();

    // One line per event, and a trace row per online step.
    let lines = std::fs::read_to_string(&events_path).unwrap();
    assert_eq!(lines.lines().count(), outcome.events.len());
    let trace_rows = std::fs::read_to_string(&trace_path).unwrap().lines().count() - 1;
    assert_eq!(trace_rows, 600 - 10);
    assert_eq!(trace_rows, outcome.trace.len());

    // Scoring the file equals scoring in process.
    let (report, table) = cmd_evaluate(&EvaluateArgs {
        events: events_path.clone(),
        labels: toy.labels.clone(),
        key: "toy".into(),
        window: Some(10),
        dedup: false,
        out: Some(toy.dir.path().join("metrics.json")),
    })
    .unwrap();
    let bundle = ModelBundle::load(&toy.bundle).unwrap();
    let (in_process, _) = bundle.detect(&latentwatch::load_csv(&toy.data).unwrap()).unwrap();
    let labels = load_labels(&toy.labels, KEY).unwrap();
    assert_eq!(report, score(&in_process, &labels, ScoreOptions::default()));
    assert!(table.contains("Window Size") && table.contains("F1 Score"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(toy.dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["true_positives"], report.true_positives);

    let svg_path = toy.dir.path().join("plot.svg");
    cmd_plot(&PlotArgs {
        data: toy.data.clone(),
        events: events_path,
        labels: toy.labels.clone(),
        trace: trace_path,
        out: svg_path.clone(),
        key: None,
    })
    .unwrap();
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    let doc = parse_svg(&svg);
    assert_eq!(count_class(&doc, "circle", "event"), outcome.events.len());
    assert_eq!(count_class(&doc, "rect", "label-window"), 4);
    assert_eq!(count_class(&doc, "polyline", "error"), 1);
}

#[test]
fn spike_is_found_and_train_rows_are_quiet() {
    let toy = toy("A");
    let events = toy.dir.path().join("e.jsonl");
    let trace = toy.dir.path().join("t.csv");
    // The spike lands as one sharp jump in error, so a single increasing
    // pair is what can catch it.
    let outcome = cmd_detect(&DetectArgs {
        pairs: Some(1),
        ..detect_args(&toy, &events, &trace)
    })
    .unwrap();
    assert!(
        outcome.events.iter().any(|e| (450..470).contains(&e.index)),
        "{:?}",
        outcome.events
    );

    // The training rows alone produce nothing.
    let train_only = toy.dir.path().join("train.csv");
    let frame = latentwatch::load_csv(&toy.data).unwrap();
    frame.slice(0, 240).unwrap().write_csv(&train_only).unwrap();
    let quiet = cmd_detect(&DetectArgs {
        data: train_only,
        ..detect_args(&toy, &events, &trace)
    })
    .unwrap();
    assert!(quiet.events.is_empty(), "{:?}", quiet.events);
}

#[test]
fn rule_overrides_apply() {
    let toy = toy("B");
    let events = toy.dir.path().join("e.jsonl");
    let trace = toy.dir.path().join("t.csv");
    let calibrated = cmd_detect(&detect_args(&toy, &events, &trace)).unwrap();
    assert!(calibrated.events.iter().all(|e| e.rule == latentwatch::Rule::B));
    let everything = cmd_detect(&DetectArgs {
        tau: Some(0.0),
        warmup: Some(0),
        ..detect_args(&toy, &events, &trace)
    })
    .unwrap();
    assert_eq!(everything.events.len(), 600 - 10);
    let as_a = cmd_detect(&DetectArgs {
        rule: Some("A".into()),
        pairs: Some(1),
        ..detect_args(&toy, &events, &trace)
    })
    .unwrap();
    assert!(as_a.events.iter().all(|e| e.rule == latentwatch::Rule::A));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    frame("toy", sine_values(400, 25.0, 0.02, 3)).write_csv(&data).unwrap();
    let config = write_toy_config(dir.path(), &data, "A");
    let run = |out: &str| {
        let summary = cmd_train(&TrainArgs {
            config: config.clone(),
            seed: None,
            out: Some(dir.path().join(out)),
        })
        .unwrap();
        let manifest = std::fs::read(&summary.bundle).unwrap();
        let blob = std::fs::read(dir.path().join(out).join("bundle.bin")).unwrap();
        (manifest, blob)
    };
    assert_eq!(run("a"), run("b"));

    let other = cmd_train(&TrainArgs {
        config: config.clone(),
        seed: Some(99),
        out: Some(dir.path().join("c")),
    })
    .unwrap();
    assert_ne!(
        std::fs::read(dir.path().join("c").join("bundle.bin")).unwrap(),
        run("a").1
    );
    assert!(other.report.exists());
}

#[test]
fn empty_events_file_scores_zero_recall() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("none.jsonl");
    std::fs::write(&events, "").unwrap();
    let labels = dir.path().join("labels.json");
    write_labels(&labels, KEY, &[(10, 20), (40, 50)]);
    let (report, table) = cmd_evaluate(&EvaluateArgs {
        events,
        labels,
        key: "toy".into(),
        window: None,
        dedup: false,
        out: None,
    })
    .unwrap();
    assert_eq!(report.recall, 0.0);
    assert!(!report.precision_defined);
    assert!(table.contains("n/a"));
}

#[test]
fn table_row_from_event_files() {
    // 964 events inside three windows and 36 outside: 96.4% precision,
    // every window hit.
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.json");
    write_labels(&labels, KEY, &[(0, 399), (1000, 1399), (2000, 2399)]);
    let mut lines = String::new();
    let mut push = |i: usize| {
        lines.push_str(&format!(
            "{{\"index\":{i},\"timestamp\":\"{}\",\"error\":0.5,\"rule\":\"A\"}}\n",
            timestamp(i).format("%Y-%m-%d %H:%M:%S")
        ));
    };
    (0..322).for_each(&mut push);
    (1000..1321).for_each(&mut push);
    (2000..2321).for_each(&mut push);
    (500..536).for_each(&mut push);
    let events = dir.path().join("events.jsonl");
    std::fs::write(&events, lines).unwrap();
    let (report, table) = cmd_evaluate(&EvaluateArgs {
        events,
        labels,
        key: "toy".into(),
        window: Some(90),
        dedup: false,
        out: None,
    })
    .unwrap();
    assert_eq!((report.true_positives, report.false_positives), (964, 36));
    assert!(
        table.contains("96.4%") && table.contains("100.0%") && table.contains("98.2%"),
        "{table}"
    );
}

#[test]
fn plot_without_events_is_still_valid() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.csv");
    frame("a<b & c", sine_values(200, 25.0, 0.0, 1))
        .write_csv(&data)
        .unwrap();
    let events = dir.path().join("e.jsonl");
    std::fs::write(&events, "").unwrap();
    let labels = dir.path().join("l.json");
    write_labels(&labels, "x/s.csv", &[(10, 20), (50, 60), (100, 110), (150, 160)]);
    let trace = dir.path().join("t.csv");
    std::fs::write(
        &trace,
        "step,index,timestamp,error,running_mean\n0,10,2020-01-01 00:50:00,0.1,0.1\n",
    )
    .unwrap();
    let out = dir.path().join("p.svg");
    let args = PlotArgs {
        data,
        events,
        labels,
        trace,
        out: out.clone(),
        key: None,
    };
    cmd_plot(&args).unwrap();
    let first = std::fs::read_to_string(&out).unwrap();
    let doc = parse_svg(&first);
    assert_eq!(count_class(&doc, "circle", "event"), 0);
    assert_eq!(count_class(&doc, "rect", "label-window"), 4);
    cmd_plot(&args).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), first);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();

    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["detect", "--bundle", "x.json"]), Some(1));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "dataset = \"x.csv\"\nwindow = 1\n").unwrap();
    assert_eq!(code(&["train", "--config", bad.to_str().unwrap()]), Some(1));

    let missing = dir.path().join("missing.toml");
    std::fs::write(
        &missing,
        format!("dataset = \"{}\"\nwindow = 10\n", dir.path().join("nope.csv").display()),
    )
    .unwrap();
    assert_eq!(code(&["train", "--config", missing.to_str().unwrap()]), Some(2));

    let data = dir.path().join("toy.csv");
    frame("toy", sine_values(300, 25.0, 0.02, 5)).write_csv(&data).unwrap();
    let config = write_toy_config(dir.path(), &data, "A");
    let text = std::fs::read_to_string(&config).unwrap() + "learning_rate = 1e300\n";
    std::fs::write(&config, text).unwrap();
    assert_eq!(code(&["train", "--config", config.to_str().unwrap()]), Some(3));
}

#[test]
fn detect_rejects_version_and_channel_mismatch() {
    let toy = toy("A");
    let events = toy.dir.path().join("e.jsonl");
    let trace = toy.dir.path().join("t.csv");

    let wide = toy.dir.path().join("wide.csv");
    let frame = latentwatch::load_csv(&toy.data).unwrap();
    let doubled: Vec<f64> = frame.values().data().iter().flat_map(|&v| [v, v]).collect();
    let values = latentwatch::Tensor::matrix(frame.len(), 2, doubled).unwrap();
    latentwatch::SeriesFrame::new("wide", frame.timestamps().to_vec(), values)
        .unwrap()
        .write_csv(&wide)
        .unwrap();
    let err = cmd_detect(&DetectArgs {
        data: wide,
        ..detect_args(&toy, &events, &trace)
    })
    .unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");

    let manifest = std::fs::read_to_string(&toy.bundle).unwrap();
    std::fs::write(
        &toy.bundle,
        manifest.replace("\"format_version\": 1", "\"format_version\": 2"),
    )
    .unwrap();
    let err = cmd_detect(&detect_args(&toy, &events, &trace)).unwrap_err();
    assert!(matches!(
        err,
        latentwatch_cli::CliError::Core(latentwatch::Error::Version { found: 2, .. })
    ));
    assert_eq!(err.exit_code(), 2);
}
