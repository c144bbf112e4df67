//! Synthetic series and config files shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use latentwatch::{RngState, SeriesFrame};

pub fn start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2020, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

pub const STEP_MINUTES: i64 = 5;

pub fn timestamp(index: usize) -> NaiveDateTime {
    start() + Duration::minutes(STEP_MINUTES * index as i64)
}

/// Noisy sine: `sin(2π i / period) + noise·N(0, 1)`.
pub fn sine_values(n: usize, period: f64, noise: f64, seed: u64) -> Vec<f64> {
    let mut rng = RngState::new(seed);
    (0..n)
        .map(|i| (i as f64 * std::f64::consts::TAU / period).sin() + noise * rng.standard_normal())
        .collect()
}

pub fn frame(name: &str, values: Vec<f64>) -> SeriesFrame {
    SeriesFrame::regular(name, start(), Duration::minutes(STEP_MINUTES), values).unwrap()
}

/// Small, fast settings for exercising the command line end to end.
pub fn write_toy_config(dir: &Path, dataset: &Path, rule: &str) -> PathBuf {
    let path = dir.join("toy.toml");
    let text = format!(
        r#"dataset = "{}"
window = 10
latent_dim = 3
context_len = 4
ae_epochs = 300
forecaster_epochs = 40
seed = 7
train_fraction = 0.4
validation_fraction = 0.2
rule = "{rule}"
pairs = 2
warmup = 10
quantile = 1.0
out = "{}"
hidden = [16]
model_dim = 8
heads = 2
blocks = 1
"#,
        dataset.display(),
        dir.join("run").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

/// A label file with one entry, keyed like the public benchmark's files.
pub fn write_labels(path: &Path, key: &str, windows: &[(usize, usize)]) {
    let fmt = |i: usize| timestamp(i).format("%Y-%m-%d %H:%M:%S%.6f").to_string();
    let spans: Vec<[String; 2]> = windows.iter().map(|&(s, e)| [fmt(s), fmt(e)]).collect();
    let doc = serde_json::json!({ key: spans });
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
}

/// Minimal well-formedness check on SVG output.
pub fn parse_svg(text: &str) -> roxmltree::Document<'_> {
    roxmltree::Document::parse(text).expect("SVG is well-formed XML")
}

pub fn count_class(doc: &roxmltree::Document<'_>, tag: &str, class: &str) -> usize {
    doc.descendants()
        .filter(|n| n.tag_name().name() == tag && n.attribute("class") == Some(class))
        .count()
}
