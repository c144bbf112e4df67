//! Point-in-window scoring against labeled anomaly windows.
//!
//! Every event inside a label window is a true positive and every other
//! event a false positive; a window counts as detected once any event falls
//! inside it. Precision is per event, recall per window. Windows are closed
//! timestamp intervals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::Serialize;

use crate::data::{parse_timestamp, TIMESTAMP_FORMAT};
use crate::detector::DetectionEvent;
use crate::error::{Error, Result};

/// Sorted, pairwise-disjoint, closed `[start, end]` intervals.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelWindows {
    windows: Vec<(NaiveDateTime, NaiveDateTime)>,
}

impl LabelWindows {
    /// Sorts by start and rejects reversed or overlapping intervals.
    pub fn new(mut windows: Vec<(NaiveDateTime, NaiveDateTime)>) -> Result<Self> {
        for (index, (start, end)) in windows.iter().enumerate() {
            if end < start {
                return Err(Error::InvalidInterval {
                    index,
                    start: start.format(TIMESTAMP_FORMAT).to_string(),
                    end: end.format(TIMESTAMP_FORMAT).to_string(),
                });
            }
        }
        windows.sort();
        if let Some(i) = (1..windows.len()).find(|&i| windows[i].0 <= windows[i - 1].1) {
            return Err(Error::Config(format!(
                "label windows starting {} and {} overlap",
                windows[i - 1].0.format(TIMESTAMP_FORMAT),
                windows[i].0.format(TIMESTAMP_FORMAT)
            )));
        }
        Ok(LabelWindows { windows })
    }

    pub fn windows(&self) -> &[(NaiveDateTime, NaiveDateTime)] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Index of the window containing `ts`, boundaries included.
    pub fn locate(&self, ts: NaiveDateTime) -> Option<usize> {
        let after = self.windows.partition_point(|(start, _)| *start <= ts);
        let candidate = after.checked_sub(1)?;
        (ts <= self.windows[candidate].1).then_some(candidate)
    }
}

/// Reads one entry of a label file in the `{"file.csv": [[start, end], ...]}`
/// layout. `key` matches a full entry name, or otherwise the file stem of
/// exactly one entry (`machine_temperature_system_failure`).
pub fn load_labels(path: impl AsRef<Path>, key: &str) -> Result<LabelWindows> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let all: BTreeMap<String, Vec<[String; 2]>> = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;

    let entry = match all.get(key) {
        Some(entry) => entry,
        None => {
            let stem_of = |name: &str| Path::new(name).file_stem().and_then(|s| s.to_str()).map(str::to_owned);
            let mut hits = all.iter().filter(|(name, _)| stem_of(name).as_deref() == Some(key));
            match (hits.next(), hits.next()) {
                (Some((_, entry)), None) => entry,
                (Some(_), Some(_)) => return Err(Error::Config(format!("label key {key:?} is ambiguous"))),
                _ => return Err(Error::MissingKey(key.to_owned())),
            }
        }
    };

    let parse = |s: &str| {
        parse_timestamp(s).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: raw.find(s).map_or(0, |at| raw[..at].lines().count().max(1)),
            message: format!("bad timestamp {s:?}"),
        })
    };
    let windows = entry
        .iter()
        .map(|[start, end]| Ok((parse(start)?, parse(end)?)))
        .collect::<Result<Vec<_>>>()?;
    LabelWindows::new(windows)
}

/// Reads JSON-lines events; blank lines are skipped.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<DetectionEvent>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScoreOptions {
    /// Count at most one true positive per label window.
    pub dedup_per_window: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub windows_hit: usize,
    pub windows_total: usize,
    /// 0 when there are no events; see `precision_defined`.
    pub precision: f64,
    /// 0 when there are no windows.
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
}

impl MetricsReport {
    pub fn from_counts(
        true_positives: usize,
        false_positives: usize,
        windows_hit: usize,
        windows_total: usize,
    ) -> Self {
        let flagged = true_positives + false_positives;
        let precision_defined = flagged > 0;
        let precision = if precision_defined {
            true_positives as f64 / flagged as f64
        } else {
            0.0
        };
        let recall = if windows_total > 0 {
            windows_hit as f64 / windows_total as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricsReport {
            true_positives,
            false_positives,
            windows_hit,
            windows_total,
            precision,
            recall,
            f1,
            precision_defined,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub dataset: String,
    /// Shown as `-` when unknown.
    pub window: Option<usize>,
    pub report: MetricsReport,
}

/// Aligned plain-text table, percentages to one decimal.
pub fn render_table(rows: &[TableRow]) -> String {
    let header = ["Dataset", "Window Size", "Precision", "Recall", "F1 Score"];
    let pct = |v: f64| format!("{:.1}%", v * 100.0);
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            let precision = if r.report.precision_defined {
                pct(r.report.precision)
            } else {
                "n/a".to_owned()
            };
            [
                r.dataset.clone(),
                r.window.map_or_else(|| "-".to_owned(), |w| w.to_string()),
                precision,
                pct(r.report.recall),
                pct(r.report.f1),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..5)
        .map(|c| {
            cells
                .iter()
                .map(|row| row[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = String::new();
    let mut line = |fields: [&str; 5]| {
        let mut text = format!("{:<w$}", fields[0], w = widths[0]);
        for c in 1..5 {
            let _ = write!(text, "  {:>w$}", fields[c], w = widths[c]);
        }
        out.push_str(text.trim_end());
        out.push('\n');
    };
    line(header);
    for row in &cells {
        line([&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    out
}

pub fn score(events: &[DetectionEvent], labels: &LabelWindows, options: ScoreOptions) -> MetricsReport {
    let mut hits = vec![0usize; labels.len()];
    let mut false_positives = 0;
    for event in events {
        match labels.locate(event.timestamp) {
            Some(w) => hits[w] += 1,
            None => false_positives += 1,
        }
    }
    let windows_hit = hits.iter().filter(|&&h| h > 0).count();
    let true_positives = if options.dedup_per_window {
        windows_hit
    } else {
        hits.iter().sum()
    };
    MetricsReport::from_counts(true_positives, false_positives, windows_hit, labels.len())
}
