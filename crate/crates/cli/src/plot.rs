//! Static SVG rendering of a detection run: the series with shaded label
//! windows and event markers on top, the error trace below.

use std::fmt::Write as _;

use latentwatch::{DetectionEvent, LabelWindows, SeriesFrame};

use crate::TraceRow;

const WIDTH: f64 = 1200.0;
const HEIGHT: f64 = 640.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 1180.0;
const SERIES_TOP: f64 = 40.0;
const SERIES_BOTTOM: f64 = 400.0;
const ERROR_TOP: f64 = 440.0;
const ERROR_BOTTOM: f64 = 600.0;

const PALETTE: [&str; 4] = ["#1f4e79", "#7f6000", "#385723", "#7030a0"];

struct Scale {
    lo: f64,
    hi: f64,
    top: f64,
    bottom: f64,
}

impl Scale {
    fn fit(values: impl Iterator<Item = f64>, top: f64, bottom: f64) -> Scale {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        Scale { lo, hi, top, bottom }
    }

    fn y(&self, v: f64) -> f64 {
        self.bottom - (v - self.lo) / (self.hi - self.lo) * (self.bottom - self.top)
    }
}

fn x_of(index: usize, n: usize) -> f64 {
    if n <= 1 {
        return LEFT;
    }
    LEFT + index as f64 / (n - 1) as f64 * (RIGHT - LEFT)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn polyline(out: &mut String, class: &str, color: &str, points: impl Iterator<Item = (f64, f64)>) {
    let mut coords = String::new();
    for (x, y) in points {
        if !coords.is_empty() {
            coords.push(' ');
        }
        let _ = write!(coords, "{x:.2},{y:.2}");
    }
    let _ = writeln!(
        out,
        r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1" points="{coords}"/>"#
    );
}

/// Deterministic SVG document for the given run.
pub fn render(frame: &SeriesFrame, events: &[DetectionEvent], labels: &LabelWindows, trace: &[TraceRow]) -> String {
    let n = frame.len();
    let values = frame.values().data();
    let series = Scale::fit(values.iter().copied(), SERIES_TOP, SERIES_BOTTOM);
    let errors = Scale::fit(
        trace.iter().flat_map(|r| [r.error, r.running_mean]),
        ERROR_TOP,
        ERROR_BOTTOM,
    );

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{LEFT}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(frame.name())
    );

    // Label windows first so everything else draws over them.
    let stamps = frame.timestamps();
    for (start, end) in labels.windows() {
        let first = stamps.partition_point(|t| t < start);
        let after = stamps.partition_point(|t| t <= end);
        if first >= after {
            continue;
        }
        let x0 = x_of(first, n);
        let x1 = x_of(after - 1, n);
        let _ = writeln!(
            out,
            r##"<rect class="label-window" x="{x0:.2}" y="{SERIES_TOP:.2}" width="{:.2}" height="{:.2}" fill="#f4b183" fill-opacity="0.35"/>"##,
            (x1 - x0).max(1.0),
            SERIES_BOTTOM - SERIES_TOP
        );
    }

    for channel in 0..frame.channels() {
        polyline(
            &mut out,
            "series",
            PALETTE[channel % PALETTE.len()],
            (0..n).map(|i| (x_of(i, n), series.y(frame.row(i)[channel]))),
        );
    }

    for event in events.iter().filter(|e| e.index < n) {
        let _ = writeln!(
            out,
            r##"<circle class="event" cx="{:.2}" cy="{:.2}" r="3" fill="#c00000"/>"##,
            x_of(event.index, n),
            series.y(frame.row(event.index)[0])
        );
    }

    let _ = writeln!(
        out,
        r##"<line x1="{LEFT}" y1="{ERROR_BOTTOM}" x2="{RIGHT}" y2="{ERROR_BOTTOM}" stroke="#808080"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{LEFT}" y="{:.2}" font-family="sans-serif" font-size="12">error</text>"#,
        ERROR_TOP - 6.0
    );
    let in_range = trace.iter().filter(|r| r.index < n);
    polyline(
        &mut out,
        "error",
        "#404040",
        in_range.clone().map(|r| (x_of(r.index, n), errors.y(r.error))),
    );
    polyline(
        &mut out,
        "running-mean",
        "#c55a11",
        in_range.map(|r| (x_of(r.index, n), errors.y(r.running_mean))),
    );

    out.push_str("</svg>\n");
    out
}
