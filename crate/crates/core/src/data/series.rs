use std::path::Path;

use chrono::{Duration, NaiveDateTime};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Timestamp layout used for every file this crate reads or writes.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Accepts `YYYY-MM-DD HH:MM:SS` with an optional fractional-second suffix
/// (NAB label files carry `.000000`).
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), "%Y-%m-%d %H:%M:%S%.f").ok()
}

/// A timestamped series with one or more channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    name: String,
    channel_names: Vec<String>,
    timestamps: Vec<NaiveDateTime>,
    values: Tensor,
}

impl SeriesFrame {
    /// `values` is `n × channels`; timestamps must strictly increase.
    pub fn new(name: impl Into<String>, timestamps: Vec<NaiveDateTime>, values: Tensor) -> Result<Self> {
        let channels = values.cols();
        let channel_names = if channels == 1 {
            vec!["value".to_string()]
        } else {
            (1..=channels).map(|i| format!("v{i}")).collect()
        };
        Self::with_channel_names(name, channel_names, timestamps, values)
    }

    pub fn with_channel_names(
        name: impl Into<String>,
        channel_names: Vec<String>,
        timestamps: Vec<NaiveDateTime>,
        values: Tensor,
    ) -> Result<Self> {
        if values.shape().len() != 2 || values.rows() != timestamps.len() {
            return Err(Error::shape("SeriesFrame", values.shape(), &[timestamps.len()]));
        }
        if channel_names.len() != values.cols() {
            return Err(Error::shape("SeriesFrame", &[channel_names.len()], values.shape()));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Contract(format!(
                "timestamps must strictly increase (row {} -> {})",
                i,
                i + 1
            )));
        }
        Ok(SeriesFrame {
            name: name.into(),
            channel_names,
            timestamps,
            values,
        })
    }

    /// Single-channel series on a regular grid starting at `start`.
    pub fn regular(name: impl Into<String>, start: NaiveDateTime, step: Duration, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let timestamps = (0..n as i32).map(|i| start + step * i).collect();
        Self::new(name, timestamps, Tensor::matrix(n, 1, values)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Rows `[start, end)` as a new frame.
    pub fn slice(&self, start: usize, end: usize) -> Result<SeriesFrame> {
        if start >= end || end > self.len() {
            return Err(Error::Contract(format!(
                "slice {start}..{end} out of range for {} rows",
                self.len()
            )));
        }
        let c = self.channels();
        let data = self.values.data()[start * c..end * c].to_vec();
        Ok(SeriesFrame {
            name: self.name.clone(),
            channel_names: self.channel_names.clone(),
            timestamps: self.timestamps[start..end].to_vec(),
            values: Tensor::matrix(end - start, c, data)?,
        })
    }

    /// Same timestamps and names, new values.
    pub fn with_values(&self, values: Tensor) -> Result<SeriesFrame> {
        if values.shape() != self.values.shape() {
            return Err(Error::shape(
                "SeriesFrame::with_values",
                values.shape(),
                self.values.shape(),
            ));
        }
        Ok(SeriesFrame { values, ..self.clone() })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("timestamp");
        for name in &self.channel_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, ts) in self.timestamps.iter().enumerate() {
            out.push_str(&ts.format(TIMESTAMP_FORMAT).to_string());
            for v in self.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads a NAB-style CSV: header `timestamp,value` or `timestamp,v1,...,vk`.
/// Line numbers in errors are 1-based and count the header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<SeriesFrame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("timestamp") {
        return Err(parse_err(
            1,
            "expected header `timestamp,value` or `timestamp,v1,...,vk`".into(),
        ));
    }
    let channels = header.len() - 1;
    let channel_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != channels + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", channels + 1, record.len()),
            ));
        }
        let ts =
            parse_timestamp(&record[0]).ok_or_else(|| parse_err(line, format!("bad timestamp {:?}", &record[0])))?;
        if timestamps.last().is_some_and(|prev| ts <= *prev) {
            return Err(Error::NonMonotonic {
                path: path.to_path_buf(),
                line,
            });
        }
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("bad value {field:?}")))?;
            values.push(v);
        }
        timestamps.push(ts);
    }
    if timestamps.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    let name = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let values = Tensor::matrix(timestamps.len(), channels, values)?;
    SeriesFrame::with_channel_names(name, channel_names, timestamps, values)
}
