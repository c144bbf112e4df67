use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::series::SeriesFrame;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
    All,
}

/// Contiguous chronological split: train, then validation, then test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.3,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, validation_fraction: f64) -> Result<Self> {
        let spec = SplitSpec {
            train_fraction,
            validation_fraction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !in_unit(self.train_fraction)
            || !in_unit(self.validation_fraction)
            || self.train_fraction + self.validation_fraction >= 1.0
        {
            return Err(Error::Config(format!(
                "split fractions must lie in (0, 1) and sum below 1, got train {} validation {}",
                self.train_fraction, self.validation_fraction
            )));
        }
        Ok(())
    }

    /// Row ranges for a series of `n` rows; every split must be non-empty.
    pub fn ranges(&self, n: usize) -> Result<SplitRanges> {
        self.validate()?;
        let train_end = (n as f64 * self.train_fraction).floor() as usize;
        let val_end = (n as f64 * (self.train_fraction + self.validation_fraction)).floor() as usize;
        if train_end == 0 || val_end <= train_end || val_end >= n {
            return Err(Error::InsufficientData {
                what: "three-way split",
                needed: 3,
                got: n,
            });
        }
        Ok(SplitRanges {
            train: 0..train_end,
            validation: train_end..val_end,
            test: val_end..n,
        })
    }

    pub fn range(&self, split: Split, n: usize) -> Result<Range<usize>> {
        if split == Split::All {
            return Ok(0..n);
        }
        let r = self.ranges(n)?;
        Ok(match split {
            Split::Train => r.train,
            Split::Validation => r.validation,
            Split::Test => r.test,
            Split::All => unreachable!(),
        })
    }
}

/// All stride-1 windows of one split: `count = len - W + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    windows: Tensor,
    start_indices: Vec<usize>,
    window: usize,
}

impl WindowBatch {
    /// `count × W × channels`.
    pub fn windows(&self) -> &Tensor {
        &self.windows
    }

    /// Source row of each window's first element.
    pub fn start_indices(&self) -> &[usize] {
        &self.start_indices
    }

    pub fn window_size(&self) -> usize {
        self.window
    }

    pub fn channels(&self) -> usize {
        self.windows.shape()[2]
    }

    pub fn count(&self) -> usize {
        self.start_indices.len()
    }

    /// Window `k` as `W × channels`.
    pub fn window(&self, k: usize) -> Tensor {
        let w = self.window * self.channels();
        let data = self.windows.data()[k * w..(k + 1) * w].to_vec();
        Tensor::matrix(self.window, self.channels(), data).expect("window shape")
    }

    /// `count × (W·channels)`: one flattened window per row.
    pub fn flattened(&self) -> Tensor {
        self.windows.clone().flatten_rows()
    }
}

fn window_tensor(frame: &SeriesFrame, start: usize, window: usize) -> Tensor {
    let c = frame.channels();
    let data = frame.values().data()[start * c..(start + window) * c].to_vec();
    Tensor::matrix(window, c, data).expect("window shape")
}

pub fn make_windows(frame: &SeriesFrame, window: usize, split: &SplitSpec, which: Split) -> Result<WindowBatch> {
    if window == 0 {
        return Err(Error::Config("window size must be positive".into()));
    }
    let range = split.range(which, frame.len())?;
    let len = range.len();
    if len < window {
        return Err(Error::InsufficientData {
            what: "windowing",
            needed: window,
            got: len,
        });
    }
    let c = frame.channels();
    let count = len - window + 1;
    let start_indices: Vec<usize> = (range.start..range.start + count).collect();
    let mut data = Vec::with_capacity(count * window * c);
    for &s in &start_indices {
        data.extend_from_slice(&frame.values().data()[s * c..(s + window) * c]);
    }
    Ok(WindowBatch {
        windows: Tensor::new(vec![count, window, c], data)?,
        start_indices,
        window,
    })
}

/// One online step: the window starting at `t` and the one starting at
/// `t + 1`. Producing it touches rows `t ..= t + W` only.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub t: usize,
    pub current: Tensor,
    pub next: Tensor,
}

impl WindowPair {
    /// Newest row the pair depends on.
    pub fn newest_index(&self) -> usize {
        self.t + self.current.rows()
    }
}

#[derive(Debug)]
pub struct StreamWindows<'a> {
    frame: &'a SeriesFrame,
    window: usize,
    t: usize,
}

impl Iterator for StreamWindows<'_> {
    type Item = WindowPair;

    fn next(&mut self) -> Option<WindowPair> {
        if self.t + self.window >= self.frame.len() {
            return None;
        }
        let t = self.t;
        self.t += 1;
        Some(WindowPair {
            t,
            current: window_tensor(self.frame, t, self.window),
            next: window_tensor(self.frame, t + 1, self.window),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.frame.len().saturating_sub(self.t + self.window);
        (left, Some(left))
    }
}

impl ExactSizeIterator for StreamWindows<'_> {}

/// Consecutive (current, next) window pairs in time order; `n - W` pairs.
pub fn stream_windows(frame: &SeriesFrame, window: usize) -> Result<StreamWindows<'_>> {
    if window == 0 {
        return Err(Error::Config("window size must be positive".into()));
    }
    if frame.len() < window + 1 {
        return Err(Error::InsufficientData {
            what: "streaming",
            needed: window + 1,
            got: frame.len(),
        });
    }
    Ok(StreamWindows { frame, window, t: 0 })
}
