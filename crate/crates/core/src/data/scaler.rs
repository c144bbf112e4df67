use super::series::SeriesFrame;
use super::window::{Split, SplitSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel min/max normalization fitted on the training split only.
/// Values outside the training range map outside `[0, 1]`; nothing is
/// clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    min: Tensor,
    max: Tensor,
}

impl MinMaxScaler {
    pub fn from_bounds(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::shape("MinMaxScaler", &[min.len()], &[max.len()]));
        }
        for (channel, (&lo, &hi)) in min.iter().zip(&max).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::Contract(format!(
                    "channel {channel}: invalid bounds [{lo}, {hi}]"
                )));
            }
            if lo == hi {
                return Err(Error::DegenerateScale { channel, value: lo });
            }
        }
        Ok(MinMaxScaler {
            min: Tensor::vector(min)?,
            max: Tensor::vector(max)?,
        })
    }

    pub fn fit(frame: &SeriesFrame, split: &SplitSpec) -> Result<Self> {
        let train = split.range(Split::Train, frame.len())?;
        let c = frame.channels();
        let mut min = vec![f64::INFINITY; c];
        let mut max = vec![f64::NEG_INFINITY; c];
        for i in train {
            for (ch, &v) in frame.row(i).iter().enumerate() {
                min[ch] = min[ch].min(v);
                max[ch] = max[ch].max(v);
            }
        }
        Self::from_bounds(min, max)
    }

    pub fn channels(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &Tensor {
        &self.min
    }

    pub fn max(&self) -> &Tensor {
        &self.max
    }

    fn check(&self, frame: &SeriesFrame) -> Result<()> {
        if frame.channels() != self.channels() {
            return Err(Error::shape("scaler channels", &[self.channels()], &[frame.channels()]));
        }
        Ok(())
    }

    fn apply(&self, frame: &SeriesFrame, f: impl Fn(f64, f64, f64) -> f64) -> Result<SeriesFrame> {
        self.check(frame)?;
        let c = self.channels();
        let mut values = frame.values().clone();
        for row in values.data_mut().chunks_mut(c) {
            for ((v, &lo), &hi) in row.iter_mut().zip(self.min.data()).zip(self.max.data()) {
                *v = f(*v, lo, hi);
            }
        }
        frame.with_values(values)
    }

    /// `(x - min) / (max - min)` per channel.
    pub fn transform(&self, frame: &SeriesFrame) -> Result<SeriesFrame> {
        self.apply(frame, |x, lo, hi| (x - lo) / (hi - lo))
    }

    pub fn inverse_transform(&self, frame: &SeriesFrame) -> Result<SeriesFrame> {
        self.apply(frame, |x, lo, hi| x * (hi - lo) + lo)
    }
}

pub fn fit_scaler(frame: &SeriesFrame, split: &SplitSpec) -> Result<MinMaxScaler> {
    MinMaxScaler::fit(frame, split)
}
