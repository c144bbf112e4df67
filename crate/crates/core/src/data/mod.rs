//! Series loading, train-split normalization and sliding windows.

mod scaler;
mod series;
mod window;

pub use scaler::{fit_scaler, MinMaxScaler};
pub use series::{load_csv, parse_timestamp, SeriesFrame, TIMESTAMP_FORMAT};
pub use window::{make_windows, stream_windows, Split, SplitRanges, SplitSpec, StreamWindows, WindowBatch, WindowPair};
