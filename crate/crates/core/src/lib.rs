//! Online, unsupervised anomaly detection for time series.
//!
//! A dense autoencoder compresses each sliding window of the (min/max
//! normalized) series into a short latent code. An attention-based
//! forecaster reads the most recent codes and predicts the code of the next
//! window; decoding that prediction and comparing it with the window that
//! actually arrives yields one error value per time step. Anomalies are
//! flagged from the dynamics of that error stream.
//!
//! ```text
//! window_t ─► encoder ─► code_t ─► [code_{t-L+1} .. code_t] ─► forecaster
//!                                                              │
//!    window_{t+1} ◄── compare ◄── decoder ◄── predicted code ◄─┘
//! ```
//!
//! Everything numeric (tensors, layers, backpropagation, Adam) is implemented
//! in this crate on 64-bit floats with a fixed accumulation order, so a
//! training run is bit-reproducible from its seed.

pub mod autoencoder;
pub mod bundle;
pub mod data;
pub mod detector;
pub mod error;
pub mod evaluator;
pub mod forecaster;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use autoencoder::{train_autoencoder, AutoencoderArch, AutoencoderConfig, AutoencoderModel, TrainReport};
pub use bundle::{
    train_pipeline, DetectorSettings, ModelBundle, PipelineConfig, PipelineOutput, TrainingMetadata,
    BUNDLE_FORMAT_VERSION,
};
pub use data::{load_csv, make_windows, stream_windows, MinMaxScaler, SeriesFrame, Split, SplitSpec, WindowBatch};
pub use detector::{
    calibrate_threshold, error_trace, run_online, run_online_with, Decision, DetectionEvent, Detector, DetectorConfig,
    ErrorTrace, Rule,
};
pub use error::{Error, Result};
pub use evaluator::{
    load_labels, read_events, render_table, score, LabelWindows, MetricsReport, ScoreOptions, TableRow,
};
pub use forecaster::{
    train_forecaster, train_forecaster_on_codes, train_forecaster_on_segments, ForecasterArch, ForecasterConfig,
    ForecasterModel, LatentContext,
};
pub use rng::RngState;
pub use tensor::Tensor;
