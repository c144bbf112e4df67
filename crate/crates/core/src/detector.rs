//! Online decisions over the stream of forecast errors.
//!
//! At step `t` the detector encodes the window starting at `t`, appends the
//! code to its context, forecasts the next code, decodes it and compares the
//! decoded window with the window starting at `t + 1`. The newest data row
//! involved is `t + W`, which is the index an event is reported at.
//!
//! Two rules turn errors into events:
//!
//! * **Rule A**: the step-to-step increase `e_t - e_{t-1}` exceeds the mean
//!   of all errors before the pair, for `p` consecutive pairs ending at `t`.
//! * **Rule B**: `e_t` exceeds a threshold calibrated on validation errors.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::autoencoder::AutoencoderModel;
use crate::data::{parse_timestamp, stream_windows, SeriesFrame, WindowPair, TIMESTAMP_FORMAT};
use crate::error::{Error, Result};
use crate::forecaster::{ForecasterModel, LatentContext};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    A,
    B,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::A => "A",
            Rule::B => "B",
        })
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Rule::A),
            "B" | "b" => Ok(Rule::B),
            other => Err(Error::Config(format!("unknown rule {other:?} (expected A or B)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub rule: Rule,
    /// Consecutive qualifying pairs Rule A needs before it fires.
    pub pairs: usize,
    /// Rule B threshold, in the same units as the step error.
    pub threshold: Option<f64>,
    /// Errors collected before any decision is made.
    pub warmup: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            rule: Rule::A,
            pairs: 2,
            threshold: None,
            warmup: 50,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs == 0 {
            return Err(Error::Config("pairs must be at least 1".into()));
        }
        match (self.rule, self.threshold) {
            (Rule::B, None) => Err(Error::Config("rule B needs a calibrated threshold".into())),
            (_, Some(tau)) if !(tau.is_finite() && tau >= 0.0) => Err(Error::Config(format!(
                "threshold must be finite and non-negative, got {tau}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Append-only error list with exact prefix sums, so every running mean is
/// the same left-to-right sum a batch computation would produce.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTrace {
    errors: Vec<f64>,
    prefix: Vec<f64>,
}

impl ErrorTrace {
    pub fn new() -> Self {
        ErrorTrace {
            errors: Vec::new(),
            prefix: vec![0.0],
        }
    }

    pub fn push(&mut self, error: f64) -> Result<()> {
        if !(error.is_finite() && error >= 0.0) {
            return Err(Error::Contract(format!(
                "step error must be finite and non-negative, got {error}"
            )));
        }
        if self.prefix.is_empty() {
            self.prefix.push(0.0);
        }
        let total = self.running_sum() + error;
        self.errors.push(error);
        self.prefix.push(total);
        Ok(())
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn running_sum(&self) -> f64 {
        self.prefix.last().copied().unwrap_or(0.0)
    }

    pub fn running_mean(&self) -> Option<f64> {
        self.mean_of_first(self.len())
    }

    /// Mean of the first `n` errors; `None` for `n == 0` or past the end.
    pub fn mean_of_first(&self, n: usize) -> Option<f64> {
        if n == 0 || n > self.len() {
            return None;
        }
        Some(self.prefix[n] / n as f64)
    }
}

/// Why an event fired.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    /// Rule A: for each qualifying pair (oldest first) the increase and the
    /// mean it had to beat.
    Pairs { increases: Vec<f64>, means: Vec<f64> },
    /// Rule B: `error - threshold`.
    Margin { threshold: f64, margin: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Warmup,
    Normal,
    Anomaly(Diagnostic),
}

impl Decision {
    pub fn is_anomaly(&self) -> bool {
        matches!(self, Decision::Anomaly(_))
    }
}

/// The pair condition at 0-based step `k` of `errors`: `e_k - e_{k-1}`
/// against the mean of `e_0 ..= e_{k-2}`.
fn pair_at(trace: &ErrorTrace, k: usize) -> Option<(f64, f64)> {
    if k < 2 {
        return None;
    }
    let e = trace.errors();
    let increase = e[k] - e[k - 1];
    let mean = trace.mean_of_first(k - 1)?;
    (increase > mean).then_some((increase, mean))
}

/// Appends `error` and applies Rule A with `pairs` consecutive pairs.
pub fn rule_a_update(trace: &mut ErrorTrace, error: f64, pairs: usize, warmup: usize) -> Result<Decision> {
    if pairs == 0 {
        return Err(Error::Config("pairs must be at least 1".into()));
    }
    let ready = trace.len() >= warmup;
    trace.push(error)?;
    if !ready {
        return Ok(Decision::Warmup);
    }
    let k = trace.len() - 1;
    if k + 1 < pairs {
        return Ok(Decision::Normal);
    }
    let mut increases = Vec::with_capacity(pairs);
    let mut means = Vec::with_capacity(pairs);
    for step in k + 1 - pairs..=k {
        match pair_at(trace, step) {
            Some((inc, mean)) => {
                increases.push(inc);
                means.push(mean);
            }
            None => return Ok(Decision::Normal),
        }
    }
    Ok(Decision::Anomaly(Diagnostic::Pairs { increases, means }))
}

/// Appends `error` and applies Rule B (strictly greater than `threshold`).
pub fn rule_b_update(trace: &mut ErrorTrace, error: f64, threshold: Option<f64>, warmup: usize) -> Result<Decision> {
    let tau = threshold.ok_or_else(|| Error::Config("rule B needs a calibrated threshold".into()))?;
    let ready = trace.len() >= warmup;
    trace.push(error)?;
    if !ready {
        return Ok(Decision::Warmup);
    }
    Ok(if error > tau {
        Decision::Anomaly(Diagnostic::Margin {
            threshold: tau,
            margin: error - tau,
        })
    } else {
        Decision::Normal
    })
}

/// Nearest-rank `quantile` of `errors` (`quantile` in `(0, 1]`).
pub fn calibrate_threshold(errors: &[f64], quantile: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InsufficientData {
            what: "threshold calibration",
            needed: 1,
            got: 0,
        });
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::Config(format!("quantile must lie in (0, 1], got {quantile}")));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::Contract("validation errors must be finite".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // The small slack keeps q·n that should be integral (0.99 · 1000) from
    // rounding up a rank.
    let rank = ((quantile * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

/// Mean absolute deviation between a predicted and an observed window.
pub fn window_error(prediction: &Tensor, observed: &Tensor) -> Result<f64> {
    let diff = prediction.sub(observed)?;
    if diff.is_empty() {
        return Err(Error::Contract("cannot score an empty window".into()));
    }
    Ok(diff.data().iter().map(|d| d.abs()).sum::<f64>() / diff.len() as f64)
}

/// One online step: pushes the code of `current` into `context`, then
/// scores the decoded forecast against `next`.
pub fn step_error(
    ae: &AutoencoderModel,
    forecaster: &ForecasterModel,
    context: &mut LatentContext,
    current: &Tensor,
    next: &Tensor,
) -> Result<f64> {
    context.push(&ae.encode(current)?)?;
    let prediction = ae.decode(&forecaster.forecast(context)?)?;
    window_error(&prediction, next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    /// Row of the series the event is attributed to (the newest row seen).
    pub index: usize,
    #[serde(serialize_with = "write_timestamp", deserialize_with = "read_timestamp")]
    pub timestamp: NaiveDateTime,
    pub error: f64,
    pub rule: Rule,
    #[serde(skip)]
    pub diagnostic: Option<Diagnostic>,
}

fn write_timestamp<S: Serializer>(ts: &NaiveDateTime, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(&ts.format(TIMESTAMP_FORMAT))
}

fn read_timestamp<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<NaiveDateTime, D::Error> {
    let raw = String::deserialize(d)?;
    parse_timestamp(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp {raw:?}")))
}

/// Per-series detector state: the latent context and the error list.
#[derive(Debug)]
pub struct Detector<'m> {
    ae: &'m AutoencoderModel,
    forecaster: &'m ForecasterModel,
    config: DetectorConfig,
    context: LatentContext,
    trace: ErrorTrace,
}

impl<'m> Detector<'m> {
    pub fn new(ae: &'m AutoencoderModel, forecaster: &'m ForecasterModel, config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        if ae.latent_dim() != forecaster.latent_dim() {
            return Err(Error::Config(format!(
                "autoencoder latent size {} does not match forecaster latent size {}",
                ae.latent_dim(),
                forecaster.latent_dim()
            )));
        }
        Ok(Detector {
            ae,
            forecaster,
            config,
            context: LatentContext::for_model(forecaster),
            trace: ErrorTrace::new(),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn trace(&self) -> &ErrorTrace {
        &self.trace
    }

    pub fn into_trace(self) -> ErrorTrace {
        self.trace
    }

    /// Consumes one window pair; `timestamp` belongs to row `pair.newest_index()`.
    pub fn step(&mut self, pair: &WindowPair, timestamp: NaiveDateTime) -> Result<Option<DetectionEvent>> {
        let error = step_error(self.ae, self.forecaster, &mut self.context, &pair.current, &pair.next)?;
        let decision = match self.config.rule {
            Rule::A => rule_a_update(&mut self.trace, error, self.config.pairs, self.config.warmup)?,
            Rule::B => rule_b_update(&mut self.trace, error, self.config.threshold, self.config.warmup)?,
        };
        Ok(match decision {
            Decision::Anomaly(diagnostic) => Some(DetectionEvent {
                index: pair.newest_index(),
                timestamp,
                error,
                rule: self.config.rule,
                diagnostic: Some(diagnostic),
            }),
            Decision::Warmup | Decision::Normal => None,
        })
    }
}

/// Errors of every online step over a normalized `frame`, no decisions.
pub fn error_trace(ae: &AutoencoderModel, forecaster: &ForecasterModel, frame: &SeriesFrame) -> Result<ErrorTrace> {
    let mut context = LatentContext::for_model(forecaster);
    let mut trace = ErrorTrace::new();
    for pair in stream_windows(frame, ae.window())? {
        trace.push(step_error(ae, forecaster, &mut context, &pair.current, &pair.next)?)?;
    }
    Ok(trace)
}

/// Single pass over a normalized `frame`; `on_event` sees each event as
/// soon as it is produced.
pub fn run_online_with(
    ae: &AutoencoderModel,
    forecaster: &ForecasterModel,
    frame: &SeriesFrame,
    config: &DetectorConfig,
    mut on_event: impl FnMut(&DetectionEvent) -> Result<()>,
) -> Result<(Vec<DetectionEvent>, ErrorTrace)> {
    let w = ae.window();
    if frame.channels() != ae.channels() {
        return Err(Error::Config(format!(
            "series has {} channels but the model expects {}",
            frame.channels(),
            ae.channels()
        )));
    }
    let needed = w + 1 + config.warmup;
    if frame.len() < needed {
        return Err(Error::InsufficientData {
            what: "online detection",
            needed,
            got: frame.len(),
        });
    }
    let mut detector = Detector::new(ae, forecaster, *config)?;
    let mut events = Vec::new();
    for pair in stream_windows(frame, w)? {
        let ts = frame.timestamps()[pair.newest_index()];
        if let Some(event) = detector.step(&pair, ts)? {
            on_event(&event)?;
            events.push(event);
        }
    }
    Ok((events, detector.into_trace()))
}

pub fn run_online(
    ae: &AutoencoderModel,
    forecaster: &ForecasterModel,
    frame: &SeriesFrame,
    config: &DetectorConfig,
) -> Result<(Vec<DetectionEvent>, ErrorTrace)> {
    run_online_with(ae, forecaster, frame, config, |_| Ok(()))
}
