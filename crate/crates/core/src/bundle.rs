//! Trained-model persistence and the end-to-end training pipeline.
//!
//! A bundle is two files: a JSON manifest (format version, architectures,
//! detector settings, training metadata and a directory of parameter
//! tensors) and a flat blob of little-endian `f64`s the directory points
//! into. Parameters therefore round-trip bit-exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{train_autoencoder, AutoencoderArch, AutoencoderConfig, AutoencoderModel, TrainReport};
use crate::data::{make_windows, MinMaxScaler, SeriesFrame, Split, SplitSpec};
use crate::detector::{
    calibrate_threshold, error_trace, run_online_with, DetectionEvent, DetectorConfig, ErrorTrace, Rule,
};
use crate::error::{Error, Result};
use crate::forecaster::{train_forecaster, ForecasterArch, ForecasterConfig, ForecasterModel};
use crate::nn::Parameters;
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Detector defaults stored with the models; `quantile` is the level the
/// Rule B threshold was calibrated at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSettings {
    pub config: DetectorConfig,
    pub quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub dataset: String,
    pub window: usize,
    pub channels: usize,
    pub latent_dim: usize,
    pub context_len: usize,
    pub seed: u64,
    pub autoencoder_epochs: usize,
    pub forecaster_epochs: usize,
    pub split: SplitSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub scaler: MinMaxScaler,
    pub autoencoder: AutoencoderModel,
    pub forecaster: ForecasterModel,
    pub detector: DetectorSettings,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the blob, in values.
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    blob: String,
    blob_values: usize,
    autoencoder: AutoencoderArch,
    forecaster: ForecasterArch,
    detector: DetectorSettings,
    metadata: TrainingMetadata,
    tensors: Vec<TensorEntry>,
}

impl ModelBundle {
    /// Validates that the pieces fit together.
    pub fn check(&self) -> Result<()> {
        let ae = self.autoencoder.arch();
        let fc = self.forecaster.arch();
        let md = &self.metadata;
        if self.scaler.channels() != ae.channels || md.channels != ae.channels {
            return Err(Error::Bundle("channel counts disagree".into()));
        }
        if md.window != ae.window || md.latent_dim != ae.latent_dim || fc.latent_dim != ae.latent_dim {
            return Err(Error::Bundle("window or latent sizes disagree".into()));
        }
        if md.context_len != fc.context_len {
            return Err(Error::Bundle("context length disagrees".into()));
        }
        Ok(())
    }

    /// Writes the manifest to `path` and the blob next to it
    /// (`<stem>.bin`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.check()?;
        let path = path.as_ref();
        let blob_name = format!(
            "{}.bin",
            path.file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Bundle(format!("bad bundle path {}", path.display())))?
        );

        let mut tensors = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut add = |name: String, t: &Tensor| {
            tensors.push(TensorEntry {
                name,
                shape: t.shape().to_vec(),
                offset: values.len(),
            });
            values.extend_from_slice(t.data());
        };
        add("scaler.min".into(), self.scaler.min());
        add("scaler.max".into(), self.scaler.max());
        for (i, t) in self.autoencoder.parameters().into_iter().enumerate() {
            add(format!("autoencoder.{i}"), t);
        }
        for (i, t) in self.forecaster.parameters().into_iter().enumerate() {
            add(format!("forecaster.{i}"), t);
        }

        let manifest = Manifest {
            format_version: BUNDLE_FORMAT_VERSION,
            blob: blob_name.clone(),
            blob_values: values.len(),
            autoencoder: self.autoencoder.arch().clone(),
            forecaster: self.forecaster.arch().clone(),
            detector: self.detector,
            metadata: self.metadata.clone(),
            tensors,
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path, e))?;

        let blob: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let blob_path = sibling(path, &blob_name);
        std::fs::write(&blob_path, blob).map_err(|e| Error::io(blob_path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&raw)?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Bundle("manifest has no format_version".into()))?;
        if found != u64::from(BUNDLE_FORMAT_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: BUNDLE_FORMAT_VERSION,
            });
        }
        let manifest: Manifest = serde_json::from_value(value)?;

        let blob_path = sibling(path, &manifest.blob);
        let bytes = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        if bytes.len() != manifest.blob_values * 8 {
            return Err(Error::Bundle(format!(
                "blob holds {} bytes, manifest expects {} values",
                bytes.len(),
                manifest.blob_values
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();

        let mut entries = manifest.tensors.iter();
        let mut next = |expected: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let entry = entries
                .next()
                .ok_or_else(|| Error::Bundle(format!("missing tensor {expected}")))?;
            if entry.name != expected || entry.shape != shape {
                return Err(Error::Bundle(format!(
                    "tensor {} {:?} where {expected} {shape:?} was expected",
                    entry.name, entry.shape
                )));
            }
            let len: usize = shape.iter().product();
            values
                .get(entry.offset..entry.offset + len)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::Bundle(format!("tensor {expected} runs past the blob")))
        };

        let channels = manifest.autoencoder.channels;
        let scaler = MinMaxScaler::from_bounds(next("scaler.min", &[channels])?, next("scaler.max", &[channels])?)?;

        // Build with throwaway initial weights, then overwrite every tensor.
        let mut rng = RngState::new(0);
        let mut autoencoder = AutoencoderModel::new(manifest.autoencoder.clone(), &mut rng)?;
        for (i, t) in autoencoder.parameters_mut().into_iter().enumerate() {
            let data = next(&format!("autoencoder.{i}"), t.shape())?;
            t.data_mut().copy_from_slice(&data);
        }
        let mut forecaster = ForecasterModel::new(manifest.forecaster.clone(), &mut rng)?;
        for (i, t) in forecaster.parameters_mut().into_iter().enumerate() {
            let data = next(&format!("forecaster.{i}"), t.shape())?;
            t.data_mut().copy_from_slice(&data);
        }
        if entries.next().is_some() {
            return Err(Error::Bundle("manifest lists more tensors than the models hold".into()));
        }

        let bundle = ModelBundle {
            scaler,
            autoencoder,
            forecaster,
            detector: manifest.detector,
            metadata: manifest.metadata,
        };
        bundle.check()?;
        Ok(bundle)
    }

    /// Normalizes a raw series with the stored scaler and runs the detector.
    pub fn detect_with(
        &self,
        frame: &SeriesFrame,
        config: &DetectorConfig,
        on_event: impl FnMut(&DetectionEvent) -> Result<()>,
    ) -> Result<(Vec<DetectionEvent>, ErrorTrace)> {
        if frame.channels() != self.scaler.channels() {
            return Err(Error::Config(format!(
                "series has {} channels but the bundle was trained on {}",
                frame.channels(),
                self.scaler.channels()
            )));
        }
        let normalized = self.scaler.transform(frame)?;
        run_online_with(&self.autoencoder, &self.forecaster, &normalized, config, on_event)
    }

    pub fn detect(&self, frame: &SeriesFrame) -> Result<(Vec<DetectionEvent>, ErrorTrace)> {
        self.detect_with(frame, &self.detector.config, |_| Ok(()))
    }
}

fn sibling(manifest: &Path, name: &str) -> PathBuf {
    manifest.parent().unwrap_or_else(|| Path::new("")).join(name)
}

/// Everything the training pipeline needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset: String,
    pub window: usize,
    pub split: SplitSpec,
    pub autoencoder: AutoencoderConfig,
    pub forecaster: ForecasterConfig,
    pub detector: DetectorConfig,
    /// Quantile of validation errors used as the Rule B threshold.
    pub quantile: f64,
    /// Recorded in the metadata; the model configs carry their own seeds.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub bundle: ModelBundle,
    pub autoencoder_report: TrainReport,
    pub forecaster_report: TrainReport,
    /// Errors over the validation rows that fed the threshold.
    pub validation_errors: Vec<f64>,
}

/// Fits the scaler on the training rows, trains both models on training
/// windows and calibrates the Rule B threshold on validation errors.
pub fn train_pipeline(frame: &SeriesFrame, config: &PipelineConfig) -> Result<PipelineOutput> {
    let scaler = MinMaxScaler::fit(frame, &config.split)?;
    let normalized = scaler.transform(frame)?;
    let windows = make_windows(&normalized, config.window, &config.split, Split::Train)?;
    let (autoencoder, autoencoder_report) = train_autoencoder(&windows, &config.autoencoder)?;
    let (forecaster, forecaster_report) = train_forecaster(
        &autoencoder,
        &normalized,
        config.window,
        &config.split,
        &config.forecaster,
    )?;

    // Replay train + validation rows online; keep the steps whose newest
    // row is a validation row.
    let ranges = config.split.ranges(frame.len())?;
    let prefix = normalized.slice(0, ranges.validation.end)?;
    let trace = error_trace(&autoencoder, &forecaster, &prefix)?;
    let validation_errors: Vec<f64> = trace
        .errors()
        .iter()
        .enumerate()
        .filter(|(t, _)| t + config.window >= ranges.validation.start)
        .map(|(_, &e)| e)
        .collect();

    let mut detector = config.detector;
    if validation_errors.is_empty() {
        if detector.rule == Rule::B && detector.threshold.is_none() {
            return Err(Error::InsufficientData {
                what: "threshold calibration",
                needed: 1,
                got: 0,
            });
        }
    } else if detector.threshold.is_none() {
        detector.threshold = Some(calibrate_threshold(&validation_errors, config.quantile)?);
    }
    detector.validate()?;

    let metadata = TrainingMetadata {
        dataset: config.dataset.clone(),
        window: config.window,
        channels: frame.channels(),
        latent_dim: autoencoder.latent_dim(),
        context_len: forecaster.context_len(),
        seed: config.seed,
        autoencoder_epochs: autoencoder_report.epochs_run,
        forecaster_epochs: forecaster_report.epochs_run,
        split: config.split,
    };
    let bundle = ModelBundle {
        scaler,
        autoencoder,
        forecaster,
        detector: DetectorSettings {
            config: detector,
            quantile: config.quantile,
        },
        metadata,
    };
    bundle.check()?;
    Ok(PipelineOutput {
        bundle,
        autoencoder_report,
        forecaster_report,
        validation_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, NaiveDate};

    fn sine(n: usize, seed: u64) -> SeriesFrame {
        let mut rng = RngState::new(seed);
        let values: Vec<f64> = (0..n)
            .map(|i| (i as f64 * std::f64::consts::TAU / 25.0).sin() + 0.02 * rng.standard_normal())
            .collect();
        let start = NaiveDate::from_ymd_opt(2021, 3, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        SeriesFrame::regular("sine", start, Duration::minutes(1), values).unwrap()
    }

    fn small_config(rule: Rule) -> PipelineConfig {
        PipelineConfig {
            dataset: "sine".into(),
            window: 10,
            split: SplitSpec::new(0.4, 0.2).unwrap(),
            autoencoder: AutoencoderConfig {
                hidden: vec![16],
                latent_dim: 3,
                epochs: 20,
                seed: 1,
                ..AutoencoderConfig::default()
            },
            forecaster: ForecasterConfig {
                model_dim: 8,
                heads: 2,
                blocks: 1,
                context_len: 4,
                seed: 2,
                ..ForecasterConfig::default()
            },
            detector: DetectorConfig {
                rule,
                warmup: 10,
                ..DetectorConfig::default()
            },
            quantile: 1.0,
            seed: 1,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let frame = sine(400, 3);
        let out = train_pipeline(&frame, &small_config(Rule::B)).unwrap();
        let tau = out.bundle.detector.config.threshold.unwrap();
        assert_eq!(tau, out.validation_errors.iter().cloned().fold(0.0, f64::max));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        out.bundle.save(&path).unwrap();
        assert!(dir.path().join("model.bin").exists());
        let loaded = ModelBundle::load(&path).unwrap();
        assert_eq!(loaded, out.bundle);
        assert_eq!(loaded.detect(&frame).unwrap(), out.bundle.detect(&frame).unwrap());

        // Saving the loaded bundle reproduces both files byte for byte.
        let again = dir.path().join("again.json");
        loaded.save(&again).unwrap();
        let manifest = std::fs::read_to_string(&path)
            .unwrap()
            .replace("model.bin", "again.bin");
        assert_eq!(manifest, std::fs::read_to_string(&again).unwrap());
        assert_eq!(
            std::fs::read(dir.path().join("model.bin")).unwrap(),
            std::fs::read(dir.path().join("again.bin")).unwrap()
        );
    }

    #[test]
    fn load_rejects_bad_bundles() {
        let frame = sine(300, 4);
        let out = train_pipeline(&frame, &small_config(Rule::A)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        out.bundle.save(&path).unwrap();
        let manifest = std::fs::read_to_string(&path).unwrap();

        std::fs::write(
            &path,
            manifest.replace("\"format_version\": 1", "\"format_version\": 7"),
        )
        .unwrap();
        assert!(matches!(
            ModelBundle::load(&path),
            Err(Error::Version { found: 7, expected: 1 })
        ));

        std::fs::write(&path, &manifest).unwrap();
        let blob = dir.path().join("m.bin");
        let mut bytes = std::fs::read(&blob).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&blob, bytes).unwrap();
        assert!(matches!(ModelBundle::load(&path), Err(Error::Bundle(_))));

        assert!(matches!(
            ModelBundle::load(dir.path().join("absent.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn detect_checks_channels() {
        let frame = sine(300, 5);
        let out = train_pipeline(&frame, &small_config(Rule::A)).unwrap();
        let values = Tensor::matrix(300, 2, frame.values().data().iter().flat_map(|&v| [v, v]).collect()).unwrap();
        let wide = SeriesFrame::new("wide", frame.timestamps().to_vec(), values).unwrap();
        assert!(matches!(out.bundle.detect(&wide), Err(Error::Config(_))));
    }

    #[test]
    fn training_is_reproducible() {
        let frame = sine(300, 6);
        let a = train_pipeline(&frame, &small_config(Rule::A)).unwrap();
        let b = train_pipeline(&frame, &small_config(Rule::A)).unwrap();
        assert_eq!(a, b);
    }
}
