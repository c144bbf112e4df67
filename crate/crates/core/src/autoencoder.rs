//! Dense autoencoder over flattened windows.
//!
//! ```text
//! W·channels → 64 → 32 → latent_dim → 32 → 64 → W·channels
//! ```
//!
//! Hidden layers use tanh; the latent layer and the reconstruction layer are
//! linear. Training draws shuffled mini-batches from the training windows
//! only and minimizes MSE (or MAE) with Adam. The learning rate follows a
//! per-step cosine curve from its configured value down to
//! `min_lr_fraction` of it, which keeps the last epochs from bouncing around
//! the noise floor.

use serde::{Deserialize, Serialize};

use crate::data::WindowBatch;
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, DenseCache, DenseLayer, LossKind, Parameters};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Layer sizes of an autoencoder; enough to rebuild one from parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderArch {
    pub window: usize,
    pub channels: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub hidden_activation: Activation,
}

impl AutoencoderArch {
    pub fn input_dim(&self) -> usize {
        self.window * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.channels == 0 || self.latent_dim == 0 {
            return Err(Error::Config("window, channels and latent_dim must be positive".into()));
        }
        if self.latent_dim >= self.input_dim() {
            return Err(Error::Config(format!(
                "latent_dim {} must be smaller than window x channels = {}",
                self.latent_dim,
                self.input_dim()
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub adam: AdamConfig,
    /// Final learning rate as a fraction of `adam.learning_rate`; 1.0 keeps
    /// it constant.
    pub min_lr_fraction: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            hidden: vec![64, 32],
            latent_dim: 8,
            epochs: 500,
            batch_size: 32,
            loss: LossKind::Mse,
            adam: AdamConfig::default(),
            min_lr_fraction: 0.01,
            seed: 0,
        }
    }
}

impl AutoencoderConfig {
    pub fn arch(&self, window: usize, channels: usize) -> AutoencoderArch {
        AutoencoderArch {
            window,
            channels,
            hidden: self.hidden.clone(),
            latent_dim: self.latent_dim,
            hidden_activation: Activation::Tanh,
        }
    }
}

/// Per-epoch training losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub epochs_run: usize,
    pub final_loss: f64,
}

impl TrainReport {
    pub(crate) fn from_losses(epoch_losses: Vec<f64>) -> Self {
        TrainReport {
            epochs_run: epoch_losses.len(),
            final_loss: epoch_losses.last().copied().unwrap_or(f64::NAN),
            epoch_losses,
        }
    }
}

/// Cosine annealing from `base` at step 0 to `base * min_fraction` at step
/// `steps - 1`.
pub(crate) fn cosine_lr(base: f64, min_fraction: f64, step: usize, steps: usize) -> f64 {
    if steps <= 1 {
        return base;
    }
    let progress = step as f64 / (steps - 1) as f64;
    let floor = base * min_fraction;
    floor + 0.5 * (base - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    arch: AutoencoderArch,
    encoder: Vec<DenseLayer>,
    decoder: Vec<DenseLayer>,
}

fn stack(sizes: &[usize], hidden: Activation, rng: &mut RngState) -> Vec<DenseLayer> {
    let last = sizes.len() - 2;
    sizes
        .windows(2)
        .enumerate()
        .map(|(i, pair)| {
            let act = if i == last { Activation::Identity } else { hidden };
            DenseLayer::new(pair[0], pair[1], act, rng)
        })
        .collect()
}

fn run(layers: &[DenseLayer], x: &Tensor) -> Result<Tensor> {
    layers.iter().try_fold(x.clone(), |h, layer| layer.infer(&h))
}

impl AutoencoderModel {
    pub fn new(arch: AutoencoderArch, rng: &mut RngState) -> Result<Self> {
        arch.validate()?;
        let mut sizes = vec![arch.input_dim()];
        sizes.extend(&arch.hidden);
        sizes.push(arch.latent_dim);
        let encoder = stack(&sizes, arch.hidden_activation, rng);
        sizes.reverse();
        let decoder = stack(&sizes, arch.hidden_activation, rng);
        Ok(AutoencoderModel { arch, encoder, decoder })
    }

    pub fn arch(&self) -> &AutoencoderArch {
        &self.arch
    }

    pub fn window(&self) -> usize {
        self.arch.window
    }

    pub fn channels(&self) -> usize {
        self.arch.channels
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn encoder(&self) -> &[DenseLayer] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[DenseLayer] {
        &self.decoder
    }

    /// `window` is `W × channels`; returns the latent code.
    pub fn encode(&self, window: &Tensor) -> Result<Tensor> {
        let expected = [self.arch.window, self.arch.channels];
        if window.shape() != expected {
            return Err(Error::shape("encode", window.shape(), &expected));
        }
        let flat = Tensor::matrix(1, self.arch.input_dim(), window.data().to_vec())?;
        run(&self.encoder, &flat)?.reshape(vec![self.arch.latent_dim])
    }

    /// `batch × (W·channels)` → `batch × latent_dim`.
    pub fn encode_batch(&self, flat: &Tensor) -> Result<Tensor> {
        run(&self.encoder, flat)
    }

    /// Latent code → `W × channels` reconstruction in normalized units.
    pub fn decode(&self, code: &Tensor) -> Result<Tensor> {
        if code.len() != self.arch.latent_dim {
            return Err(Error::shape("decode", code.shape(), &[self.arch.latent_dim]));
        }
        let row = Tensor::matrix(1, self.arch.latent_dim, code.data().to_vec())?;
        run(&self.decoder, &row)?.reshape(vec![self.arch.window, self.arch.channels])
    }

    pub fn decode_batch(&self, codes: &Tensor) -> Result<Tensor> {
        run(&self.decoder, codes)
    }

    pub fn reconstruct_batch(&self, flat: &Tensor) -> Result<Tensor> {
        self.decode_batch(&self.encode_batch(flat)?)
    }

    /// Mean loss over every window of `batch`.
    pub fn reconstruction_loss(&self, batch: &WindowBatch, loss: LossKind) -> Result<f64> {
        let flat = batch.flattened();
        Ok(loss.evaluate(&self.reconstruct_batch(&flat)?, &flat)?.0)
    }

    /// One optimization step on `x` (rows are flattened windows). Returns the
    /// batch loss before the update.
    fn train_batch(&mut self, x: &Tensor, loss: LossKind, adam: &mut Adam) -> Result<f64> {
        let mut caches: Vec<DenseCache> = Vec::with_capacity(self.encoder.len() + self.decoder.len());
        let mut h = x.clone();
        for layer in self.encoder.iter().chain(&self.decoder) {
            let (out, cache) = layer.forward(&h)?;
            caches.push(cache);
            h = out;
        }
        let (value, mut grad) = loss.evaluate(&h, x)?;
        let layers: Vec<&DenseLayer> = self.encoder.iter().chain(&self.decoder).collect();
        let mut param_grads: Vec<Tensor> = Vec::with_capacity(2 * layers.len());
        for (layer, cache) in layers.iter().zip(&caches).rev() {
            let g = layer.backward(cache, &grad)?;
            param_grads.push(g.bias);
            param_grads.push(g.weights);
            grad = g.input;
        }
        param_grads.reverse();
        adam.step(self.parameters_mut(), &param_grads)?;
        Ok(value)
    }
}

impl Parameters for AutoencoderModel {
    fn parameters(&self) -> Vec<&Tensor> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| l.parameters())
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| l.parameters_mut())
            .collect()
    }
}

pub(crate) fn gather_rows(source: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let c = source.cols();
    let mut data = Vec::with_capacity(rows.len() * c);
    for &r in rows {
        data.extend_from_slice(source.row(r));
    }
    Tensor::matrix(rows.len(), c, data)
}

/// Trains a fresh autoencoder on `windows`, which must come from the
/// anomaly-free training split.
pub fn train_autoencoder(windows: &WindowBatch, config: &AutoencoderConfig) -> Result<(AutoencoderModel, TrainReport)> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    if !(config.min_lr_fraction > 0.0 && config.min_lr_fraction <= 1.0) {
        return Err(Error::Config("min_lr_fraction must lie in (0, 1]".into()));
    }
    let mut rng = RngState::new(config.seed);
    let arch = config.arch(windows.window_size(), windows.channels());
    let mut model = AutoencoderModel::new(arch, &mut rng)?;
    let mut adam = Adam::new(config.adam, model.parameters());

    let flat = windows.flattened();
    let count = windows.count();
    let mut order: Vec<usize> = (0..count).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let total_steps = config.epochs * count.div_ceil(config.batch_size);
    let mut step = 0;
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            adam.set_learning_rate(cosine_lr(
                config.adam.learning_rate,
                config.min_lr_fraction,
                step,
                total_steps,
            ));
            step += 1;
            let x = gather_rows(&flat, chunk)?;
            total += model.train_batch(&x, config.loss, &mut adam)? * chunk.len() as f64;
        }
        let epoch_loss = total / count as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        losses.push(epoch_loss);
    }
    Ok((model, TrainReport::from_losses(losses)))
}
