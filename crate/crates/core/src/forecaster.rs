//! Attention forecaster over latent codes.
//!
//! Given the codes of the most recent `L` windows (oldest first), predict
//! the code of the next window:
//!
//! ```text
//! codes (len × latent) ─► input projection (latent → model_dim)
//!                      ─► + sinusoidal positions
//!                      ─► blocks: h = x + MHA(x);  x = h + tanh(h·F + f)
//!                      ─► pool over positions (mean | last)
//!                      ─► head (model_dim → latent)
//! ```
//!
//! The head is a single linear layer in place of a full transformer decoder
//! stack. Training uses teacher forcing: contexts are always built from the
//! autoencoder's codes of real windows, and anneals the learning rate the
//! same way the autoencoder does.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{cosine_lr, gather_rows, AutoencoderModel, TrainReport};
use crate::data::{make_windows, SeriesFrame, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::nn::{
    Activation, Adam, AdamConfig, AttentionCache, DenseCache, DenseLayer, LossKind, MultiHeadAttention, Parameters,
    Pooling, PositionalEncoding,
};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterArch {
    pub latent_dim: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub context_len: usize,
    pub pooling: Pooling,
    /// When false the position table is all zeros.
    pub positional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub context_len: usize,
    pub pooling: Pooling,
    pub positional: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Final learning rate as a fraction of `adam.learning_rate`.
    pub min_lr_fraction: f64,
    pub seed: u64,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        ForecasterConfig {
            model_dim: 32,
            heads: 4,
            blocks: 2,
            context_len: 16,
            pooling: Pooling::Mean,
            positional: true,
            epochs: 5,
            // Small batches and a larger step: the code sequence is short,
            // so this buys enough updates to converge within a few epochs.
            batch_size: 4,
            adam: AdamConfig {
                learning_rate: 5e-3,
                ..AdamConfig::default()
            },
            min_lr_fraction: 0.01,
            seed: 0,
        }
    }
}

impl ForecasterConfig {
    pub fn arch(&self, latent_dim: usize) -> ForecasterArch {
        ForecasterArch {
            latent_dim,
            model_dim: self.model_dim,
            heads: self.heads,
            blocks: self.blocks,
            context_len: self.context_len,
            pooling: self.pooling,
            positional: self.positional,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub attention: MultiHeadAttention,
    pub feed_forward: DenseLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterModel {
    arch: ForecasterArch,
    input: DenseLayer,
    positional: PositionalEncoding,
    blocks: Vec<EncoderBlock>,
    head: DenseLayer,
}

#[derive(Debug, Clone)]
struct BlockCache {
    attention: AttentionCache,
    feed_forward: DenseCache,
}

#[derive(Debug, Clone)]
pub struct ForecasterCache {
    len: usize,
    input: DenseCache,
    blocks: Vec<BlockCache>,
    head: DenseCache,
}

impl ForecasterModel {
    pub fn new(arch: ForecasterArch, rng: &mut RngState) -> Result<Self> {
        if arch.latent_dim == 0 || arch.context_len == 0 || arch.model_dim == 0 {
            return Err(Error::Config(
                "latent_dim, model_dim and context_len must be positive".into(),
            ));
        }
        let d = arch.model_dim;
        let input = DenseLayer::new(arch.latent_dim, d, Activation::Identity, rng);
        let mut blocks = Vec::with_capacity(arch.blocks);
        for _ in 0..arch.blocks {
            let attention = MultiHeadAttention::new(d, arch.heads, rng)?;
            let feed_forward = DenseLayer::new(d, d, Activation::Tanh, rng);
            blocks.push(EncoderBlock {
                attention,
                feed_forward,
            });
        }
        let head = DenseLayer::new(d, arch.latent_dim, Activation::Identity, rng);
        let positional = if arch.positional {
            PositionalEncoding::new(arch.context_len, d)
        } else {
            PositionalEncoding::disabled(arch.context_len, d)
        };
        Ok(ForecasterModel {
            arch,
            input,
            positional,
            blocks,
            head,
        })
    }

    pub fn arch(&self) -> &ForecasterArch {
        &self.arch
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn context_len(&self) -> usize {
        self.arch.context_len
    }

    /// Predicts the next code from `codes` (`len × latent_dim`, oldest
    /// first, `1 <= len <= context_len`).
    pub fn forecast_sequence(&self, codes: &Tensor) -> Result<Tensor> {
        Ok(self.forward(codes)?.0)
    }

    pub fn forecast(&self, context: &LatentContext) -> Result<Tensor> {
        self.forecast_sequence(&context.as_tensor()?)
    }

    pub fn forward(&self, codes: &Tensor) -> Result<(Tensor, ForecasterCache)> {
        if codes.shape().len() != 2 || codes.cols() != self.arch.latent_dim {
            return Err(Error::shape(
                "forecast",
                codes.shape(),
                &[codes.rows(), self.arch.latent_dim],
            ));
        }
        let len = codes.rows();
        if len > self.arch.context_len {
            return Err(Error::Capacity {
                len,
                max: self.arch.context_len,
            });
        }
        let (projected, input) = self.input.forward(codes)?;
        let mut x = self.positional.encode(&projected)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (attended, attention) = block.attention.forward(&x)?;
            let h = x.add(&attended)?;
            let (ff, feed_forward) = block.feed_forward.forward(&h)?;
            x = h.add(&ff)?;
            caches.push(BlockCache {
                attention,
                feed_forward,
            });
        }
        let pooled = self.arch.pooling.pool(&x)?;
        let pooled = Tensor::matrix(1, self.arch.model_dim, pooled.into_data())?;
        let (out, head) = self.head.forward(&pooled)?;
        let cache = ForecasterCache {
            len,
            input,
            blocks: caches,
            head,
        };
        Ok((out.reshape(vec![self.arch.latent_dim])?, cache))
    }

    /// Parameter gradients (in `Parameters` order) given d(loss)/d(output).
    pub fn backward(&self, cache: &ForecasterCache, upstream: &Tensor) -> Result<Vec<Tensor>> {
        if upstream.len() != self.arch.latent_dim || cache.blocks.len() != self.blocks.len() {
            return Err(Error::Contract(
                "forecaster cache or gradient does not match the model".into(),
            ));
        }
        let up = Tensor::matrix(1, self.arch.latent_dim, upstream.data().to_vec())?;
        let head = self.head.backward(&cache.head, &up)?;
        let mut g = self.arch.pooling.backward(cache.len, &head.input)?;

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let ff = block.feed_forward.backward(&bc.feed_forward, &g)?;
            let g_h = g.add(&ff.input)?;
            let attn = block.attention.backward(&bc.attention, &g_h)?;
            g = g_h.add(&attn.input)?;
            let mut params = attn.into_params();
            params.push(ff.weights);
            params.push(ff.bias);
            block_grads.push(params);
        }
        block_grads.reverse();

        let input = self.input.backward(&cache.input, &g)?;
        let mut grads = vec![input.weights, input.bias];
        grads.extend(block_grads.into_iter().flatten());
        grads.push(head.weights);
        grads.push(head.bias);
        Ok(grads)
    }
}

impl Parameters for ForecasterModel {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut out = self.input.parameters();
        for b in &self.blocks {
            out.extend(b.attention.parameters());
            out.extend(b.feed_forward.parameters());
        }
        out.extend(self.head.parameters());
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.input.parameters_mut();
        for b in &mut self.blocks {
            out.extend(b.attention.parameters_mut());
            out.extend(b.feed_forward.parameters_mut());
        }
        out.extend(self.head.parameters_mut());
        out
    }
}

/// The most recent latent codes, oldest first, holding at most `capacity`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentContext {
    capacity: usize,
    latent_dim: usize,
    codes: VecDeque<Vec<f64>>,
}

impl LatentContext {
    pub fn new(capacity: usize, latent_dim: usize) -> Self {
        assert!(capacity > 0 && latent_dim > 0, "empty context shape");
        LatentContext {
            capacity,
            latent_dim,
            codes: VecDeque::with_capacity(capacity),
        }
    }

    pub fn for_model(model: &ForecasterModel) -> Self {
        Self::new(model.context_len(), model.latent_dim())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Appends a code, evicting the oldest once full.
    pub fn push(&mut self, code: &Tensor) -> Result<()> {
        if code.len() != self.latent_dim {
            return Err(Error::shape("LatentContext::push", code.shape(), &[self.latent_dim]));
        }
        if self.codes.len() == self.capacity {
            self.codes.pop_front();
        }
        self.codes.push_back(code.data().to_vec());
        Ok(())
    }

    pub fn as_tensor(&self) -> Result<Tensor> {
        if self.codes.is_empty() {
            return Err(Error::Contract("forecast needs at least one latent code".into()));
        }
        let data: Vec<f64> = self.codes.iter().flatten().copied().collect();
        Tensor::matrix(self.codes.len(), self.latent_dim, data)
    }
}

/// Trains on a latent sequence (`count × latent_dim`): for each `t` the
/// context is rows `t-L+1 ..= t` (clipped at 0) and the target is row `t+1`.
pub fn train_forecaster_on_codes(codes: &Tensor, config: &ForecasterConfig) -> Result<(ForecasterModel, TrainReport)> {
    train_forecaster_on_segments(std::slice::from_ref(codes), config)
}

/// Like [`train_forecaster_on_codes`] over several independent runs of
/// codes; contexts and targets never straddle two segments.
pub fn train_forecaster_on_segments(
    segments: &[Tensor],
    config: &ForecasterConfig,
) -> Result<(ForecasterModel, TrainReport)> {
    let mut latent_dim = None;
    let mut pairs = Vec::new();
    for (s, codes) in segments.iter().enumerate() {
        if codes.shape().len() != 2 {
            return Err(Error::Contract(format!("segment {s} is not a 2-D code matrix")));
        }
        match latent_dim {
            None => latent_dim = Some(codes.cols()),
            Some(d) if d != codes.cols() => {
                return Err(Error::shape(
                    "train_forecaster_on_segments",
                    codes.shape(),
                    &[codes.rows(), d],
                ))
            }
            Some(_) => {}
        }
        pairs.extend((0..codes.rows().saturating_sub(1)).map(|t| (s, t)));
    }
    let samples = pairs.len();
    let Some(latent_dim) = latent_dim.filter(|_| samples > 0) else {
        return Err(Error::InsufficientData {
            what: "forecaster training",
            needed: 2,
            got: samples,
        });
    };
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    if !(config.min_lr_fraction > 0.0 && config.min_lr_fraction <= 1.0) {
        return Err(Error::Config("min_lr_fraction must lie in (0, 1]".into()));
    }
    let mut rng = RngState::new(config.seed);
    let mut model = ForecasterModel::new(config.arch(latent_dim), &mut rng)?;
    let mut adam = Adam::new(config.adam, model.parameters());
    let l = config.context_len;
    let mut order: Vec<usize> = (0..samples).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let total_steps = config.epochs * samples.div_ceil(config.batch_size);
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
            let mut acc: Option<Vec<Tensor>> = None;
            let weight = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (s, t) = pairs[i];
                let codes = &segments[s];
                let start = (t + 1).saturating_sub(l);
                let rows: Vec<usize> = (start..=t).collect();
                let context = gather_rows(codes, &rows)?;
                let target = Tensor::vector(codes.row(t + 1).to_vec())?;
                let (pred, cache) = model.forward(&context)?;
                let (loss, grad) = LossKind::Mse.evaluate(&pred, &target)?;
                total += loss;
                let grads = model.backward(&cache, &grad.scale(weight))?;
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.add_assign(g)?;
                        }
                    }
                }
            }
            if let Some(grads) = acc {
                adam.step(model.parameters_mut(), &grads)?;
            }
        }
        let epoch_loss = total / samples as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        losses.push(epoch_loss);
    }
    Ok((model, TrainReport::from_losses(losses)))
}

/// Encodes the training-split windows of `frame` (already normalized) with
/// the frozen autoencoder and trains the forecaster on the code sequence.
pub fn train_forecaster(
    ae: &AutoencoderModel,
    frame: &SeriesFrame,
    window: usize,
    split: &SplitSpec,
    config: &ForecasterConfig,
) -> Result<(ForecasterModel, TrainReport)> {
    if window != ae.window() {
        return Err(Error::Config(format!(
            "window {window} does not match the autoencoder's window {}",
            ae.window()
        )));
    }
    let windows = make_windows(frame, window, split, Split::Train)?;
    let codes = ae.encode_batch(&windows.flattened())?;
    train_forecaster_on_codes(&codes, config)
}
