//! The stacked auto-encoder: greedy layer-wise training, whole-stack
//! scoring and the online update applied after each scored chunk.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{self, AutoEncoderParams, SparsityConfig};
use crate::Sequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackConfig {
    pub num_layers: usize,
    pub hidden_dims: Vec<usize>,
    pub input_dim: usize,
    pub seq_len: usize,
    pub rho: f64,
    pub beta: f64,
    pub eps: f64,
    pub lr_offline: f64,
    pub lr_online: f64,
    pub batch_offline: usize,
    pub epochs_offline: usize,
    pub online_update_epochs: usize,
    pub seed: u64,
    /// Elementwise gradient clamp applied before every SGD step; `None`
    /// disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            num_layers: 3,
            hidden_dims: vec![32, 16, 8],
            input_dim: 64,
            seq_len: 3,
            rho: 0.05,
            beta: 0.1,
            eps: 1e-6,
            lr_offline: 1e-3,
            lr_online: 1e-4,
            batch_offline: 100,
            epochs_offline: 50,
            online_update_epochs: 2,
            seed: 0,
            grad_clip: Some(5.0),
        }
    }
}

impl StackConfig {
    pub fn sparsity(&self) -> SparsityConfig {
        SparsityConfig {
            rho: self.rho,
            beta: self.beta,
            eps: self.eps,
        }
    }

    /// Keeps the first `layers` layers, for depth ablations.
    pub fn with_layers(&self, layers: usize) -> Self {
        let mut cfg = self.clone();
        cfg.num_layers = layers;
        cfg.hidden_dims.truncate(layers);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_layers == 0 {
            return bad("num_layers must be >= 1".into());
        }
        if self.hidden_dims.len() != self.num_layers {
            return bad(format!(
                "hidden_dims has {} entries but num_layers is {}",
                self.hidden_dims.len(),
                self.num_layers
            ));
        }
        if self.input_dim == 0 || self.seq_len == 0 || self.hidden_dims.contains(&0) {
            return bad("input_dim, seq_len and hidden_dims must all be >= 1".into());
        }
        if self.hidden_dims.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!(
                "hidden_dims must strictly decrease, got {:?}",
                self.hidden_dims
            ));
        }
        if self.batch_offline == 0 {
            return bad("batch_offline must be >= 1".into());
        }
        for (name, lr) in [
            ("lr_offline", self.lr_offline),
            ("lr_online", self.lr_online),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0, got {lr}"));
            }
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("grad_clip must be > 0, got {c}"));
            }
        }
        self.sparsity().validate()
    }
}

/// `M` auto-encoder layers, layer `m` reading the encoder hidden states of
/// layer `m - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedModel {
    pub layers: Vec<AutoEncoderParams>,
    pub config: StackConfig,
}

impl StackedModel {
    /// The bottom `layers` layers. Greedy training never looks above the
    /// layer being trained, so this equals training a shallower stack with
    /// the same seed.
    pub fn truncated(&self, layers: usize) -> Result<StackedModel> {
        if layers == 0 || layers > self.layers.len() {
            return Err(Error::OutOfRange(format!(
                "cannot keep {layers} of {} layers",
                self.layers.len()
            )));
        }
        Ok(StackedModel {
            layers: self.layers[..layers].to_vec(),
            config: self.config.with_layers(layers),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        check_dim("layer count", self.config.num_layers, self.layers.len())?;
        let mut input = self.config.input_dim;
        for (layer, &hidden) in self.layers.iter().zip(&self.config.hidden_dims) {
            layer.validate()?;
            check_dim("layer input_dim", input, layer.input_dim())?;
            check_dim("layer hidden_dim", hidden, layer.hidden_dim())?;
            input = hidden;
        }
        Ok(())
    }
}

/// Seeded initialization of every layer.
pub fn init_stack(config: &StackConfig) -> Result<StackedModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input = config.input_dim;
    let mut layers = Vec::with_capacity(config.num_layers);
    for &hidden in &config.hidden_dims {
        layers.push(AutoEncoderParams::random(input, hidden, &mut rng));
        input = hidden;
    }
    Ok(StackedModel {
        layers,
        config: config.clone(),
    })
}

/// The sequence layer `m` sees: the clip itself for `m = 0`, otherwise the
/// encoder hidden states of layer `m - 1` on its own inputs.
pub fn layer_inputs(
    model: &StackedModel,
    m: usize,
    x_seq: &[ndarray::Array1<f64>],
) -> Result<Sequence> {
    if m >= model.layers.len() {
        return Err(Error::OutOfRange(format!(
            "layer index {m} for a {}-layer stack",
            model.layers.len()
        )));
    }
    let mut seq: Sequence = x_seq.to_vec();
    for layer in &model.layers[..m] {
        seq = model::encode(layer, &seq)?.0;
    }
    Ok(seq)
}

fn layer_dataset(model: &StackedModel, m: usize, dataset: &[Sequence]) -> Result<Vec<Sequence>> {
    dataset.iter().map(|s| layer_inputs(model, m, s)).collect()
}

fn sgd_step(
    layer: &AutoEncoderParams,
    batch: &[Sequence],
    cfg: &StackConfig,
    lr: f64,
) -> Result<AutoEncoderParams> {
    let mut grads = model::backward(layer, batch, &cfg.sparsity())?;
    if let Some(limit) = cfg.grad_clip {
        grads.clip(limit);
    }
    model::sgd_update(layer, &grads, lr)
}

/// Mean per-sequence reconstruction loss of one layer on its inputs.
pub fn layer_loss(layer: &AutoEncoderParams, inputs: &[Sequence]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::Empty("loss dataset"));
    }
    let mut sum = 0.0;
    for seq in inputs {
        let (_, ctx) = model::encode(layer, seq)?;
        let ys = model::decode(layer, &ctx, seq.len())?;
        sum += model::reconstruction_loss(seq, &ys)?;
    }
    Ok(sum / inputs.len() as f64)
}

/// Per-epoch progress of [`greedy_train_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub layer: usize,
    pub epoch: usize,
    /// Mean reconstruction loss over the layer's training inputs after the epoch.
    pub loss: f64,
}

pub fn greedy_train(model: &StackedModel, dataset: &[Sequence]) -> Result<StackedModel> {
    greedy_train_with(model, dataset, |_| {})
}

/// Trains layers bottom-up with minibatch SGD on the sparse objective. The
/// layers below the one being trained are frozen; each epoch visits the
/// data in a seeded shuffled order and keeps the last partial batch.
pub fn greedy_train_with(
    model: &StackedModel,
    dataset: &[Sequence],
    mut on_epoch: impl FnMut(EpochReport),
) -> Result<StackedModel> {
    model.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let cfg = &model.config;
    let mut out = model.clone();
    for m in 0..out.layers.len() {
        if cfg.epochs_offline == 0 {
            break;
        }
        let inputs = layer_dataset(&out, m, dataset)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(m as u64 + 1);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut layer = out.layers[m].clone();
        for epoch in 0..cfg.epochs_offline {
            order.shuffle(&mut rng);
            for idx in order.chunks(cfg.batch_offline) {
                let batch: Vec<Sequence> = idx.iter().map(|&i| inputs[i].clone()).collect();
                layer = sgd_step(&layer, &batch, cfg, cfg.lr_offline)?;
            }
            on_epoch(EpochReport {
                layer: m,
                epoch,
                loss: layer_loss(&layer, &inputs)?,
            });
        }
        out.layers[m] = layer;
    }
    Ok(out)
}

/// Raw summarization score of a clip: the mean over layers of each layer's
/// reconstruction loss on its own inputs.
pub fn stack_score(model: &StackedModel, x_seq: &[ndarray::Array1<f64>]) -> Result<f64> {
    let layers = stack_layer_losses(model, x_seq)?;
    Ok(layers.iter().sum::<f64>() / layers.len() as f64)
}

/// Reconstruction loss of every layer on one clip, bottom layer first.
pub fn stack_layer_losses(
    model: &StackedModel,
    x_seq: &[ndarray::Array1<f64>],
) -> Result<Vec<f64>> {
    if x_seq.is_empty() {
        return Err(Error::Empty("scored sequence"));
    }
    let mut seq: Sequence = x_seq.to_vec();
    let mut losses = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let (hs, ctx) = model::encode(layer, &seq)?;
        let ys = model::decode(layer, &ctx, seq.len())?;
        losses.push(model::reconstruction_loss(&seq, &ys)?);
        seq = hs;
    }
    Ok(losses)
}

/// Adapts the stack to the clips of one chunk: `online_update_epochs`
/// bottom-up passes, each one SGD step per layer on the whole chunk.
pub fn online_update(model: &StackedModel, chunk: &[Sequence]) -> Result<StackedModel> {
    if chunk.is_empty() {
        return Err(Error::Empty("online update batch"));
    }
    let cfg = &model.config;
    let mut out = model.clone();
    for _ in 0..cfg.online_update_epochs {
        for m in 0..out.layers.len() {
            let inputs = layer_dataset(&out, m, chunk)?;
            out.layers[m] = sgd_step(&out.layers[m], &inputs, cfg, cfg.lr_online)?;
        }
    }
    Ok(out)
}

/// Mean over hidden units of `|ρ̂_d − ρ|`, where `ρ̂_d` is the mean mapped
/// activation `(h_T + 1)/2` of layer `m` over the dataset.
pub fn activation_deviation(model: &StackedModel, m: usize, dataset: &[Sequence]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("activation dataset"));
    }
    let inputs = layer_dataset(model, m, dataset)?;
    let layer = &model.layers[m];
    let mut mean = ndarray::Array1::<f64>::zeros(layer.hidden_dim());
    for seq in &inputs {
        let (_, ctx) = model::encode(layer, seq)?;
        mean += &ctx.h.mapv(|v| (v + 1.0) / 2.0);
    }
    mean /= inputs.len() as f64;
    let rho = model.config.rho;
    Ok(mean.iter().map(|r| (r - rho).abs()).sum::<f64>() / mean.len() as f64)
}
