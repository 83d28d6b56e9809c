//! Training loops: separate autoencoder pretraining, coupled training of the
//! bridged network from pretrained weights, and denoiser training.
//!
//! All loops share one seeded RNG (shuffling, noise augmentation) whose word
//! position is checkpointable, so save / load / continue reproduces an
//! uninterrupted run bitwise.

use crate::arch::{AePair, Network};
use crate::io::dataset::{LoadedDataset, NormalizationStats};
use crate::nn::{l1_loss, mse_loss, Adam, AdamConfig, L1Mode, Param, Tensor};
use crate::{DotError, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossVariant {
    /// Plain mean squared error on the reconstruction.
    Mse,
    /// MSE plus a weighted l1 term on the reconstruction error.
    MseL1,
    /// MSE plus both autoencoders' reconstruction errors on the batch.
    MseAe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs_data_ae: usize,
    pub epochs_signal_ae: usize,
    pub epochs_coupled: usize,
    pub loss: LossVariant,
    pub l1_weight: f64,
    pub l1_signed: bool,
    pub noise_level: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr: 5e-5,
            epochs_data_ae: 500,
            epochs_signal_ae: 10_000,
            epochs_coupled: 10_000,
            loss: LossVariant::Mse,
            l1_weight: 1e-3,
            l1_signed: false,
            noise_level: 0.0,
            seed: 0,
            shuffle: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn l1_mode(&self) -> L1Mode {
        if self.l1_signed {
            L1Mode::Signed
        } else {
            L1Mode::Absolute
        }
    }
}

/// Dataset views used by training: normalized images, raw sinograms (noise
/// applies to raw values) and the normalization bounds.
pub struct TrainingData {
    pub images: Vec<Vec<f32>>,
    pub sinograms_raw: Vec<Vec<f64>>,
    pub sinograms_norm: Vec<Vec<f32>>,
    pub norm: NormalizationStats,
    /// `[ny, nx]` of the images.
    pub image_shape: [usize; 2],
}

impl TrainingData {
    /// Views a loaded dataset, normalizing sinograms with `norm` (use the
    /// training set's statistics for validation/test data too).
    pub fn from_dataset(ds: &LoadedDataset, norm: NormalizationStats) -> TrainingData {
        let images = ds
            .images
            .iter()
            .map(|img| img.iter().map(|&v| v as f32).collect())
            .collect();
        let sinograms_norm = ds
            .sinograms
            .iter()
            .map(|s| norm.normalize_sinogram(s).iter().map(|&v| v as f32).collect())
            .collect();
        TrainingData {
            images,
            sinograms_raw: ds.sinograms.clone(),
            sinograms_norm,
            norm,
            image_shape: ds.manifest.image_shape,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Fresh multiplicative Gaussian noise on raw sinograms, consuming `rng`;
/// then normalized to the network input range.
pub fn apply_noise_augmentation(
    raw: &[&[f64]],
    level: f64,
    norm: &NormalizationStats,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f32>> {
    raw.iter()
        .map(|row| {
            if level == 0.0 {
                return norm
                    .normalize_sinogram(row)
                    .iter()
                    .map(|&v| v as f32)
                    .collect();
            }
            let max = row.iter().cloned().fold(0.0f64, f64::max);
            let floor = 1e-12 * max;
            let noisy: Vec<f64> = row
                .iter()
                .map(|&y| {
                    let xi: f64 = rng.sample(StandardNormal);
                    (y * (1.0 + level * xi)).max(floor)
                })
                .collect();
            norm.normalize_sinogram(&noisy)
                .iter()
                .map(|&v| v as f32)
                .collect()
        })
        .collect()
}

fn batch_tensor(rows: &[Vec<f32>], idx: &[usize], item_shape: &[usize]) -> Tensor<f32> {
    let item: usize = item_shape.iter().product();
    let mut shape = vec![idx.len()];
    shape.extend_from_slice(item_shape);
    let mut data = Vec::with_capacity(idx.len() * item);
    for &i in idx {
        debug_assert_eq!(rows[i].len(), item);
        data.extend_from_slice(&rows[i]);
    }
    Tensor { shape, data }
}

fn check_finite(loss: f64, what: &str, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(DotError::Diverged(format!(
            "{what} loss became {loss} at epoch {epoch}"
        )));
    }
    Ok(())
}

/// Which input an autoencoder pretrains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeKind {
    /// Noisy normalized sinograms (identity on its own input).
    Data,
    /// Normalized images.
    Signal,
}

/// Pretrains one autoencoder with per-epoch MSE; returns the trained pair
/// and the loss history.
pub fn pretrain_ae(
    pair: AePair<f32>,
    data: &TrainingData,
    kind: AeKind,
    epochs: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(AePair<f32>, Vec<f64>)> {
    let enc_layers = pair.encoder.model.specs().len();
    let (enc_meta, dec_meta) = (meta(&pair.encoder), meta(&pair.decoder));
    let mut model = pair.encoder.model;
    model.extend(pair.decoder.model);
    let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.value.shape.clone()).collect();
    let mut adam = Adam::new(cfg.adam(), &shapes);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(epochs);
    let image_item = [1, data.image_shape[0], data.image_shape[1]];

    for epoch in 0..epochs {
        if cfg.shuffle {
            order.shuffle(rng);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = match kind {
                AeKind::Data => {
                    let raws: Vec<&[f64]> =
                        chunk.iter().map(|&i| data.sinograms_raw[i].as_slice()).collect();
                    let rows = apply_noise_augmentation(&raws, cfg.noise_level, &data.norm, rng);
                    let all: Vec<usize> = (0..rows.len()).collect();
                    batch_tensor(&rows, &all, &[rows[0].len()])
                }
                AeKind::Signal => batch_tensor(&data.images, chunk, &image_item),
            };
            let y = model.forward(&x)?;
            let (loss, grad) = mse_loss(&y, &x)?;
            check_finite(loss, "pretrain", epoch)?;
            model.zero_grads();
            model.backward(&grad)?;
            let mut params = model.params();
            adam.step(&mut params);
            epoch_loss += loss;
            batches += 1;
        }
        history.push(epoch_loss / batches.max(1) as f64);
    }

    let decoder_model = model.split_off(enc_layers);
    let encoder = rewrap(enc_meta, model);
    let decoder = rewrap(dec_meta, decoder_model);
    Ok((AePair { encoder, decoder }, history))
}

type NetMeta = (String, Vec<usize>, Vec<usize>, usize);

fn meta(n: &Network<f32>) -> NetMeta {
    (
        n.name.clone(),
        n.input_shape.clone(),
        n.output_shape.clone(),
        n.declared_params,
    )
}

fn rewrap(meta: NetMeta, model: crate::nn::Sequential<f32>) -> Network<f32> {
    Network {
        name: meta.0,
        model,
        input_shape: meta.1,
        output_shape: meta.2,
        declared_params: meta.3,
    }
}

/// Composed reconstruction network plus the auxiliary autoencoder halves the
/// coupled loss variant (c) trains jointly.
pub struct CoupledModel {
    pub net: Network<f32>,
    /// Number of layers belonging to the data encoder.
    pub encoder_len: usize,
    /// Layer index where the signal decoder starts.
    pub decoder_start: usize,
    pub d_y: Option<Network<f32>>,
    pub e_mu: Option<Network<f32>>,
}

/// Resumable coupled-training state.
pub struct CoupledState {
    pub model: CoupledModel,
    pub adam: Adam<f32>,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    pub history: Vec<f64>,
}

impl CoupledState {
    pub fn new(model: CoupledModel, cfg: &TrainConfig, rng: ChaCha8Rng) -> CoupledState {
        let mut shapes: Vec<Vec<usize>> = Vec::new();
        let mut m = model;
        shapes.extend(m.net.model.params().iter().map(|p| p.value.shape.clone()));
        if let Some(dy) = m.d_y.as_mut() {
            shapes.extend(dy.model.params().iter().map(|p| p.value.shape.clone()));
        }
        if let Some(emu) = m.e_mu.as_mut() {
            shapes.extend(emu.model.params().iter().map(|p| p.value.shape.clone()));
        }
        let adam = Adam::new(cfg.adam(), &shapes);
        CoupledState {
            model: m,
            adam,
            rng,
            epoch: 0,
            history: Vec::new(),
        }
    }

    fn zero_grads(&mut self) {
        for p in model_params(&mut self.model) {
            p.zero_grad();
        }
    }
}

fn model_params(model: &mut CoupledModel) -> Vec<&mut Param<f32>> {
    let mut ps = model.net.model.params();
    if let Some(dy) = model.d_y.as_mut() {
        ps.extend(dy.model.params());
    }
    if let Some(emu) = model.e_mu.as_mut() {
        ps.extend(emu.model.params());
    }
    ps
}

/// One epoch of coupled training over (noisy sinogram, image) pairs.
pub fn coupled_epoch(
    state: &mut CoupledState,
    data: &TrainingData,
    cfg: &TrainConfig,
) -> Result<f64> {
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.shuffle {
        order.shuffle(&mut state.rng);
    }
    let image_item = [1, data.image_shape[0], data.image_shape[1]];
    let mut epoch_loss = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(cfg.batch_size) {
        let raws: Vec<&[f64]> = chunk.iter().map(|&i| data.sinograms_raw[i].as_slice()).collect();
        let rows = apply_noise_augmentation(&raws, cfg.noise_level, &data.norm, &mut state.rng);
        let all: Vec<usize> = (0..rows.len()).collect();
        let x = batch_tensor(&rows, &all, &[rows[0].len()]);
        let target = batch_tensor(&data.images, chunk, &image_item);

        state.zero_grads();
        // main reconstruction loss
        let y = state.model.net.model.forward(&x)?;
        let (mse, mut grad) = mse_loss(&y, &target)?;
        let mut total = mse;
        if cfg.loss == LossVariant::MseL1 {
            let (l1, g1) = l1_loss(&y, &target, cfg.l1_mode())?;
            total += cfg.l1_weight * l1;
            let w = cfg.l1_weight as f32;
            for (g, a) in grad.data.iter_mut().zip(&g1.data) {
                *g += w * a;
            }
        }
        state.model.net.model.backward(&grad)?;

        if cfg.loss == LossVariant::MseAe {
            // data-AE reconstruction term on the same batch
            let enc_len = state.model.encoder_len;
            let dy = state.model.d_y.as_mut().expect("loss (c) needs the data decoder");
            let z = state.model.net.model.forward_range(&x, 0, enc_len)?;
            let yd = dy.model.forward(&z)?;
            let (l_data, g) = mse_loss(&yd, &x)?;
            let gz = dy.model.backward(&g)?;
            state.model.net.model.backward_range(&gz, 0, enc_len)?;

            // signal-AE reconstruction term
            let dec_start = state.model.decoder_start;
            let n_layers = state.model.net.model.layers.len();
            let emu = state.model.e_mu.as_mut().expect("loss (c) needs the signal encoder");
            let zmu = emu.model.forward(&target)?;
            let ym = state
                .model
                .net
                .model
                .forward_range(&zmu, dec_start, n_layers)?;
            let (l_sig, g) = mse_loss(&ym, &target)?;
            let gz = state.model.net.model.backward_range(&g, dec_start, n_layers)?;
            emu.model.backward(&gz)?;
            total += l_data + l_sig;
        }

        check_finite(total, "coupled", state.epoch)?;
        let mut params = model_params(&mut state.model);
        state.adam.step(&mut params);
        epoch_loss += total;
        batches += 1;
    }
    let mean = epoch_loss / batches.max(1) as f64;
    state.epoch += 1;
    state.history.push(mean);
    Ok(mean)
}

/// Runs coupled training to `cfg.epochs_coupled`, invoking `on_epoch`
/// (epoch index, mean loss) after every epoch.
pub fn train_coupled(
    state: &mut CoupledState,
    data: &TrainingData,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, &mut CoupledState) -> Result<()>,
) -> Result<()> {
    while state.epoch < cfg.epochs_coupled {
        let loss = coupled_epoch(state, data, cfg)?;
        let epoch = state.epoch;
        on_epoch(epoch, loss, state)?;
    }
    Ok(())
}

/// Trains the artifact-removal network on (reconstruction, ground truth)
/// image pairs produced by a frozen upstream model.
pub fn train_denoiser(
    den: &mut Network<f32>,
    inputs: &[Vec<f32>],
    targets: &[Vec<f32>],
    image_shape: [usize; 2],
    epochs: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    assert_eq!(inputs.len(), targets.len());
    let shapes: Vec<Vec<usize>> = den.model.params().iter().map(|p| p.value.shape.clone()).collect();
    let mut adam = Adam::new(cfg.adam(), &shapes);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let item = [1, image_shape[0], image_shape[1]];
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        if cfg.shuffle {
            order.shuffle(rng);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = batch_tensor(inputs, chunk, &item);
            let t = batch_tensor(targets, chunk, &item);
            let y = den.model.forward(&x)?;
            let (loss, grad) = mse_loss(&y, &t)?;
            check_finite(loss, "denoiser", epoch)?;
            den.model.zero_grads();
            den.model.backward(&grad)?;
            let mut params = den.model.params();
            adam.step(&mut params);
            epoch_loss += loss;
            batches += 1;
        }
        history.push(epoch_loss / batches.max(1) as f64);
    }
    Ok(history)
}

/// Batched inference: applies the network to normalized sinograms, returning
/// flat normalized images.
pub fn reconstruct_batch(
    net: &mut Network<f32>,
    sinograms_norm: &[Vec<f32>],
    batch_size: usize,
) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(sinograms_norm.len());
    for chunk in sinograms_norm.chunks(batch_size) {
        let idx: Vec<usize> = (0..chunk.len()).collect();
        let x = batch_tensor(chunk, &idx, &[chunk[0].len()]);
        let y = net.model.forward(&x)?;
        let item = y.item_len();
        for b in 0..chunk.len() {
            out.push(y.data[b * item..(b + 1) * item].to_vec());
        }
    }
    Ok(out)
}

/// Mean squared error of the model over a labeled set (inputs already
/// normalized).
pub fn evaluate_mse(
    net: &mut Network<f32>,
    inputs: &[Vec<f32>],
    targets: &[Vec<f32>],
    batch_size: usize,
) -> Result<f64> {
    let recon = reconstruct_batch(net, inputs, batch_size)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (r, t) in recon.iter().zip(targets) {
        for (a, b) in r.iter().zip(t.iter()) {
            total += (*a as f64 - *b as f64).powi(2);
            count += 1;
        }
    }
    Ok(total / count as f64)
}
