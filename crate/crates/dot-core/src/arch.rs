//! The reconstruction networks: data-AE, signal-AE (fully connected and
//! convolutional variants), bridge, denoiser, and the composed models.
//!
//! Parameter counts are declared up front and asserted at construction; a
//! mismatch is a hard failure. Latent tensors pass between the flat 800-wide
//! data side and the `[4, 10, 20]` convolutional side through a fixed
//! row-major reshape.

use crate::nn::{build_layer, Elem, LayerSpec, Sequential, Tensor};
use crate::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sinogram length `M = 19 x 200`.
pub const SINOGRAM_LEN: usize = 3800;
/// Latent width shared by the data and signal sides.
pub const LATENT: usize = 800;
/// Image height / width.
pub const IMAGE_H: usize = 40;
pub const IMAGE_W: usize = 80;
/// Flat image length `V`.
pub const IMAGE_LEN: usize = IMAGE_H * IMAGE_W;

pub const DATA_AE_PARAMS: usize = 6_084_600;
pub const DATA_ENCODER_PARAMS: usize = 3_040_800;
pub const DATA_DECODER_PARAMS: usize = 3_043_800;
pub const BRIDGE_PARAMS: usize = 4_485_600;
pub const SIGNAL_AE_CONV_PARAMS: usize = 2_421;
pub const SIGNAL_DECODER_CONV_PARAMS: usize = 809;
pub const SIGNAL_ENCODER_FC_PARAMS: usize = 2_560_800;
pub const SIGNAL_DECODER_FC_PARAMS: usize = 2_563_200;
pub const DENOISER_PARAMS: usize = 185_217;
pub const MOD_DOT_CONV_PARAMS: usize = 7_712_426;
pub const MOD_DOT_FC_PARAMS: usize = 10_274_817;

/// A named model with declared shapes and parameter count.
pub struct Network<T: Elem> {
    pub name: String,
    pub model: Sequential<T>,
    /// Per-item input shape (no batch dimension).
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub declared_params: usize,
}

impl<T: Elem> Network<T> {
    fn new(
        name: &str,
        specs: &[LayerSpec],
        input_shape: Vec<usize>,
        declared_params: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Network<T>> {
        let model = Sequential::from_specs(specs, rng)?;
        let mut batched = vec![1];
        batched.extend_from_slice(&input_shape);
        let out = model.out_shape(&batched)?;
        let net = Network {
            name: name.to_string(),
            model,
            input_shape,
            output_shape: out[1..].to_vec(),
            declared_params,
        };
        net.assert_count();
        Ok(net)
    }

    /// Declared vs actual parameter count; construction-time oracle.
    pub fn assert_count(&self) {
        let actual = self.model.param_count();
        assert_eq!(
            actual, self.declared_params,
            "{}: built {} parameters, declared {}",
            self.name, actual, self.declared_params
        );
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.model.forward(x)
    }

    /// Deep copy (fresh caches and gradients, same parameter values).
    pub fn duplicate(&mut self) -> Result<Network<T>> {
        let specs = self.model.specs();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Sequential::from_specs(&specs, &mut rng)?;
        model.load_params_from(&mut self.model)?;
        Ok(Network {
            name: self.name.clone(),
            model,
            input_shape: self.input_shape.clone(),
            output_shape: self.output_shape.clone(),
            declared_params: self.declared_params,
        })
    }
}

/// Encoder/decoder pair trained as an autoencoder.
pub struct AePair<T: Elem> {
    pub encoder: Network<T>,
    pub decoder: Network<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SignalAeVariant {
    Fc,
    Conv,
}

/// Data autoencoder: one FC + tanh encoder to the 800-wide latent space, one
/// FC + sigmoid decoder back to sinogram length.
pub fn build_data_ae<T: Elem>(rng: &mut ChaCha8Rng) -> Result<AePair<T>> {
    let encoder = Network::new(
        "data-encoder",
        &[
            LayerSpec::Fc {
                in_dim: SINOGRAM_LEN,
                out_dim: LATENT,
            },
            LayerSpec::Tanh,
        ],
        vec![SINOGRAM_LEN],
        DATA_ENCODER_PARAMS,
        rng,
    )?;
    let decoder = Network::new(
        "data-decoder",
        &[
            LayerSpec::Fc {
                in_dim: LATENT,
                out_dim: SINOGRAM_LEN,
            },
            LayerSpec::Sigmoid,
        ],
        vec![LATENT],
        DATA_DECODER_PARAMS,
        rng,
    )?;
    Ok(AePair { encoder, decoder })
}

fn conv3(in_ch: usize, out_ch: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        in_ch,
        out_ch,
        kernel: [3, 3],
        stride: [1, 1],
        padding: [1, 1],
    }
}

fn pool2() -> LayerSpec {
    LayerSpec::MaxPool2d {
        kernel: 2,
        stride: 2,
        dilation: 1,
    }
}

fn upconv2(in_ch: usize, out_ch: usize) -> LayerSpec {
    LayerSpec::ConvTranspose2d {
        in_ch,
        out_ch,
        kernel: [2, 2],
        stride: [2, 2],
        padding: [0, 0],
    }
}

fn upconv3_same(in_ch: usize, out_ch: usize) -> LayerSpec {
    LayerSpec::ConvTranspose2d {
        in_ch,
        out_ch,
        kernel: [3, 3],
        stride: [1, 1],
        padding: [1, 1],
    }
}

/// Convolutional signal autoencoder on `[1, 40, 80]` images with an 800-value
/// bottleneck of shape `[4, 10, 20]`. Every max-pool halves the spatial
/// dimensions, so the third convolution sees `[8, 10, 20]`.
pub fn build_signal_ae_conv<T: Elem>(rng: &mut ChaCha8Rng) -> Result<AePair<T>> {
    let encoder = Network::new(
        "signal-encoder-conv",
        &[
            conv3(1, 16),
            LayerSpec::Relu,
            pool2(),
            conv3(16, 8),
            LayerSpec::Relu,
            pool2(),
            conv3(8, 4),
            LayerSpec::Relu,
        ],
        vec![1, IMAGE_H, IMAGE_W],
        SIGNAL_AE_CONV_PARAMS - SIGNAL_DECODER_CONV_PARAMS,
        rng,
    )?;
    let decoder = Network::new(
        "signal-decoder-conv",
        &[
            upconv2(4, 8),
            LayerSpec::Relu,
            upconv2(8, 16),
            LayerSpec::Relu,
            upconv3_same(16, 1),
            LayerSpec::Sigmoid,
        ],
        vec![4, IMAGE_H / 4, IMAGE_W / 4],
        SIGNAL_DECODER_CONV_PARAMS,
        rng,
    )?;
    Ok(AePair { encoder, decoder })
}

/// Fully connected signal autoencoder on flattened images.
pub fn build_signal_ae_fc<T: Elem>(rng: &mut ChaCha8Rng) -> Result<AePair<T>> {
    let encoder = Network::new(
        "signal-encoder-fc",
        &[
            LayerSpec::Reshape {
                shape: vec![IMAGE_LEN],
            },
            LayerSpec::Fc {
                in_dim: IMAGE_LEN,
                out_dim: LATENT,
            },
            LayerSpec::Tanh,
        ],
        vec![1, IMAGE_H, IMAGE_W],
        SIGNAL_ENCODER_FC_PARAMS,
        rng,
    )?;
    let decoder = Network::new(
        "signal-decoder-fc",
        &[
            LayerSpec::Fc {
                in_dim: LATENT,
                out_dim: IMAGE_LEN,
            },
            LayerSpec::Sigmoid,
            LayerSpec::Reshape {
                shape: vec![1, IMAGE_H, IMAGE_W],
            },
        ],
        vec![LATENT],
        SIGNAL_DECODER_FC_PARAMS,
        rng,
    )?;
    Ok(AePair { encoder, decoder })
}

pub fn build_signal_ae<T: Elem>(
    variant: SignalAeVariant,
    rng: &mut ChaCha8Rng,
) -> Result<AePair<T>> {
    match variant {
        SignalAeVariant::Fc => build_signal_ae_fc(rng),
        SignalAeVariant::Conv => build_signal_ae_conv(rng),
    }
}

/// Bridge between the latent spaces: seven 800-wide FC + tanh stages.
pub fn build_bridge<T: Elem>(rng: &mut ChaCha8Rng) -> Result<Network<T>> {
    let mut specs = Vec::new();
    for _ in 0..7 {
        specs.push(LayerSpec::Fc {
            in_dim: LATENT,
            out_dim: LATENT,
        });
        specs.push(LayerSpec::Tanh);
    }
    Network::new("bridge", &specs, vec![LATENT], BRIDGE_PARAMS, rng)
}

/// Artifact-removal network applied after reconstruction; every stage keeps
/// the 40 x 80 resolution.
pub fn build_denoiser<T: Elem>(rng: &mut ChaCha8Rng) -> Result<Network<T>> {
    let leaky = LayerSpec::LeakyRelu { slope: 0.01 };
    let specs = vec![
        conv3(1, 32),
        leaky.clone(),
        conv3(32, 64),
        leaky.clone(),
        conv3(64, 128),
        leaky.clone(),
        upconv3_same(128, 64),
        leaky.clone(),
        upconv3_same(64, 32),
        leaky.clone(),
        upconv3_same(32, 1),
        leaky,
    ];
    Network::new(
        "denoiser",
        &specs,
        vec![1, IMAGE_H, IMAGE_W],
        DENOISER_PARAMS,
        rng,
    )
}

/// Splices encoder, bridge and decoder into the full reconstruction network
/// (sinogram -> image). Inserts the fixed row-major reshape when the decoder
/// expects the `[4, 10, 20]` latent layout.
pub fn compose_mod_dot<T: Elem>(
    e_y: Network<T>,
    bridge: Network<T>,
    d_mu: Network<T>,
) -> Result<Network<T>> {
    compose("mod-dot", e_y, Some(bridge), d_mu)
}

/// Encoder plus decoder with no bridge.
pub fn compose_e2e<T: Elem>(e_y: Network<T>, d_mu: Network<T>) -> Result<Network<T>> {
    compose("e2e", e_y, None, d_mu)
}

fn compose<T: Elem>(
    name: &str,
    e_y: Network<T>,
    bridge: Option<Network<T>>,
    d_mu: Network<T>,
) -> Result<Network<T>> {
    let mut declared = e_y.declared_params + d_mu.declared_params;
    let mut model = e_y.model;
    if let Some(b) = bridge {
        declared += b.declared_params;
        model.extend(b.model);
    }
    if d_mu.input_shape.len() > 1 {
        let reshape = build_layer(
            &LayerSpec::Reshape {
                shape: d_mu.input_shape.clone(),
            },
            &mut ChaCha8Rng::seed_from_u64(0),
        )?;
        model.extend(Sequential::new(vec![reshape]));
    }
    model.extend(d_mu.model);
    let out = model.out_shape(&[1, SINOGRAM_LEN])?;
    let net = Network {
        name: name.to_string(),
        model,
        input_shape: vec![SINOGRAM_LEN],
        output_shape: out[1..].to_vec(),
        declared_params: declared,
    };
    net.assert_count();
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn data_ae_counts_and_ranges() {
        let mut ae: AePair<f32> = build_data_ae(&mut rng()).unwrap();
        assert_eq!(
            ae.encoder.model.param_count() + ae.decoder.model.param_count(),
            DATA_AE_PARAMS
        );
        assert_eq!(ae.encoder.output_shape, vec![LATENT]);
        let x = Tensor::zeros(&[2, SINOGRAM_LEN]);
        let z = ae.encoder.forward(&x).unwrap();
        let y = ae.decoder.forward(&z).unwrap();
        assert_eq!(y.shape, vec![2, SINOGRAM_LEN]);
        assert!(y.data.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn conv_signal_ae_layer_counts() {
        let specs = [
            (conv3(1, 16), 160),
            (conv3(16, 8), 1160),
            (conv3(8, 4), 292),
            (upconv2(4, 8), 136),
            (upconv2(8, 16), 528),
            (upconv3_same(16, 1), 145),
        ];
        let mut total = 0;
        for (spec, want) in specs {
            assert_eq!(spec.param_count(), want, "{spec:?}");
            total += want;
        }
        assert_eq!(total, SIGNAL_AE_CONV_PARAMS);
        let mut ae: AePair<f32> = build_signal_ae_conv(&mut rng()).unwrap();
        // round trip through the bottleneck restores the image shape
        let x = Tensor::zeros(&[1, 1, IMAGE_H, IMAGE_W]);
        let z = ae.encoder.forward(&x).unwrap();
        assert_eq!(z.shape, vec![1, 4, 10, 20]);
        assert_eq!(z.item_len(), LATENT);
        let y = ae.decoder.forward(&z).unwrap();
        assert_eq!(y.shape, vec![1, 1, IMAGE_H, IMAGE_W]);
    }

    #[test]
    fn fc_signal_ae_counts() {
        let ae: AePair<f32> = build_signal_ae_fc(&mut rng()).unwrap();
        assert_eq!(ae.encoder.model.param_count(), SIGNAL_ENCODER_FC_PARAMS);
        assert_eq!(ae.decoder.model.param_count(), SIGNAL_DECODER_FC_PARAMS);
    }

    #[test]
    fn bridge_count_and_zero_fixpoint() {
        let mut bridge: Network<f32> = build_bridge(&mut rng()).unwrap();
        assert_eq!(bridge.model.param_count(), BRIDGE_PARAMS);
        for p in bridge.model.params() {
            p.value.data.fill(0.0);
        }
        let y = bridge.forward(&Tensor::zeros(&[3, LATENT])).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn denoiser_counts_and_shape() {
        let denoiser_layers = [
            (conv3(1, 32), 320),
            (conv3(32, 64), 18_496),
            (conv3(64, 128), 73_856),
            (upconv3_same(128, 64), 73_792),
            (upconv3_same(64, 32), 18_464),
            (upconv3_same(32, 1), 289),
        ];
        let mut total = 0;
        for (spec, want) in denoiser_layers {
            assert_eq!(spec.param_count(), want, "{spec:?}");
            total += want;
        }
        assert_eq!(total, DENOISER_PARAMS);
        let mut den: Network<f32> = build_denoiser(&mut rng()).unwrap();
        let y = den.forward(&Tensor::zeros(&[1, 1, IMAGE_H, IMAGE_W])).unwrap();
        assert_eq!(y.shape, vec![1, 1, IMAGE_H, IMAGE_W]);
    }

    #[test]
    fn composite_totals() {
        let mut r = rng();
        let data: AePair<f32> = build_data_ae(&mut r).unwrap();
        let signal = build_signal_ae_conv(&mut r).unwrap();
        let bridge = build_bridge(&mut r).unwrap();
        let mod_dot = compose_mod_dot(data.encoder, bridge, signal.decoder).unwrap();
        assert_eq!(
            mod_dot.model.param_count() + DENOISER_PARAMS,
            MOD_DOT_CONV_PARAMS
        );
        assert_eq!(mod_dot.output_shape, vec![1, IMAGE_H, IMAGE_W]);

        let mut r = rng();
        let data: AePair<f32> = build_data_ae(&mut r).unwrap();
        let signal = build_signal_ae_fc(&mut r).unwrap();
        let bridge = build_bridge(&mut r).unwrap();
        let mod_dot_fc = compose_mod_dot(data.encoder, bridge, signal.decoder).unwrap();
        assert_eq!(
            mod_dot_fc.model.param_count() + DENOISER_PARAMS,
            MOD_DOT_FC_PARAMS
        );
    }

    #[test]
    fn removing_the_bridge_reproduces_e2e_bitwise() {
        let mut r = rng();
        let mut data: AePair<f32> = build_data_ae(&mut r).unwrap();
        let mut signal = build_signal_ae_conv(&mut r).unwrap();
        let bridge = build_bridge(&mut r).unwrap();

        let e2e_encoder = data.encoder.duplicate().unwrap();
        let e2e_decoder = signal.decoder.duplicate().unwrap();
        let mod_dot = compose_mod_dot(data.encoder, bridge, signal.decoder).unwrap();
        let mut e2e = compose_e2e(e2e_encoder, e2e_decoder).unwrap();

        // drop the seven FC+tanh bridge stages from the composed graph
        let mut stripped = mod_dot.model;
        let removed: Vec<_> = stripped.layers.drain(2..16).collect();
        assert_eq!(removed.len(), 14);

        let x = Tensor::from_f64_slice(
            &[1, SINOGRAM_LEN],
            &(0..SINOGRAM_LEN)
                .map(|i| (i as f64 * 0.37).sin() * 0.5 + 0.5)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let a = stripped.forward(&x).unwrap();
        let b = e2e.forward(&x).unwrap();
        assert_eq!(a.data, b.data);
    }
}
