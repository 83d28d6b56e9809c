//! Finite-difference validation of every layer kind in double precision.
//!
//! The oracle is central differencing of the scalar loss with respect to each
//! parameter and input entry; analytic gradients must agree to 1e-4 relative.

use dot_core::nn::{l1_loss, mse_loss, L1Mode, LayerSpec, Sequential, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let data: Vec<f64> = (0..shape.iter().product())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Checks all parameter and input gradients of `specs` under an MSE loss.
fn gradcheck(specs: &[LayerSpec], in_shape: &[usize], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model: Sequential<f64> = Sequential::from_specs(specs, &mut rng).unwrap();
    let x = random_tensor(in_shape, &mut rng);
    let out_shape = model.out_shape(in_shape).unwrap();
    let target = random_tensor(&out_shape, &mut rng);

    let y = model.forward(&x).unwrap();
    let (_, grad_loss) = mse_loss(&y, &target).unwrap();
    model.zero_grads();
    let grad_x = model.backward(&grad_loss).unwrap();
    let analytic_params: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| p.grad.data.clone())
        .collect();

    // parameters
    let n_params = analytic_params.len();
    for pi in 0..n_params {
        let len = analytic_params[pi].len();
        // probe every entry of small tensors, a strided subset of large ones
        let stride = (len / 40).max(1);
        for ei in (0..len).step_by(stride) {
            let mut loss_at = |delta: f64| -> f64 {
                {
                    let mut params = model.params();
                    params[pi].value.data[ei] += delta;
                }
                let y = model.forward(&x).unwrap();
                let (l, _) = mse_loss(&y, &target).unwrap();
                {
                    let mut params = model.params();
                    params[pi].value.data[ei] -= delta;
                }
                l
            };
            let fd = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
            let an = analytic_params[pi][ei];
            assert!(
                rel_err(fd, an) < TOL,
                "specs {specs:?}: param {pi}[{ei}] analytic {an} vs fd {fd}"
            );
        }
    }

    // input
    let stride = (x.numel() / 40).max(1);
    for ei in (0..x.numel()).step_by(stride) {
        let mut xp = x.clone();
        xp.data[ei] += STEP;
        let (lp, _) = mse_loss(&model.forward(&xp).unwrap(), &target).unwrap();
        xp.data[ei] -= 2.0 * STEP;
        let (lm, _) = mse_loss(&model.forward(&xp).unwrap(), &target).unwrap();
        let fd = (lp - lm) / (2.0 * STEP);
        assert!(
            rel_err(fd, grad_x.data[ei]) < TOL,
            "specs {specs:?}: input[{ei}] analytic {} vs fd {fd}",
            grad_x.data[ei]
        );
    }
}

#[test]
fn fully_connected() {
    gradcheck(&[LayerSpec::Fc { in_dim: 5, out_dim: 3 }], &[4, 5], 1);
}

#[test]
fn conv2d_same_padding() {
    gradcheck(
        &[LayerSpec::Conv2d {
            in_ch: 2,
            out_ch: 3,
            kernel: [3, 3],
            stride: [1, 1],
            padding: [1, 1],
        }],
        &[2, 2, 5, 6],
        2,
    );
}

#[test]
fn conv2d_strided_no_padding() {
    gradcheck(
        &[LayerSpec::Conv2d {
            in_ch: 3,
            out_ch: 2,
            kernel: [2, 2],
            stride: [2, 2],
            padding: [0, 0],
        }],
        &[2, 3, 6, 4],
        3,
    );
}

#[test]
fn conv_transpose_upsampling() {
    gradcheck(
        &[LayerSpec::ConvTranspose2d {
            in_ch: 3,
            out_ch: 2,
            kernel: [2, 2],
            stride: [2, 2],
            padding: [0, 0],
        }],
        &[2, 3, 4, 5],
        4,
    );
}

#[test]
fn conv_transpose_same_size() {
    gradcheck(
        &[LayerSpec::ConvTranspose2d {
            in_ch: 2,
            out_ch: 1,
            kernel: [3, 3],
            stride: [1, 1],
            padding: [1, 1],
        }],
        &[2, 2, 5, 4],
        5,
    );
}

#[test]
fn max_pool() {
    gradcheck(
        &[LayerSpec::MaxPool2d {
            kernel: 2,
            stride: 2,
            dilation: 1,
        }],
        &[2, 3, 6, 8],
        6,
    );
}

#[test]
fn activations() {
    for (seed, act) in [
        (7u64, LayerSpec::Tanh),
        (8, LayerSpec::Sigmoid),
        (9, LayerSpec::Relu),
        (10, LayerSpec::LeakyRelu { slope: 0.01 }),
    ] {
        gradcheck(
            &[LayerSpec::Fc { in_dim: 6, out_dim: 6 }, act],
            &[3, 6],
            seed,
        );
    }
}

#[test]
fn composed_encoder_decoder_stack() {
    // a miniature of the image autoencoder: conv/pool encoder, transpose
    // decoder, mixed activations
    gradcheck(
        &[
            LayerSpec::Conv2d {
                in_ch: 1,
                out_ch: 4,
                kernel: [3, 3],
                stride: [1, 1],
                padding: [1, 1],
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d {
                kernel: 2,
                stride: 2,
                dilation: 1,
            },
            LayerSpec::Conv2d {
                in_ch: 4,
                out_ch: 2,
                kernel: [3, 3],
                stride: [1, 1],
                padding: [1, 1],
            },
            LayerSpec::Tanh,
            LayerSpec::ConvTranspose2d {
                in_ch: 2,
                out_ch: 1,
                kernel: [2, 2],
                stride: [2, 2],
                padding: [0, 0],
            },
            LayerSpec::Sigmoid,
        ],
        &[2, 1, 4, 6],
        11,
    );
}

#[test]
fn reshape_and_bridge_stack() {
    gradcheck(
        &[
            LayerSpec::Fc { in_dim: 12, out_dim: 8 },
            LayerSpec::Tanh,
            LayerSpec::Reshape { shape: vec![2, 2, 2] },
            LayerSpec::ConvTranspose2d {
                in_ch: 2,
                out_ch: 1,
                kernel: [2, 2],
                stride: [2, 2],
                padding: [0, 0],
            },
        ],
        &[3, 12],
        12,
    );
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random_tensor(&[3, 7], &mut rng);
    let t = random_tensor(&[3, 7], &mut rng);
    for mode in [None, Some(L1Mode::Absolute), Some(L1Mode::Signed)] {
        let eval = |x: &Tensor<f64>| match mode {
            None => mse_loss(x, &t).unwrap(),
            Some(m) => l1_loss(x, &t, m).unwrap(),
        };
        let (_, grad) = eval(&x);
        for ei in 0..x.numel() {
            let mut xp = x.clone();
            xp.data[ei] += STEP;
            let (lp, _) = eval(&xp);
            xp.data[ei] -= 2.0 * STEP;
            let (lm, _) = eval(&xp);
            let fd = (lp - lm) / (2.0 * STEP);
            assert!(
                rel_err(fd, grad.data[ei]) < TOL,
                "{mode:?} grad[{ei}]: analytic {} vs fd {fd}",
                grad.data[ei]
            );
        }
    }
}

#[test]
fn gradient_is_zero_for_unused_parameters() {
    // the second FC's bias feeds a ReLU that the input never activates
    let specs = [
        LayerSpec::Fc { in_dim: 4, out_dim: 4 },
        LayerSpec::Fc { in_dim: 4, out_dim: 2 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut model: Sequential<f64> = Sequential::from_specs(&specs, &mut rng).unwrap();
    // zero the first layer's weights: loss then can't depend on its bias
    // partner's upstream input weights
    let x = Tensor::zeros(&[2, 4]);
    let y = model.forward(&x).unwrap();
    let t = Tensor::zeros(&y.shape);
    let (_, g) = mse_loss(&y, &t).unwrap();
    model.zero_grads();
    model.backward(&g).unwrap();
    // with x = 0 the first layer's weight gradient is exactly zero
    let params = model.params();
    assert!(params[0].grad.data.iter().all(|&v| v == 0.0));
}
