//! Layer vocabulary and construction.

use super::conv::{Conv2d, ConvTranspose2d, MaxPool2d};
use super::{Elem, Tensor};
use crate::{DotError, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Elem> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(&value.shape);
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data.fill(T::zero());
    }
}

/// Serializable layer descriptor; the checkpoint manifest stores these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Fc {
        in_dim: usize,
        out_dim: usize,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
    },
    ConvTranspose2d {
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
    },
    MaxPool2d {
        kernel: usize,
        stride: usize,
        dilation: usize,
    },
    Tanh,
    Sigmoid,
    Relu,
    LeakyRelu {
        slope: f64,
    },
    /// Per-item reshape (batch dimension preserved).
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    /// Trainable parameter count.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Fc { in_dim, out_dim } => in_dim * out_dim + out_dim,
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => out_ch * (in_ch * kernel[0] * kernel[1] + 1),
            LayerSpec::ConvTranspose2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => in_ch * out_ch * kernel[0] * kernel[1] + out_ch,
            _ => 0,
        }
    }

    /// Output shape for a batched input shape.
    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |why: &str| {
            Err(DotError::ShapeMismatch(format!(
                "{self:?} cannot take input of shape {input:?}: {why}"
            )))
        };
        match *self {
            LayerSpec::Fc { in_dim, out_dim } => {
                if input.len() != 2 || input[1] != in_dim {
                    return mismatch("expected [batch, in_dim]");
                }
                Ok(vec![input[0], out_dim])
            }
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 4 || input[1] != in_ch {
                    return mismatch("expected [batch, channels, h, w]");
                }
                let oh = (input[2] + 2 * padding[0]).checked_sub(kernel[0]).map(|v| v / stride[0] + 1);
                let ow = (input[3] + 2 * padding[1]).checked_sub(kernel[1]).map(|v| v / stride[1] + 1);
                match (oh, ow) {
                    (Some(oh), Some(ow)) => Ok(vec![input[0], out_ch, oh, ow]),
                    _ => mismatch("kernel larger than padded input"),
                }
            }
            LayerSpec::ConvTranspose2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 4 || input[1] != in_ch {
                    return mismatch("expected [batch, channels, h, w]");
                }
                let oh = (input[2] - 1) * stride[0] + kernel[0] - 2 * padding[0];
                let ow = (input[3] - 1) * stride[1] + kernel[1] - 2 * padding[1];
                Ok(vec![input[0], out_ch, oh, ow])
            }
            LayerSpec::MaxPool2d { kernel, stride, dilation } => {
                if input.len() != 4 {
                    return mismatch("expected [batch, channels, h, w]");
                }
                if dilation != 1 {
                    return mismatch("only dilation 1 is supported");
                }
                if input[2] < kernel || input[3] < kernel {
                    return mismatch("pool window larger than input");
                }
                Ok(vec![
                    input[0],
                    input[1],
                    (input[2] - kernel) / stride + 1,
                    (input[3] - kernel) / stride + 1,
                ])
            }
            LayerSpec::Reshape { ref shape } => {
                let want: usize = shape.iter().product();
                let have: usize = input[1..].iter().product();
                if want != have {
                    return mismatch("item size differs");
                }
                let mut out = vec![input[0]];
                out.extend_from_slice(shape);
                Ok(out)
            }
            _ => Ok(input.to_vec()),
        }
    }
}

/// A differentiable layer. `backward` must follow the layer's own `forward`
/// (activations are cached) and accumulates parameter gradients.
pub trait Layer<T: Elem>: Send {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;
    fn params(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }
    fn spec(&self) -> LayerSpec;
}

/// Builds a layer, drawing initial weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
/// from `rng` (weights then bias, row-major; draws are f64 so both precisions
/// see the same values).
pub fn build_layer<T: Elem>(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Result<Box<dyn Layer<T>>> {
    let uniform = |rng: &mut ChaCha8Rng, n: usize, fan_in: usize| -> Vec<T> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        (0..n).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect()
    };
    let layer: Box<dyn Layer<T>> = match *spec {
        LayerSpec::Fc { in_dim, out_dim } => {
            let w = uniform(rng, in_dim * out_dim, in_dim);
            let b = uniform(rng, out_dim, in_dim);
            Box::new(Linear {
                w: Param::new(Tensor::from_vec(&[out_dim, in_dim], w)?),
                b: Param::new(Tensor::from_vec(&[out_dim], b)?),
                cache: None,
            })
        }
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        } => {
            let fan_in = in_ch * kernel[0] * kernel[1];
            let w = uniform(rng, out_ch * fan_in, fan_in);
            let b = uniform(rng, out_ch, fan_in);
            Box::new(Conv2d::new(
                Param::new(Tensor::from_vec(&[out_ch, in_ch, kernel[0], kernel[1]], w)?),
                Param::new(Tensor::from_vec(&[out_ch], b)?),
                stride,
                padding,
            ))
        }
        LayerSpec::ConvTranspose2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        } => {
            let fan_in = in_ch * kernel[0] * kernel[1];
            let w = uniform(rng, in_ch * out_ch * kernel[0] * kernel[1], fan_in);
            let b = uniform(rng, out_ch, fan_in);
            Box::new(ConvTranspose2d::new(
                Param::new(Tensor::from_vec(&[in_ch, out_ch, kernel[0], kernel[1]], w)?),
                Param::new(Tensor::from_vec(&[out_ch], b)?),
                stride,
                padding,
            ))
        }
        LayerSpec::MaxPool2d { kernel, stride, dilation } => {
            if dilation != 1 {
                return Err(DotError::Config("max pooling supports dilation 1 only".into()));
            }
            Box::new(MaxPool2d::new(kernel, stride))
        }
        LayerSpec::Tanh => Box::new(Activation::new(ActKind::Tanh)),
        LayerSpec::Sigmoid => Box::new(Activation::new(ActKind::Sigmoid)),
        LayerSpec::Relu => Box::new(Activation::new(ActKind::Relu)),
        LayerSpec::LeakyRelu { slope } => Box::new(Activation::new(ActKind::LeakyRelu(slope))),
        LayerSpec::Reshape { ref shape } => Box::new(Reshape {
            shape: shape.clone(),
            input_shape: Vec::new(),
        }),
    };
    Ok(layer)
}

/// Fully connected layer: `y = x W^T + b`.
pub struct Linear<T> {
    pub w: Param<T>,
    pub b: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Elem> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (out_dim, in_dim) = (self.w.value.shape[0], self.w.value.shape[1]);
        if x.shape.len() != 2 || x.shape[1] != in_dim {
            return Err(DotError::ShapeMismatch(format!(
                "linear({in_dim}->{out_dim}) got input {:?}",
                x.shape
            )));
        }
        let n = x.shape[0];
        let mut y = Tensor::zeros(&[n, out_dim]);
        for (row, &bias) in self.b.value.data.iter().enumerate() {
            for i in 0..n {
                y.data[i * out_dim + row] = bias;
            }
        }
        unsafe {
            T::gemm(
                n,
                in_dim,
                out_dim,
                T::one(),
                x.data.as_ptr(),
                in_dim as isize,
                1,
                self.w.value.data.as_ptr(),
                1,
                in_dim as isize,
                T::one(),
                y.data.as_mut_ptr(),
                out_dim as isize,
                1,
            );
        }
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or_else(|| {
            DotError::Config("linear backward called before forward".into())
        })?;
        let (out_dim, in_dim) = (self.w.value.shape[0], self.w.value.shape[1]);
        let n = x.shape[0];
        // dW += g^T x
        unsafe {
            T::gemm(
                out_dim,
                n,
                in_dim,
                T::one(),
                g.data.as_ptr(),
                1,
                out_dim as isize,
                x.data.as_ptr(),
                in_dim as isize,
                1,
                T::one(),
                self.w.grad.data.as_mut_ptr(),
                in_dim as isize,
                1,
            );
        }
        for i in 0..n {
            for o in 0..out_dim {
                self.b.grad.data[o] = self.b.grad.data[o] + g.data[i * out_dim + o];
            }
        }
        // dx = g W
        let mut gx = Tensor::zeros(&x.shape);
        unsafe {
            T::gemm(
                n,
                out_dim,
                in_dim,
                T::one(),
                g.data.as_ptr(),
                out_dim as isize,
                1,
                self.w.value.data.as_ptr(),
                in_dim as isize,
                1,
                T::zero(),
                gx.data.as_mut_ptr(),
                in_dim as isize,
                1,
            );
        }
        Ok(gx)
    }

    fn params(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w, &mut self.b]
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::Fc {
            in_dim: self.w.value.shape[1],
            out_dim: self.w.value.shape[0],
        }
    }
}

#[derive(Clone, Copy)]
pub enum ActKind {
    Tanh,
    Sigmoid,
    Relu,
    LeakyRelu(f64),
}

/// Pointwise activation; caches its output (tanh/sigmoid) or input sign.
pub struct Activation<T> {
    kind: ActKind,
    cache: Option<Tensor<T>>,
}

impl<T: Elem> Activation<T> {
    pub fn new(kind: ActKind) -> Self {
        Activation { kind, cache: None }
    }
}

impl<T: Elem> Layer<T> for Activation<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = match self.kind {
            ActKind::Tanh => x.map(|v| v.tanh()),
            ActKind::Sigmoid => x.map(|v| T::one() / (T::one() + (-v).exp())),
            ActKind::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
            ActKind::LeakyRelu(s) => {
                let s = T::from_f64(s);
                x.map(|v| if v > T::zero() { v } else { s * v })
            }
        };
        // tanh/sigmoid differentiate through the output, relu through the
        // input sign; caching the input covers every case
        self.cache = Some(match self.kind {
            ActKind::Relu | ActKind::LeakyRelu(_) => x.clone(),
            _ => y.clone(),
        });
        Ok(y)
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.cache.as_ref().ok_or_else(|| {
            DotError::Config("activation backward called before forward".into())
        })?;
        let mut out = g.clone();
        match self.kind {
            ActKind::Tanh => {
                for (gv, &y) in out.data.iter_mut().zip(&c.data) {
                    *gv = *gv * (T::one() - y * y);
                }
            }
            ActKind::Sigmoid => {
                for (gv, &y) in out.data.iter_mut().zip(&c.data) {
                    *gv = *gv * y * (T::one() - y);
                }
            }
            ActKind::Relu => {
                for (gv, &x) in out.data.iter_mut().zip(&c.data) {
                    if x <= T::zero() {
                        *gv = T::zero();
                    }
                }
            }
            ActKind::LeakyRelu(s) => {
                let s = T::from_f64(s);
                for (gv, &x) in out.data.iter_mut().zip(&c.data) {
                    if x <= T::zero() {
                        *gv = *gv * s;
                    }
                }
            }
        }
        Ok(out)
    }

    fn spec(&self) -> LayerSpec {
        match self.kind {
            ActKind::Tanh => LayerSpec::Tanh,
            ActKind::Sigmoid => LayerSpec::Sigmoid,
            ActKind::Relu => LayerSpec::Relu,
            ActKind::LeakyRelu(s) => LayerSpec::LeakyRelu { slope: s },
        }
    }
}

/// Batch-preserving reshape.
pub struct Reshape {
    shape: Vec<usize>,
    input_shape: Vec<usize>,
}

impl<T: Elem> Layer<T> for Reshape {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_shape = x.shape.clone();
        let mut out = vec![x.shape[0]];
        out.extend_from_slice(&self.shape);
        x.clone().reshaped(&out)
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        g.clone().reshaped(&self.input_shape)
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::Reshape {
            shape: self.shape.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn parameter_count_formulas() {
        assert_eq!(LayerSpec::Fc { in_dim: 3800, out_dim: 800 }.param_count(), 3_040_800);
        let conv = LayerSpec::Conv2d {
            in_ch: 1,
            out_ch: 16,
            kernel: [3, 3],
            stride: [1, 1],
            padding: [1, 1],
        };
        assert_eq!(conv.param_count(), 160);
        let convt = LayerSpec::ConvTranspose2d {
            in_ch: 4,
            out_ch: 8,
            kernel: [2, 2],
            stride: [2, 2],
            padding: [0, 0],
        };
        assert_eq!(convt.param_count(), 136);
    }

    #[test]
    fn shape_algebra() {
        let conv = LayerSpec::Conv2d {
            in_ch: 1,
            out_ch: 16,
            kernel: [3, 3],
            stride: [1, 1],
            padding: [1, 1],
        };
        assert_eq!(conv.out_shape(&[2, 1, 40, 80]).unwrap(), vec![2, 16, 40, 80]);
        let pool = LayerSpec::MaxPool2d { kernel: 2, stride: 2, dilation: 1 };
        assert_eq!(pool.out_shape(&[2, 16, 40, 80]).unwrap(), vec![2, 16, 20, 40]);
        let up = LayerSpec::ConvTranspose2d {
            in_ch: 4,
            out_ch: 8,
            kernel: [2, 2],
            stride: [2, 2],
            padding: [0, 0],
        };
        assert_eq!(up.out_shape(&[2, 4, 10, 20]).unwrap(), vec![2, 8, 20, 40]);
        assert!(conv.out_shape(&[2, 3, 40, 80]).is_err());
    }

    #[test]
    fn tanh_on_zeros_is_zero_and_sigmoid_grad_quarter() {
        let mut tanh: Activation<f64> = Activation::new(ActKind::Tanh);
        let x = Tensor::zeros(&[1, 4]);
        let y = tanh.forward(&x).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));

        let mut sig: Activation<f64> = Activation::new(ActKind::Sigmoid);
        let y = sig.forward(&Tensor::zeros(&[1, 1])).unwrap();
        assert_relative_eq!(y.data[0], 0.5);
        let g = sig.backward(&Tensor::from_vec(&[1, 1], vec![1.0]).unwrap()).unwrap();
        assert_relative_eq!(g.data[0], 0.25);
    }

    #[test]
    fn linear_forward_matches_manual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = LayerSpec::Fc { in_dim: 3, out_dim: 2 };
        let mut layer: Box<dyn Layer<f64>> = build_layer(&spec, &mut rng).unwrap();
        let x = Tensor::from_vec(&[1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = layer.forward(&x).unwrap();
        // recompute by hand from the layer's own parameters
        let params = layer.params();
        let w = &params[0].value;
        let b = &params[1].value;
        for o in 0..2 {
            let manual: f64 =
                (0..3).map(|i| w.data[o * 3 + i] * x.data[i]).sum::<f64>() + b.data[o];
            assert_relative_eq!(y.data[o], manual, max_relative = 1e-14);
        }
    }
}
