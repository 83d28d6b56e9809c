//! Sequential model container.

use super::layers::{build_layer, Layer, LayerSpec, Param};
use super::{Elem, Tensor};
use crate::Result;
use rand_chacha::ChaCha8Rng;

/// A chain of layers applied in order.
pub struct Sequential<T: Elem> {
    pub layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Elem> Sequential<T> {
    pub fn new(layers: Vec<Box<dyn Layer<T>>>) -> Self {
        Sequential { layers }
    }

    /// Builds every layer from its spec, drawing weights from `rng` in layer
    /// order.
    pub fn from_specs(specs: &[LayerSpec], rng: &mut ChaCha8Rng) -> Result<Self> {
        let layers: Result<Vec<_>> = specs.iter().map(|s| build_layer(s, rng)).collect();
        Ok(Sequential { layers: layers? })
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Backpropagates `grad` through the chain, accumulating parameter
    /// gradients, and returns the input gradient.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cur = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    /// Forward through layers `[from, to)` only; used when a sub-stack (e.g.
    /// just the encoder) participates in an auxiliary loss term.
    pub fn forward_range(&mut self, x: &Tensor<T>, from: usize, to: usize) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for layer in &mut self.layers[from..to] {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Backward through layers `[from, to)` in reverse, accumulating their
    /// parameter gradients.
    pub fn backward_range(&mut self, grad: &Tensor<T>, from: usize, to: usize) -> Result<Tensor<T>> {
        let mut cur = grad.clone();
        for layer in self.layers[from..to].iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    /// Splits the chain, keeping `[0, at)` and returning `[at, ...)`.
    pub fn split_off(&mut self, at: usize) -> Sequential<T> {
        Sequential {
            layers: self.layers.split_off(at),
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    pub fn params(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.specs().iter().map(|s| s.param_count()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params() {
            p.zero_grad();
        }
    }

    /// Output shape for a given input shape, checking compatibility.
    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for spec in self.specs() {
            shape = spec.out_shape(&shape)?;
        }
        Ok(shape)
    }

    /// Appends another model's layers (consuming it), used to compose
    /// encoder / bridge / decoder stacks.
    pub fn extend(&mut self, other: Sequential<T>) {
        self.layers.extend(other.layers);
    }

    /// Copies parameter values (not gradients) from `other`, which must have
    /// identical specs.
    pub fn load_params_from(&mut self, other: &mut Sequential<T>) -> Result<()> {
        if self.specs() != other.specs() {
            return Err(crate::DotError::ShapeMismatch(
                "cannot load parameters across different architectures".into(),
            ));
        }
        let mut theirs = other.params();
        for (mine, theirs) in self.params().into_iter().zip(theirs.iter_mut()) {
            mine.value.data.copy_from_slice(&theirs.value.data);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn forward_backward_roundtrip_shapes() {
        let specs = vec![
            LayerSpec::Fc { in_dim: 6, out_dim: 4 },
            LayerSpec::Tanh,
            LayerSpec::Reshape { shape: vec![1, 2, 2] },
            LayerSpec::Conv2d {
                in_ch: 1,
                out_ch: 3,
                kernel: [3, 3],
                stride: [1, 1],
                padding: [1, 1],
            },
            LayerSpec::Relu,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model: Sequential<f64> = Sequential::from_specs(&specs, &mut rng).unwrap();
        assert_eq!(model.out_shape(&[5, 6]).unwrap(), vec![5, 3, 2, 2]);
        let x = Tensor::zeros(&[5, 6]);
        let y = model.forward(&x).unwrap();
        assert_eq!(y.shape, vec![5, 3, 2, 2]);
        let gx = model.backward(&Tensor::zeros(&y.shape)).unwrap();
        assert_eq!(gx.shape, vec![5, 6]);
        assert_eq!(model.param_count(), 6 * 4 + 4 + 3 * (9 + 1));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let specs = vec![LayerSpec::Fc { in_dim: 8, out_dim: 8 }];
        let mut a: Sequential<f32> =
            Sequential::from_specs(&specs, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut b: Sequential<f32> =
            Sequential::from_specs(&specs, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let pa = a.params();
        let pb = b.params();
        for (x, y) in pa.iter().zip(pb.iter()) {
            assert_eq!(x.value.data, y.value.data);
        }
    }
}
