//! Adam optimizer with bias correction.

use super::layers::Param;
use super::{Elem, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: first/second moment buffers per parameter tensor plus the
/// shared timestep.
pub struct Adam<T> {
    pub cfg: AdamConfig,
    pub timestep: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Elem> Adam<T> {
    pub fn new(cfg: AdamConfig, param_shapes: &[Vec<usize>]) -> Self {
        Adam {
            cfg,
            timestep: 0,
            m: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// One update from the accumulated gradients; call `zero_grad` afterwards.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) {
        assert_eq!(params.len(), self.m.len(), "optimizer/param mismatch");
        self.timestep += 1;
        let t = self.timestep as i32;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let lr = T::from_f64(self.cfg.lr);
        let eps = T::from_f64(self.cfg.eps);
        let c1 = T::one() / (T::one() - b1.powi(t));
        let c2 = T::one() / (T::one() - b2.powi(t));
        for (k, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for i in 0..p.value.data.len() {
                let g = p.grad.data[i];
                m.data[i] = b1 * m.data[i] + (T::one() - b1) * g;
                v.data[i] = b2 * v.data[i] + (T::one() - b2) * g * g;
                let mhat = m.data[i] * c1;
                let vhat = v.data[i] * c2;
                p.value.data[i] = p.value.data[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn param(values: Vec<f64>) -> Param<f64> {
        Param::new(Tensor::from_vec(&[values.len()], values).unwrap())
    }

    #[test]
    fn first_step_magnitude_close_to_lr() {
        // closed form: m_hat = g, v_hat = g^2, so the step is lr g/(|g|+eps)
        let cfg = AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        };
        let mut p = param(vec![1.0, -2.0]);
        p.grad.data = vec![0.5, -3.0];
        let mut opt = Adam::new(cfg, &[vec![2]]);
        opt.step(&mut [&mut p]);
        let expected0 = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
        let expected1 = -2.0 + 1e-3 * 3.0 / (3.0 + 1e-8);
        assert_relative_eq!(p.value.data[0], expected0, max_relative = 1e-12);
        assert_relative_eq!(p.value.data[1], expected1, max_relative = 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_parameters_fixed() {
        let mut p = param(vec![0.7, -0.3]);
        let mut opt = Adam::new(AdamConfig::default(), &[vec![2]]);
        for _ in 0..10 {
            p.zero_grad();
            opt.step(&mut [&mut p]);
        }
        assert_eq!(p.value.data, vec![0.7, -0.3]);
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut p = param(vec![0.1, 0.2, 0.3]);
            let mut opt = Adam::new(AdamConfig::default(), &[vec![3]]);
            for step in 0..25 {
                for (i, g) in p.grad.data.iter_mut().enumerate() {
                    *g = ((step * 3 + i) as f64).sin();
                }
                opt.step(&mut [&mut p]);
                p.zero_grad();
            }
            p.value.data
        };
        assert_eq!(run(), run());
    }
}
