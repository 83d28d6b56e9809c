//! Losses: mean squared error and the l1 penalty (with its literal signed
//! variant). Both return the scalar loss and the gradient with respect to
//! the prediction.

use super::{Elem, Tensor};
use crate::{DotError, Result};

/// Mean over all elements and batch of the squared difference.
pub fn mse_loss<T: Elem>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    check(pred, target)?;
    let n = T::from_f64(pred.numel() as f64);
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&pred.shape);
    for i in 0..pred.numel() {
        let d = pred.data[i] - target.data[i];
        loss += d.into_f64() * d.into_f64();
        grad.data[i] = T::from_f64(2.0) * d / n;
    }
    Ok((loss / pred.numel() as f64, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum L1Mode {
    /// True l1: mean of |pred - target|.
    Absolute,
    /// Mean of the signed differences (no absolute value).
    Signed,
}

/// l1 penalty in the selected mode.
pub fn l1_loss<T: Elem>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mode: L1Mode,
) -> Result<(f64, Tensor<T>)> {
    check(pred, target)?;
    let n = T::from_f64(pred.numel() as f64);
    let inv = T::one() / n;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&pred.shape);
    for i in 0..pred.numel() {
        let d = pred.data[i] - target.data[i];
        match mode {
            L1Mode::Absolute => {
                loss += d.into_f64().abs();
                grad.data[i] = if d > T::zero() {
                    inv
                } else if d < T::zero() {
                    -inv
                } else {
                    T::zero()
                };
            }
            L1Mode::Signed => {
                loss += d.into_f64();
                grad.data[i] = inv;
            }
        }
    }
    Ok((loss / pred.numel() as f64, grad))
}

fn check<T: Elem>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    if pred.shape != target.shape {
        return Err(DotError::ShapeMismatch(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.shape, target.shape
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mse_basic_values() {
        let x = Tensor::from_vec(&[2], vec![0.0f64, 2.0]).unwrap();
        let y = Tensor::zeros(&[2]);
        let (l, g) = mse_loss(&x, &y).unwrap();
        assert_relative_eq!(l, 2.0);
        assert_eq!(g.data, vec![0.0, 2.0]); // 2 (x - y) / n
        let (l_self, _) = mse_loss(&x, &x).unwrap();
        assert_eq!(l_self, 0.0);
    }

    #[test]
    fn l1_modes() {
        let x = Tensor::from_vec(&[2], vec![1.0f64, -3.0]).unwrap();
        let y = Tensor::zeros(&[2]);
        let (abs, g) = l1_loss(&x, &y, L1Mode::Absolute).unwrap();
        assert_relative_eq!(abs, 2.0);
        assert_eq!(g.data, vec![0.5, -0.5]);
        let (signed, gs) = l1_loss(&x, &y, L1Mode::Signed).unwrap();
        assert_relative_eq!(signed, -1.0);
        assert_eq!(gs.data, vec![0.5, 0.5]);
    }
}
