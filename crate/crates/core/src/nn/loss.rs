use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Mean squared error over every element, with its gradient.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            expected: pred.shape().to_vec(),
            got: target.shape().to_vec(),
        });
    }
    let n = pred.len().max(1) as f64;
    let mut sum = 0.0f64;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p.f64() - t.f64();
        sum += d * d;
        grad.push(T::of(2.0 * d / n));
    }
    Ok((sum / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let p = Tensor::<f32>::new(vec![2], vec![1.0, 2.0]).unwrap();
        let t = Tensor::<f32>::zeros(vec![2]);
        let (l, g) = mse_loss(&p, &t).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g.data(), &[1.0, 2.0]);
    }

    #[test]
    fn equal_inputs_give_zero() {
        let p = Tensor::<f32>::new(vec![3], vec![0.5, -1.0, 4.0]).unwrap();
        let (l, g) = mse_loss(&p, &p).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let p = Tensor::<f32>::zeros(vec![2]);
        let t = Tensor::<f32>::zeros(vec![3]);
        assert!(matches!(mse_loss(&p, &t), Err(Error::ShapeMismatch { .. })));
    }
}
