//! Stochastic gradient descent with classical momentum.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// One momentum step: `v ← momentum·v + g`, then `w ← w − lr·v`.
pub fn sgd_update<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    velocity: &mut Tensor<T>,
    lr: T,
    momentum: T,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != velocity.shape() {
        return Err(Error::Shape(format!(
            "sgd_update: param {:?}, grad {:?}, velocity {:?}",
            param.shape(),
            grad.shape(),
            velocity.shape()
        )));
    }
    for ((w, &g), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(velocity.data_mut())
    {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
    Ok(())
}

/// Optimizer state for a fixed, ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    lr: T,
    momentum: T,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(lr: f64, momentum: f64, shapes: &[&[usize]]) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(Sgd {
            lr: T::lit(lr),
            momentum: T::lit(momentum),
            velocity: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        })
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(Error::Shape(format!(
                "sgd step: {} params, {} grads, optimizer tracks {}",
                params.len(),
                grads.len(),
                self.velocity.len()
            )));
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(self.velocity.iter_mut()) {
            sgd_update(p, g, v, self.lr, self.momentum)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn plain_step_without_momentum() {
        let mut w = t(&[1.0, -2.0]);
        let mut v = t(&[0.0, 0.0]);
        sgd_update(&mut w, &t(&[0.5, 1.0]), &mut v, 0.1, 0.0).unwrap();
        assert_eq!(w.data(), &[1.0 - 0.05, -2.0 - 0.1]);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut w = t(&[3.0, 4.0]);
        let mut v = t(&[0.0, 0.0]);
        sgd_update(&mut w, &t(&[0.0, 0.0]), &mut v, 0.5, 0.9).unwrap();
        assert_eq!(w.data(), &[3.0, 4.0]);
    }

    #[test]
    fn two_momentum_steps_match_unrolled_recurrence() {
        let (lr, mu) = (0.1, 0.9);
        let (w0, g1, g2) = (1.0, 0.5, -0.25);
        let mut w = t(&[w0]);
        let mut v = t(&[0.0]);
        sgd_update(&mut w, &t(&[g1]), &mut v, lr, mu).unwrap();
        sgd_update(&mut w, &t(&[g2]), &mut v, lr, mu).unwrap();
        // v1 = g1, w1 = w0 - lr g1; v2 = mu g1 + g2, w2 = w1 - lr v2
        let expected = w0 - lr * g1 - lr * (mu * g1 + g2);
        assert!((w.data()[0] - expected).abs() < 1e-15);
        assert!((v.data()[0] - (mu * g1 + g2)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(Sgd::<f64>::new(0.0, 0.5, &[]).is_err());
        assert!(Sgd::<f64>::new(0.1, 1.0, &[]).is_err());
        assert!(Sgd::<f64>::new(0.1, 0.0, &[]).is_ok());
    }
}
