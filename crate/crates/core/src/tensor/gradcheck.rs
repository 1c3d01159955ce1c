//! Central finite-difference verification of analytic gradients.

use super::Tensor;
use crate::error::{Error, Result};

/// Largest relative disagreement between `analytic` and the central difference
/// `(f(x+ε) − f(x−ε)) / 2ε` over every coordinate of `point`.
///
/// The relative error of a coordinate is `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn finite_difference_check<F>(
    mut f: F,
    point: &Tensor<f64>,
    analytic: &Tensor<f64>,
    eps: f64,
) -> Result<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    if point.shape() != analytic.shape() {
        return Err(Error::Shape(format!(
            "gradient {:?} does not match point {:?}",
            analytic.shape(),
            point.shape()
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {eps}"
        )));
    }
    point.ensure_finite("gradient-check point")?;
    analytic.ensure_finite("analytic gradient")?;

    let mut probe = point.clone();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        let x = point.data()[i];
        probe.data_mut()[i] = x + eps;
        let up = f(&probe);
        probe.data_mut()[i] = x - eps;
        let down = f(&probe);
        probe.data_mut()[i] = x;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss at coordinate {i}")));
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.data()[i];
        let denom = a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_unit_gradient() {
        let x = Tensor::new(vec![3], vec![0.3, -1.0, 2.0]).unwrap();
        let g = Tensor::new(vec![3], vec![1.0; 3]).unwrap();
        let err = finite_difference_check(|t| t.sum(), &x, &g, 1e-3).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn sum_of_squares() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let g = Tensor::new(vec![2], vec![2.0, 4.0]).unwrap();
        let f = |t: &Tensor<f64>| t.data().iter().map(|v| v * v).sum::<f64>();
        assert!(finite_difference_check(f, &x, &g, 1e-3).unwrap() < 1e-10);
        let wrong = Tensor::new(vec![2], vec![2.0, 5.0]).unwrap();
        assert!(finite_difference_check(f, &x, &wrong, 1e-3).unwrap() > 0.1);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let x = Tensor::new(vec![1], vec![0.0]).unwrap();
        let g = Tensor::new(vec![1], vec![1.0]).unwrap();
        let r = finite_difference_check(|t| 1.0 / (t.data()[0] - 1e-3), &x, &g, 1e-3);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
