use super::{Real, Tensor4};
use crate::error::Result;

/// Mean squared error over every element, with its gradient `2 (pred - target) / N`.
pub fn mse_loss<R: Real>(pred: &Tensor4<R>, target: &Tensor4<R>) -> Result<(f64, Tensor4<R>)> {
    target.expect_dims(pred.dims(), "mse_loss")?;
    let n = pred.len().max(1) as f64;
    let scale = R::from_f64_lossy(2.0 / n);
    let mut sum = 0.0f64;
    let mut grad = Tensor4::zeros(pred.dims());
    for ((g, p), t) in grad.as_mut_slice().iter_mut().zip(pred.as_slice()).zip(target.as_slice()) {
        let d = *p - *t;
        sum += d.as_f64() * d.as_f64();
        *g = scale * d;
    }
    Ok((sum / n, grad))
}

/// Loss value only, accumulated in double precision.
pub fn mse_value<R: Real>(pred: &Tensor4<R>, target: &Tensor4<R>) -> Result<f64> {
    target.expect_dims(pred.dims(), "mse_value")?;
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| {
            let d = p.as_f64() - t.as_f64();
            d * d
        })
        .sum();
    Ok(sum / pred.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_tensors_have_zero_loss() {
        let x = Tensor4::from_fn((2, 3, 4, 1), |[b, h, w, _]| (b + h * w) as f32);
        let (l, g) = mse_loss(&x, &x).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_offset_has_unit_loss() {
        let t = Tensor4::from_fn((1, 2, 5, 1), |[_, h, w, _]| (h * 5 + w) as f64 * 0.3);
        let p = t.map(|v| v + 1.0);
        assert_eq!(mse_loss(&p, &t).unwrap().0, 1.0);
        assert_eq!(mse_value(&p, &t).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_pair() {
        let p = Tensor4::from_vec((1, 1, 2, 1), vec![1.0f64, 2.0]).unwrap();
        let t = Tensor4::zeros((1, 1, 2, 1));
        let (l, g) = mse_loss(&p, &t).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn shape_mismatch() {
        let p = Tensor4::<f32>::zeros((1, 1, 2, 1));
        assert!(mse_loss(&p, &Tensor4::zeros((1, 2, 1, 1))).is_err());
    }
}
