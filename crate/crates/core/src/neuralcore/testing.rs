//! Finite-difference helpers shared by the unit tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Dims4, Tensor4};

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: impl Into<Dims4>) -> Tensor4<f64> {
    let dims = dims.into();
    Tensor4::from_vec(dims, (0..dims.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Central differences of `f` with respect to every element of `x`.
pub fn central_difference(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest element-wise relative error, with magnitudes below `1e-6` treated as `1e-6`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
