//! Batch normalization over the last (feature) axis.

use super::{Mode, Real, Tensor4};
use crate::error::{Error, Result};

pub const DEFAULT_BN_EPS: f64 = 1e-3;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer<R> {
    pub gamma: Vec<R>,
    pub beta: Vec<R>,
    pub running_mean: Vec<R>,
    pub running_var: Vec<R>,
    pub eps: R,
    /// Weight of the old running statistic in each update.
    pub momentum: R,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnGrads<R> {
    pub input: Tensor4<R>,
    pub gamma: Vec<R>,
    pub beta: Vec<R>,
}

/// State saved by a train-mode forward pass; consumed by one backward pass.
#[derive(Debug)]
pub struct BnCache<R> {
    inner: Option<BnSaved<R>>,
}

#[derive(Debug)]
struct BnSaved<R> {
    normalized: Tensor4<R>,
    inv_std: Vec<R>,
    gamma: Vec<R>,
}

impl<R> BnCache<R> {
    pub fn is_consumed(&self) -> bool {
        self.inner.is_none()
    }
}

impl<R: Real> BatchNormLayer<R> {
    pub fn new(features: usize, eps: R, momentum: R) -> Self {
        BatchNormLayer {
            gamma: vec![R::one(); features],
            beta: vec![R::zero(); features],
            running_mean: vec![R::zero(); features],
            running_var: vec![R::one(); features],
            eps,
            momentum,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Tensor4<R>) -> Result<()> {
        let f = input.dims().features;
        if f != self.features() {
            return Err(Error::shape(
                "batchnorm",
                format!("last axis of size {}", self.features()),
                input.dims(),
            ));
        }
        Ok(())
    }
}

/// Elements per inner pass: a whole number of rows, long enough that the
/// per-feature loops vectorize for any feature count.
fn span_of(f: usize) -> usize {
    f * 64usize.div_ceil(f.max(1))
}

/// `v` repeated to fill one span.
fn cycled<R: Copy>(v: &[R], span: usize) -> Vec<R> {
    v.iter().copied().cycle().take(span).collect()
}

/// Spans summed in working precision before each flush into `f64`.
const FLUSH_SPANS: usize = 64;

/// Per-feature sums of `term(a, b, p)` over parallel feature-last buffers,
/// with `p` the matching entry of the per-feature `param`.
fn feature_sums<R: Real>(a: &[R], b: &[R], param: &[R], term: impl Fn(R, R, R) -> R) -> Vec<f64> {
    let f = param.len();
    let span = span_of(f);
    let param = cycled(param, span);
    let mut total = vec![0.0f64; f];
    let mut part = vec![R::zero(); span];
    for (ca, cb) in a.chunks(span * FLUSH_SPANS).zip(b.chunks(span * FLUSH_SPANS)) {
        part.fill(R::zero());
        for (xa, xb) in ca.chunks(span).zip(cb.chunks(span)) {
            for (((acc, x), y), p) in part.iter_mut().zip(xa).zip(xb).zip(&param) {
                *acc += term(*x, *y, *p);
            }
        }
        for (j, acc) in part.iter().enumerate() {
            total[j % f] += acc.as_f64();
        }
    }
    total
}

/// Per-feature mean and biased variance over every (batch, height, width) position.
fn batch_stats<R: Real>(input: &Tensor4<R>) -> (Vec<f64>, Vec<f64>) {
    let f = input.dims().features;
    let n = (input.len() / f.max(1)) as f64;
    let x = input.as_slice();
    let zeros = vec![R::zero(); f];
    let mean: Vec<f64> = feature_sums(x, x, &zeros, |v, _, _| v).into_iter().map(|s| s / n).collect();
    let mean_r: Vec<R> = mean.iter().map(|m| R::from_f64_lossy(*m)).collect();
    let var = feature_sums(x, x, &mean_r, |v, _, m| (v - m) * (v - m))
        .into_iter()
        .map(|s| s / n)
        .collect();
    (mean, var)
}

pub fn batchnorm_train<R: Real>(input: &Tensor4<R>, layer: &mut BatchNormLayer<R>) -> Result<(Tensor4<R>, BnCache<R>)> {
    layer.check(input)?;
    let f = layer.features();
    let (mean, var) = batch_stats(input);
    let eps = layer.eps.as_f64();
    let inv_std: Vec<R> = var.iter().map(|v| R::from_f64_lossy(1.0 / (v + eps).sqrt())).collect();
    let mean_r: Vec<R> = mean.iter().map(|m| R::from_f64_lossy(*m)).collect();

    let span = span_of(f);
    let (mean_c, inv_c) = (cycled(&mean_r, span), cycled(&inv_std, span));
    let (gamma_c, beta_c) = (cycled(&layer.gamma, span), cycled(&layer.beta, span));
    let mut normalized = Tensor4::zeros(input.dims());
    let mut out = Tensor4::zeros(input.dims());
    for ((src, xh), dst) in input
        .as_slice()
        .chunks(span)
        .zip(normalized.as_mut_slice().chunks_mut(span))
        .zip(out.as_mut_slice().chunks_mut(span))
    {
        for j in 0..src.len() {
            let z = (src[j] - mean_c[j]) * inv_c[j];
            xh[j] = z;
            dst[j] = gamma_c[j] * z + beta_c[j];
        }
    }

    let mom = layer.momentum;
    let keep = R::one() - mom;
    for c in 0..f {
        layer.running_mean[c] = mom * layer.running_mean[c] + keep * mean_r[c];
        layer.running_var[c] = mom * layer.running_var[c] + keep * R::from_f64_lossy(var[c]);
    }

    let cache = BnCache {
        inner: Some(BnSaved {
            normalized,
            inv_std,
            gamma: layer.gamma.clone(),
        }),
    };
    Ok((out, cache))
}

pub fn batchnorm_infer<R: Real>(input: &Tensor4<R>, layer: &BatchNormLayer<R>) -> Result<Tensor4<R>> {
    layer.check(input)?;
    let f = layer.features();
    // y = scale * x + shift, folded once per feature
    let mut scale = Vec::with_capacity(f);
    let mut shift = Vec::with_capacity(f);
    for c in 0..f {
        let s = layer.gamma[c] / (layer.running_var[c] + layer.eps).sqrt();
        scale.push(s);
        shift.push(layer.beta[c] - s * layer.running_mean[c]);
    }
    let mut out = Tensor4::zeros(input.dims());
    for (src, dst) in input.as_slice().chunks_exact(f).zip(out.as_mut_slice().chunks_exact_mut(f)) {
        for c in 0..f {
            dst[c] = scale[c] * src[c] + shift[c];
        }
    }
    Ok(out)
}

/// Mode-dispatching forward; the cache is `Some` only in train mode.
pub fn batchnorm_forward<R: Real>(
    input: &Tensor4<R>,
    layer: &mut BatchNormLayer<R>,
    mode: Mode,
) -> Result<(Tensor4<R>, Option<BnCache<R>>)> {
    match mode {
        Mode::Train => batchnorm_train(input, layer).map(|(y, c)| (y, Some(c))),
        Mode::Infer => batchnorm_infer(input, layer).map(|y| (y, None)),
    }
}

pub fn batchnorm_backward<R: Real>(cache: &mut BnCache<R>, grad_out: &Tensor4<R>) -> Result<BnGrads<R>> {
    let saved = cache.inner.as_ref().ok_or(Error::CacheConsumed)?;
    grad_out.expect_dims(saved.normalized.dims(), "batchnorm_backward grad_out")?;
    let f = saved.gamma.len();
    let n = (grad_out.len() / f.max(1)) as f64;

    let (g_all, xh_all) = (grad_out.as_slice(), saved.normalized.as_slice());
    let zeros = vec![R::zero(); f];
    let sum_g = feature_sums(g_all, g_all, &zeros, |g, _, _| g);
    let sum_gx = feature_sums(g_all, xh_all, &zeros, |g, xh, _| g * xh);

    // dx = gamma * inv_std / N * (N * dy - sum(dy) - xhat * sum(dy * xhat))
    let n_r = R::from_f64_lossy(n);
    let coef: Vec<R> = (0..f).map(|c| saved.gamma[c] * saved.inv_std[c] / n_r).collect();
    let sum_g_r: Vec<R> = sum_g.iter().map(|s| R::from_f64_lossy(*s)).collect();
    let sum_gx_r: Vec<R> = sum_gx.iter().map(|s| R::from_f64_lossy(*s)).collect();
    let span = span_of(f);
    let (coef_c, sg_c, sgx_c) = (cycled(&coef, span), cycled(&sum_g_r, span), cycled(&sum_gx_r, span));
    let mut grad_in = Tensor4::zeros(grad_out.dims());
    for ((g, xh), dst) in g_all.chunks(span).zip(xh_all.chunks(span)).zip(grad_in.as_mut_slice().chunks_mut(span)) {
        for j in 0..g.len() {
            dst[j] = coef_c[j] * (n_r * g[j] - sg_c[j] - xh[j] * sgx_c[j]);
        }
    }

    cache.inner = None;
    Ok(BnGrads {
        input: grad_in,
        gamma: sum_gx_r,
        beta: sum_g_r,
    })
}
