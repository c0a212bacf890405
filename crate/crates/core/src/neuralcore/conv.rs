//! 2-D cross-correlation over (height, width) with exact gradients.
//!
//! Two evaluation strategies share one geometry. Layers with a narrow
//! feature axis run the direct loops in [`super::direct`]. Wide layers treat
//! the convolution as a sum over kernel taps: for every tap the affected
//! output rows and the input rows they read are each contiguous in memory, so
//! the tap is a single blocked matrix product with no im2col copy. Width
//! padding is materialised once per call; height padding is handled by
//! skipping rows. Accumulation order per output element depends only on the
//! layer geometry, so results are reproducible bit-for-bit.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use super::direct;
use super::real::{gemm, MatView};
use super::{Dims4, Real, Tensor4};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// No padding; each spatial axis shrinks by `k - 1`.
    Valid,
    /// Zero padding that preserves the spatial size. For a kernel of size `k`
    /// the padding is `floor((k-1)/2)` before and the remainder after.
    SameZero,
}

impl Padding {
    fn before(self, k: usize) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::SameZero => (k - 1) / 2,
        }
    }
}

/// Convolution weights `(K_out, k_h, k_w, F_in)` plus one bias per output feature.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<R> {
    pub weights: Tensor4<R>,
    pub bias: Vec<R>,
    pub padding: Padding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<R> {
    pub input: Tensor4<R>,
    pub weights: Tensor4<R>,
    pub bias: Vec<R>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub input: Dims4,
    pub output: Dims4,
    pub kh: usize,
    pub kw: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

/// How a convolution is evaluated; both give the same result up to rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Strategy {
    /// Per-position loops, best when either feature axis is narrow.
    Direct,
    /// One blocked matrix product per kernel tap.
    Gemm,
}

impl Strategy {
    fn pick(g: &Geometry) -> Self {
        if g.kw * g.input.features >= 32 && g.output.features >= 32 {
            Strategy::Gemm
        } else {
            Strategy::Direct
        }
    }
}

impl Geometry {
    /// Length of one flattened kernel, `kh * kw * F_in`.
    fn patch_width(&self) -> usize {
        self.kh * self.kw * self.input.features
    }

    /// Input width including zero padding on both sides.
    fn padded_width(&self) -> usize {
        self.output.width + self.kw - 1
    }
}

impl<R: Real> ConvLayer<R> {
    pub fn zeros(out_features: usize, kernel: (usize, usize), in_features: usize, padding: Padding) -> Result<Self> {
        if out_features == 0 || kernel.0 == 0 || kernel.1 == 0 || in_features == 0 {
            return Err(Error::Config(format!(
                "convolution needs non-zero sizes, got K_out={out_features} kernel={kernel:?} F_in={in_features}"
            )));
        }
        Ok(ConvLayer {
            weights: Tensor4::zeros((out_features, kernel.0, kernel.1, in_features)),
            bias: vec![R::zero(); out_features],
            padding,
        })
    }

    pub fn out_features(&self) -> usize {
        self.weights.dims().batch
    }

    pub fn kernel(&self) -> (usize, usize) {
        let d = self.weights.dims();
        (d.height, d.width)
    }

    pub fn in_features(&self) -> usize {
        self.weights.dims().features
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Output shape for `input`, or a shape error naming both shapes.
    pub fn output_dims(&self, input: Dims4) -> Result<Dims4> {
        self.geometry(input).map(|g| g.output)
    }

    fn geometry(&self, input: Dims4) -> Result<Geometry> {
        let (kh, kw) = self.kernel();
        let wd = self.weights.dims();
        let mismatch = || {
            Error::shape(
                "conv2d",
                format!("input compatible with kernel {wd} ({:?})", self.padding),
                input,
            )
        };
        if input.features != self.in_features() || self.bias.len() != self.out_features() {
            return Err(mismatch());
        }
        let (h_out, w_out) = match self.padding {
            Padding::Valid => {
                if input.height < kh || input.width < kw {
                    return Err(mismatch());
                }
                (input.height - kh + 1, input.width - kw + 1)
            }
            Padding::SameZero => (input.height, input.width),
        };
        Ok(Geometry {
            input,
            output: Dims4::new(input.batch, h_out, w_out, self.out_features()),
            kh,
            kw,
            pad_top: self.padding.before(kh),
            pad_left: self.padding.before(kw),
        })
    }
}

/// Input widened by the zero padding along width, laid out `(B, H_in, Wp, F)`.
fn pad_width<'a, R: Real>(input: &'a Tensor4<R>, g: &Geometry) -> Cow<'a, [R]> {
    let wp = g.padded_width();
    if wp == g.input.width {
        return Cow::Borrowed(input.as_slice());
    }
    let f = g.input.features;
    let mut out = vec![R::zero(); g.input.batch * g.input.height * wp * f];
    for (r, row) in input.as_slice().chunks_exact(g.input.width * f).enumerate() {
        let dst = r * wp * f + g.pad_left * f;
        out[dst..dst + row.len()].copy_from_slice(row);
    }
    Cow::Owned(out)
}

/// One GEMM per kernel tap: `(A offset, C offset, weight offset, rows m)`.
///
/// Output rows are laid out on the padded width `Wp`, so the tap `(i, j)`
/// reads the input at a fixed flat offset from every output position. The
/// `kw - 1` trailing positions of each padded row are scratch and never read
/// back. Rows whose tap falls into the height padding are skipped outright.
///
/// With `combine_width` all `kw` taps of a kernel row form one product over
/// overlapping input windows (`kw * F` wide); the output side of that product
/// never overlaps, so this is valid for the forward pass only.
fn tap_plan(g: &Geometry, combine_width: bool) -> Vec<(usize, usize, usize, usize)> {
    let (f, k) = (g.input.features, g.output.features);
    let wp = g.padded_width();
    let (h_in, h_out) = (g.input.height, g.output.height);
    let mut plan = Vec::new();
    for i in 0..g.kh {
        let ho0 = g.pad_top.saturating_sub(i);
        let ho1 = h_out.min((h_in + g.pad_top).saturating_sub(i));
        if ho1 <= ho0 {
            continue;
        }
        let hi0 = ho0 + i - g.pad_top;
        // whole images with matching heights are contiguous across the batch
        let merged = ho0 == 0 && ho1 == h_out && hi0 == 0 && h_in == h_out;
        let (groups, rows) = if merged { (1, g.input.batch * h_out) } else { (g.input.batch, ho1 - ho0) };
        let width_taps = if combine_width { 1 } else { g.kw };
        for b in 0..groups {
            for j in 0..width_taps {
                let a = ((b * h_in + hi0) * wp + j) * f;
                let c = (b * h_out + ho0) * wp * k;
                plan.push((a, c, (i * g.kw + j) * f, rows * wp - (g.kw - 1)));
            }
        }
    }
    plan
}

fn bias_grad<R: Real>(grad_out: &Tensor4<R>, k_out: usize) -> Vec<R> {
    let mut grad_b = vec![R::zero(); k_out];
    for chunk in grad_out.as_slice().chunks_exact(k_out) {
        for (acc, v) in grad_b.iter_mut().zip(chunk) {
            *acc += *v;
        }
    }
    grad_b
}

pub fn conv2d_forward<R: Real>(input: &Tensor4<R>, layer: &ConvLayer<R>) -> Result<Tensor4<R>> {
    let g = layer.geometry(input.dims())?;
    forward_with(input, layer, g, Strategy::pick(&g))
}

pub(crate) fn forward_with<R: Real>(input: &Tensor4<R>, layer: &ConvLayer<R>, g: Geometry, strategy: Strategy) -> Result<Tensor4<R>> {
    if strategy == Strategy::Direct {
        let mut out = Tensor4::zeros(g.output);
        direct::forward(input.as_slice(), &g, layer.weights.as_slice(), &layer.bias, out.as_mut_slice());
        return Ok(out);
    }
    let (f, k_out) = (g.input.features, g.output.features);
    let wp = g.padded_width();
    let pin = pad_width(input, &g);
    let w = layer.weights.as_slice();
    let w_stride = g.patch_width();

    let mut out_pad = vec![R::zero(); g.output.batch * g.output.height * wp * k_out];
    for chunk in out_pad.chunks_exact_mut(k_out) {
        chunk.copy_from_slice(&layer.bias);
    }
    for (a, c, wo, m) in tap_plan(&g, true) {
        gemm(
            &pin[a..],
            MatView::strided(m, g.kw * f, f, 1),
            &w[wo..],
            MatView::strided(g.kw * f, k_out, 1, w_stride),
            R::one(),
            &mut out_pad[c..],
            MatView::row_major(m, k_out),
        );
    }
    if wp == g.output.width {
        return Tensor4::from_vec(g.output, out_pad);
    }
    let row = g.output.width * k_out;
    let mut out = Vec::with_capacity(g.output.len());
    for r in 0..g.output.batch * g.output.height {
        out.extend_from_slice(&out_pad[r * wp * k_out..r * wp * k_out + row]);
    }
    Tensor4::from_vec(g.output, out)
}

pub fn conv2d_backward<R: Real>(input: &Tensor4<R>, layer: &ConvLayer<R>, grad_out: &Tensor4<R>) -> Result<ConvGrads<R>> {
    let g = layer.geometry(input.dims())?;
    backward_with(input, layer, grad_out, g, Strategy::pick(&g))
}

pub(crate) fn backward_with<R: Real>(
    input: &Tensor4<R>,
    layer: &ConvLayer<R>,
    grad_out: &Tensor4<R>,
    g: Geometry,
    strategy: Strategy,
) -> Result<ConvGrads<R>> {
    grad_out.expect_dims(g.output, "conv2d_backward grad_out")?;
    if strategy == Strategy::Direct {
        let mut grad_in = Tensor4::zeros(g.input);
        let mut grad_w = Tensor4::zeros(layer.weights.dims());
        direct::backward(
            input.as_slice(),
            &g,
            layer.weights.as_slice(),
            grad_out.as_slice(),
            grad_in.as_mut_slice(),
            grad_w.as_mut_slice(),
        );
        return Ok(ConvGrads {
            input: grad_in,
            weights: grad_w,
            bias: bias_grad(grad_out, g.output.features),
        });
    }
    let (f, k_out) = (g.input.features, g.output.features);
    let wp = g.padded_width();
    let w_stride = g.patch_width();
    let pin = pad_width(input, &g);
    let w = layer.weights.as_slice();

    // scratch positions of each padded row must carry zero gradient
    let gout: Cow<'_, [R]> = if wp == g.output.width {
        Cow::Borrowed(grad_out.as_slice())
    } else {
        let row = g.output.width * k_out;
        let mut buf = vec![R::zero(); g.output.batch * g.output.height * wp * k_out];
        for (r, src) in grad_out.as_slice().chunks_exact(row).enumerate() {
            buf[r * wp * k_out..r * wp * k_out + row].copy_from_slice(src);
        }
        Cow::Owned(buf)
    };

    let grad_b = bias_grad(grad_out, k_out);
    let mut grad_w = Tensor4::zeros(layer.weights.dims());
    let mut grad_pin = vec![R::zero(); g.input.batch * g.input.height * wp * f];
    for (a, c, wo, m) in tap_plan(&g, false) {
        // dX_tap (m x F) += dY (m x K) * W_tap (K x F)
        gemm(
            &gout[c..],
            MatView::row_major(m, k_out),
            &w[wo..],
            MatView::strided(k_out, f, w_stride, 1),
            R::one(),
            &mut grad_pin[a..],
            MatView::row_major(m, f),
        );
        // dW_tap (K x F) += dY^T (K x m) * X_tap (m x F)
        gemm(
            &gout[c..],
            MatView::transposed(k_out, m),
            &pin[a..],
            MatView::row_major(m, f),
            R::one(),
            &mut grad_w.as_mut_slice()[wo..],
            MatView::strided(k_out, f, w_stride, 1),
        );
    }
    let grad_in = if wp == g.input.width {
        Tensor4::from_vec(g.input, grad_pin)?
    } else {
        let row = g.input.width * f;
        let mut out = Vec::with_capacity(g.input.len());
        for r in 0..g.input.batch * g.input.height {
            let s = r * wp * f + g.pad_left * f;
            out.extend_from_slice(&grad_pin[s..s + row]);
        }
        Tensor4::from_vec(g.input, out)?
    };
    Ok(ConvGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::testing::{central_difference, max_rel_error, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop cross-correlation used as an independent reference.
    fn naive_conv(input: &Tensor4<f64>, layer: &ConvLayer<f64>) -> Tensor4<f64> {
        let d = input.dims();
        let (kh, kw) = layer.kernel();
        let (pt, pl) = (layer.padding.before(kh) as isize, layer.padding.before(kw) as isize);
        let (ho_n, wo_n) = match layer.padding {
            Padding::Valid => (d.height - kh + 1, d.width - kw + 1),
            Padding::SameZero => (d.height, d.width),
        };
        Tensor4::from_fn((d.batch, ho_n, wo_n, layer.out_features()), |[b, ho, wo, o]| {
            let mut acc = layer.bias[o];
            for i in 0..kh {
                for j in 0..kw {
                    let hi = ho as isize + i as isize - pt;
                    let wi = wo as isize + j as isize - pl;
                    if hi < 0 || wi < 0 || hi >= d.height as isize || wi >= d.width as isize {
                        continue;
                    }
                    for f in 0..d.features {
                        acc += layer.weights.get([o, i, j, f]) * input.get([b, hi as usize, wi as usize, f]);
                    }
                }
            }
            acc
        })
    }

    fn random_layer(rng: &mut ChaCha8Rng, k: usize, kernel: (usize, usize), f: usize, padding: Padding) -> ConvLayer<f64> {
        ConvLayer {
            weights: random_tensor(rng, (k, kernel.0, kernel.1, f)),
            bias: random_tensor(rng, (1, 1, 1, k)).into_vec(),
            padding,
        }
    }

    #[test]
    fn table_first_layer_shape() {
        let layer = ConvLayer::<f32>::zeros(56, (56, 1), 1, Padding::Valid).unwrap();
        assert_eq!(layer.output_dims(Dims4::new(64, 56, 512, 1)).unwrap(), Dims4::new(64, 1, 512, 56));
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut layer = ConvLayer::<f32>::zeros(1, (1, 1), 1, Padding::Valid).unwrap();
        layer.weights.as_mut_slice()[0] = 1.0;
        let x = Tensor4::from_fn((2, 3, 5, 1), |[b, h, w, _]| (b * 31 + h * 7 + w) as f32 * 0.37 - 3.0);
        assert_eq!(conv2d_forward(&x, &layer).unwrap(), x);
    }

    #[test]
    fn even_kernel_same_padding_trails_zero() {
        let mut layer = ConvLayer::<f64>::zeros(1, (1, 2), 1, Padding::SameZero).unwrap();
        layer.weights.as_mut_slice().copy_from_slice(&[1.0, 1.0]);
        let x = Tensor4::from_vec((1, 1, 3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &layer).unwrap().as_slice(), &[3.0, 5.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let layer = ConvLayer::<f32>::zeros(2, (3, 1), 2, Padding::Valid).unwrap();
        let err = conv2d_forward(&Tensor4::zeros((1, 4, 4, 1)), &layer).unwrap_err().to_string();
        assert!(err.contains("(2, 3, 1, 2)") && err.contains("(1, 4, 4, 1)"), "{err}");
        let err = conv2d_forward(&Tensor4::zeros((1, 2, 4, 2)), &layer).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (kernel, f, k, pad) in [
            ((2, 2), 2, 3, Padding::Valid),
            ((3, 1), 2, 4, Padding::SameZero),
            ((1, 4), 3, 2, Padding::SameZero),
            ((4, 3), 1, 1, Padding::SameZero),
            ((1, 5), 11, 1, Padding::SameZero),
            ((2, 4), 9, 2, Padding::Valid),
            ((1, 3), 1, 9, Padding::SameZero),
        ] {
            let layer = random_layer(&mut rng, k, kernel, f, pad);
            let x = random_tensor(&mut rng, (2, 5, 7, f));
            let want = naive_conv(&x, &layer);
            let g = layer.geometry(x.dims()).unwrap();
            for strategy in [Strategy::Direct, Strategy::Gemm] {
                let got = forward_with(&x, &layer, g, strategy).unwrap();
                assert_eq!(got.dims(), want.dims());
                for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
                    assert!((a - b).abs() < 1e-12, "{strategy:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn strategies_agree_on_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (kernel, f, k, pad) in [
            ((5, 1), 1, 6, Padding::Valid),
            ((1, 4), 1, 3, Padding::SameZero),
            ((1, 3), 4, 4, Padding::SameZero),
            ((5, 1), 4, 5, Padding::SameZero),
            ((5, 1), 5, 1, Padding::SameZero),
            ((2, 3), 3, 2, Padding::Valid),
            ((1, 5), 11, 1, Padding::SameZero),
            ((3, 4), 8, 12, Padding::SameZero),
            ((1, 6), 1, 9, Padding::SameZero),
        ] {
            let layer = random_layer(&mut rng, k, kernel, f, pad);
            let x = random_tensor(&mut rng, (2, 5, 13, f));
            let g = layer.geometry(x.dims()).unwrap();
            let gy = random_tensor(&mut rng, g.output);
            let a = backward_with(&x, &layer, &gy, g, Strategy::Direct).unwrap();
            let b = backward_with(&x, &layer, &gy, g, Strategy::Gemm).unwrap();
            let close = |p: &[f64], q: &[f64]| p.iter().zip(q).all(|(u, v)| (u - v).abs() < 1e-12);
            assert!(close(a.input.as_slice(), b.input.as_slice()), "input grad {kernel:?} {f}->{k}");
            assert!(close(a.weights.as_slice(), b.weights.as_slice()), "weight grad {kernel:?} {f}->{k}");
            assert!(close(&a.bias, &b.bias));
        }
    }

    #[test]
    fn wide_layers_use_gemm() {
        let layer = ConvLayer::<f32>::zeros(56, (1, 12), 56, Padding::SameZero).unwrap();
        let g = layer.geometry(Dims4::new(1, 56, 512, 56)).unwrap();
        assert_eq!(Strategy::pick(&g), Strategy::Gemm);
        let layer = ConvLayer::<f32>::zeros(8, (1, 12), 8, Padding::SameZero).unwrap();
        let g = layer.geometry(Dims4::new(64, 8, 512, 8)).unwrap();
        assert_eq!(Strategy::pick(&g), Strategy::Direct);
    }

    #[test]
    fn backward_zero_grad_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = random_layer(&mut rng, 3, (2, 2), 2, Padding::SameZero);
        let x = random_tensor(&mut rng, (2, 3, 4, 2));
        let g = conv2d_backward(&x, &layer, &Tensor4::zeros((2, 3, 4, 3))).unwrap();
        assert!(g.input.as_slice().iter().all(|v| *v == 0.0));
        assert!(g.weights.as_slice().iter().all(|v| *v == 0.0));
        assert!(g.bias.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_scalar_chain_rule() {
        let layer = ConvLayer {
            weights: Tensor4::from_vec((1, 1, 1, 1), vec![1.5f64]).unwrap(),
            bias: vec![0.25],
            padding: Padding::Valid,
        };
        let x = Tensor4::from_vec((1, 1, 1, 1), vec![-2.0]).unwrap();
        let g = conv2d_backward(&x, &layer, &Tensor4::from_vec((1, 1, 1, 1), vec![0.5]).unwrap()).unwrap();
        assert_eq!(g.input.as_slice(), &[0.75]);
        assert_eq!(g.weights.as_slice(), &[-1.0]);
        assert_eq!(g.bias, vec![0.5]);
    }

    #[test]
    fn backward_rejects_wrong_grad_shape() {
        let layer = ConvLayer::<f64>::zeros(3, (2, 2), 2, Padding::Valid).unwrap();
        let x = Tensor4::zeros((2, 3, 4, 2));
        assert!(conv2d_backward(&x, &layer, &Tensor4::zeros((2, 3, 4, 3))).is_err());
    }

    fn check_gradients(padding: Padding) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let layer = random_layer(&mut rng, 3, (2, 2), 2, padding);
        let x = random_tensor(&mut rng, (2, 3, 4, 2));
        let out_dims = layer.output_dims(x.dims()).unwrap();
        let probe = random_tensor(&mut rng, out_dims);
        // scalar objective: <probe, conv(x)>
        let objective = |x: &Tensor4<f64>, layer: &ConvLayer<f64>| -> f64 {
            let y = conv2d_forward(x, layer).unwrap();
            y.as_slice().iter().zip(probe.as_slice()).map(|(a, b)| a * b).sum()
        };
        let g = conv2d_backward(&x, &layer, &probe).unwrap();

        let num_x = central_difference(x.as_slice(), 1e-5, |v| {
            objective(&Tensor4::from_vec(x.dims(), v.to_vec()).unwrap(), &layer)
        });
        assert!(max_rel_error(g.input.as_slice(), &num_x) < 1e-4);

        let num_w = central_difference(layer.weights.as_slice(), 1e-5, |v| {
            let mut l = layer.clone();
            l.weights.as_mut_slice().copy_from_slice(v);
            objective(&x, &l)
        });
        assert!(max_rel_error(g.weights.as_slice(), &num_w) < 1e-4);

        let num_b = central_difference(&layer.bias, 1e-5, |v| {
            let mut l = layer.clone();
            l.bias.copy_from_slice(v);
            objective(&x, &l)
        });
        assert!(max_rel_error(&g.bias, &num_b) < 1e-4);
    }

    #[test]
    fn gradients_match_finite_differences_valid() {
        check_gradients(Padding::Valid);
    }

    #[test]
    fn gradients_match_finite_differences_same() {
        check_gradients(Padding::SameZero);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shape_algebra(h in 1usize..7, w in 1usize..9, kh in 1usize..4, kw in 1usize..5, f in 1usize..3) {
                let same = ConvLayer::<f32>::zeros(2, (kh, kw), f, Padding::SameZero).unwrap();
                let d = same.output_dims(Dims4::new(1, h, w, f)).unwrap();
                prop_assert_eq!((d.height, d.width), (h, w));
                let valid = ConvLayer::<f32>::zeros(2, (kh, kw), f, Padding::Valid).unwrap();
                match valid.output_dims(Dims4::new(1, h, w, f)) {
                    Ok(d) => prop_assert_eq!((d.height, d.width), (h + 1 - kh, w + 1 - kw)),
                    Err(_) => prop_assert!(h < kh || w < kw),
                }
            }

            #[test]
            fn zero_bias_conv_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut layer = random_layer(&mut rng, 2, (2, 3), 2, Padding::SameZero);
                layer.bias.fill(0.0);
                let x = random_tensor(&mut rng, (1, 3, 6, 2));
                let y = random_tensor(&mut rng, (1, 3, 6, 2));
                let mix = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
                let lhs = conv2d_forward(&mix, &layer).unwrap();
                let fx = conv2d_forward(&x, &layer).unwrap();
                let fy = conv2d_forward(&y, &layer).unwrap();
                for ((l, p), q) in lhs.as_slice().iter().zip(fx.as_slice()).zip(fy.as_slice()) {
                    prop_assert!((l - (a * p + b * q)).abs() < 1e-10);
                }
            }
        }
    }
}
