//! Direct convolution loops for layers with few input or output features.
//!
//! Blocked GEMM spends most of its time packing when one matrix side is a
//! handful of features wide. These loops keep small register tiles instead:
//! output features are padded to blocks of [`LANES`] and several positions
//! are updated per weight load. On x86-64 the same code is also compiled with
//! AVX2 enabled and picked at runtime.

use super::conv::Geometry;
use super::Real;

const LANES: usize = 8;
/// Output positions sharing one weight vector load in the forward tile.
const POS: usize = 8;
/// Input features sharing one gradient vector load in the weight-gradient tile.
const FEAT: usize = 8;

type Lane<R> = [R; LANES];

#[inline(always)]
fn fma_lane<R: Real>(acc: &mut Lane<R>, x: R, w: &Lane<R>) {
    for l in 0..LANES {
        acc[l] += x * w[l];
    }
}

#[inline(always)]
fn load_lane<R: Real>(s: &[R]) -> Lane<R> {
    let mut v = [R::zero(); LANES];
    v.copy_from_slice(&s[..LANES]);
    v
}

/// Kernel taps along one axis that land inside the input for output `o`.
#[inline(always)]
fn taps(o: usize, pad: usize, k: usize, len: usize) -> std::ops::Range<usize> {
    pad.saturating_sub(o)..k.min((len + pad).saturating_sub(o))
}

/// Output positions `o` for which tap `t` lands inside an input of `len`.
#[inline(always)]
fn outputs_for_tap(t: usize, pad: usize, len: usize, out_len: usize) -> std::ops::Range<usize> {
    let lo = pad.saturating_sub(t);
    let hi = out_len.min((len + pad).saturating_sub(t));
    lo..hi.max(lo)
}

fn padded(k: usize) -> usize {
    k.div_ceil(LANES) * LANES
}

/// Convolution weights `(K, kh, kw, F)` with zero-padded output lanes,
/// reordered to `(kh * kw, F, Kp)`.
struct PackedWeights<R> {
    data: Vec<R>,
    kp: usize,
}

impl<R: Real> PackedWeights<R> {
    fn pack(w: &[R], k: usize, taps: usize, f: usize) -> Self {
        let kp = padded(k);
        let mut data = vec![R::zero(); taps * f * kp];
        for o in 0..k {
            for t in 0..taps {
                for c in 0..f {
                    data[(t * f + c) * kp + o] = w[(o * taps + t) * f + c];
                }
            }
        }
        PackedWeights { data, kp }
    }

    #[inline(always)]
    fn lane(&self, t: usize, f: usize, c: usize, block: usize) -> Lane<R> {
        load_lane(&self.data[(t * f + c) * self.kp + block * LANES..])
    }
}

/// `acc[p] += sum over c of xs[p * f + c] * ws[c * kp..][..LANES]`.
#[inline(always)]
fn tile<R: Real>(acc: &mut [Lane<R>; POS], xs: &[R], ws: &[R], f: usize, kp: usize) {
    assert!(xs.len() >= POS * f && ws.len() >= (f - 1) * kp + LANES);
    for c in 0..f {
        // SAFETY: both ranges were checked by the assertion above.
        let wv: Lane<R> = unsafe { *(ws.as_ptr().add(c * kp) as *const Lane<R>) };
        for (p, a) in acc.iter_mut().enumerate() {
            fma_lane(a, unsafe { *xs.get_unchecked(p * f + c) }, &wv);
        }
    }
}

/// `acc[q] += sum over positions p of xs[p * f + q] * gs[p * kp..][..LANES]`.
#[inline(always)]
fn grad_tile<R: Real>(acc: &mut [Lane<R>; FEAT], xs: &[R], gs: &[R], n: usize, f: usize, kp: usize) {
    assert!(n > 0 && xs.len() >= (n - 1) * f + FEAT && gs.len() >= (n - 1) * kp + LANES);
    for p in 0..n {
        // SAFETY: both ranges were checked by the assertion above.
        let gv: Lane<R> = unsafe { *(gs.as_ptr().add(p * kp) as *const Lane<R>) };
        for (q, a) in acc.iter_mut().enumerate() {
            fma_lane(a, unsafe { *xs.get_unchecked(p * f + q) }, &gv);
        }
    }
}

/// Shared by the forward pass and, with flipped weights, the input gradient.
#[inline(always)]
fn correlate<R: Real>(x: &[R], g: &Geometry, pw: &PackedWeights<R>, bias: &[R], out: &mut [R]) {
    let (f, k) = (g.input.features, g.output.features);
    let (kh, kw) = (g.kh, g.kw);
    let (w_in, w_out) = (g.input.width, g.output.width);
    let blocks = pw.kp / LANES;
    let mut bias_p = vec![R::zero(); pw.kp];
    bias_p[..k].copy_from_slice(bias);
    // positions whose full kernel row lies inside the input
    let interior = outputs_for_tap(0, g.pad_left, w_in, w_out).start
        ..outputs_for_tap(kw - 1, g.pad_left, w_in, w_out).end;

    for b in 0..g.output.batch {
        for ho in 0..g.output.height {
            let ti = taps(ho, g.pad_top, kh, g.input.height);
            let row_out = (b * g.output.height + ho) * w_out;
            for block in 0..blocks {
                let bias_l = load_lane(&bias_p[block * LANES..]);
                let store = |out: &mut [R], wo: usize, acc: &Lane<R>| {
                    let o0 = block * LANES;
                    let n = LANES.min(k - o0);
                    let dst = (row_out + wo) * k + o0;
                    out[dst..dst + n].copy_from_slice(&acc[..n]);
                };
                let mut wo = 0;
                while wo < w_out {
                    let full_tile = interior.contains(&wo) && wo + POS <= interior.end;
                    if full_tile {
                        let mut acc = [bias_l; POS];
                        for i in ti.clone() {
                            let xrow = &x[((b * g.input.height + ho + i - g.pad_top) * w_in) * f..];
                            for j in 0..kw {
                                let base = (wo + j - g.pad_left) * f;
                                let ws = &pw.data[(i * kw + j) * f * pw.kp + block * LANES..];
                                tile(&mut acc, &xrow[base..base + POS * f], ws, f, pw.kp);
                            }
                        }
                        for (p, a) in acc.iter().enumerate() {
                            store(out, wo + p, a);
                        }
                        wo += POS;
                    } else {
                        let mut acc = bias_l;
                        for i in ti.clone() {
                            let xrow = &x[((b * g.input.height + ho + i - g.pad_top) * w_in) * f..];
                            for j in taps(wo, g.pad_left, kw, w_in) {
                                let base = (wo + j - g.pad_left) * f;
                                for c in 0..f {
                                    fma_lane(&mut acc, xrow[base + c], &pw.lane(i * kw + j, f, c, block));
                                }
                            }
                        }
                        store(out, wo, &acc);
                        wo += 1;
                    }
                }
            }
        }
    }
}

/// `dW[o, i, j, c] += sum over positions of gy[pos, o] * x[pos + (i, j), c]`,
/// accumulated as `(kh * kw, F, Kp)`.
#[inline(always)]
fn weight_grad<R: Real>(x: &[R], g: &Geometry, gy: &[R], kp: usize) -> Vec<R> {
    let (f, k) = (g.input.features, g.output.features);
    let (kh, kw) = (g.kh, g.kw);
    let (w_in, w_out) = (g.input.width, g.output.width);
    let blocks = kp / LANES;
    let mut acc_w = vec![R::zero(); kh * kw * f * kp];
    // gradient rows with output features padded to whole lanes
    let mut gy_row = vec![R::zero(); w_out * kp];

    for b in 0..g.output.batch {
        for ho in 0..g.output.height {
            let row_out = (b * g.output.height + ho) * w_out;
            for wo in 0..w_out {
                gy_row[wo * kp..wo * kp + k].copy_from_slice(&gy[(row_out + wo) * k..(row_out + wo + 1) * k]);
            }
            for i in taps(ho, g.pad_top, kh, g.input.height) {
                let xrow = &x[((b * g.input.height + ho + i - g.pad_top) * w_in) * f..];
                for j in 0..kw {
                    let span = outputs_for_tap(j, g.pad_left, w_in, w_out);
                    let t = i * kw + j;
                    for block in 0..blocks {
                        let mut c0 = 0;
                        while c0 < f {
                            let n = FEAT.min(f - c0);
                            let mut acc = [[R::zero(); LANES]; FEAT];
                            let xb = |wo: usize| (wo + j - g.pad_left) * f + c0;
                            let gv = |wo: usize| load_lane(&gy_row[wo * kp + block * LANES..]);
                            if n == FEAT {
                                if !span.is_empty() {
                                    let xs = &xrow[xb(span.start)..xb(span.end - 1) + FEAT];
                                    let gs = &gy_row[span.start * kp + block * LANES..(span.end - 1) * kp + (block + 1) * LANES];
                                    grad_tile(&mut acc, xs, gs, span.len(), f, kp);
                                }
                            } else {
                                // too few features for a tile: split positions
                                // over the accumulators instead, one feature each
                                for q in 0..n {
                                    let mut part = [[R::zero(); LANES]; POS];
                                    let mut wo = span.start;
                                    while wo + POS <= span.end {
                                        for (p, a) in part.iter_mut().enumerate() {
                                            fma_lane(a, xrow[xb(wo + p) + q], &gv(wo + p));
                                        }
                                        wo += POS;
                                    }
                                    for wo in wo..span.end {
                                        fma_lane(&mut part[0], xrow[xb(wo) + q], &gv(wo));
                                    }
                                    for p in part {
                                        for l in 0..LANES {
                                            acc[q][l] += p[l];
                                        }
                                    }
                                }
                            }
                            for (q, a) in acc.iter().enumerate().take(n) {
                                let dst = &mut acc_w[(t * f + c0 + q) * kp + block * LANES..];
                                for l in 0..LANES {
                                    dst[l] += a[l];
                                }
                            }
                            c0 += n;
                        }
                    }
                }
            }
        }
    }
    acc_w
}

/// Whether lanes over input features beat padding the output features.
fn lanes_over_inputs(f: usize, k: usize) -> bool {
    f >= LANES && k * f.div_ceil(LANES) < padded(k) / LANES * f
}

/// `acc[p] += xs[p * f..][..full] * ws[..full]` lane-wise.
#[inline(always)]
fn dot_tile<R: Real>(acc: &mut [Lane<R>; POS], xs: &[R], ws: &[R], f: usize, full: usize) {
    assert!(xs.len() >= (POS - 1) * f + full && ws.len() >= full);
    for cb in (0..full).step_by(LANES) {
        // SAFETY: every access stays below the lengths asserted above.
        let wv: Lane<R> = unsafe { *(ws.as_ptr().add(cb) as *const Lane<R>) };
        for (p, a) in acc.iter_mut().enumerate() {
            let xv: Lane<R> = unsafe { *(xs.as_ptr().add(p * f + cb) as *const Lane<R>) };
            for l in 0..LANES {
                a[l] += xv[l] * wv[l];
            }
        }
    }
}

/// Lanes over input features, one output feature at a time; for layers
/// with one or two outputs this avoids mostly-empty output lanes.
#[inline(always)]
fn correlate_dot<R: Real>(x: &[R], g: &Geometry, w: &[R], bias: &[R], out: &mut [R]) {
    let (f, k) = (g.input.features, g.output.features);
    let (kh, kw) = (g.kh, g.kw);
    let (w_in, w_out) = (g.input.width, g.output.width);
    let full = f / LANES * LANES;
    let interior = outputs_for_tap(0, g.pad_left, w_in, w_out).start
        ..outputs_for_tap(kw - 1, g.pad_left, w_in, w_out).end;
    let rest = |xs: &[R], ws: &[R]| xs[full..f].iter().zip(&ws[full..f]).fold(R::zero(), |a, (p, q)| a + *p * *q);
    let hsum = |v: &Lane<R>| v.iter().fold(R::zero(), |a, b| a + *b);

    for b in 0..g.output.batch {
        for ho in 0..g.output.height {
            let ti = taps(ho, g.pad_top, kh, g.input.height);
            let row_out = (b * g.output.height + ho) * w_out;
            for o in 0..k {
                let wk = &w[o * kh * kw * f..(o + 1) * kh * kw * f];
                let mut wo = 0;
                while wo < w_out {
                    if interior.contains(&wo) && wo + POS <= interior.end {
                        let mut acc = [[R::zero(); LANES]; POS];
                        let mut tail = [R::zero(); POS];
                        for i in ti.clone() {
                            let xrow = &x[((b * g.input.height + ho + i - g.pad_top) * w_in) * f..];
                            for j in 0..kw {
                                let base = (wo + j - g.pad_left) * f;
                                let ws = &wk[(i * kw + j) * f..(i * kw + j + 1) * f];
                                dot_tile(&mut acc, &xrow[base..base + POS * f], ws, f, full);
                                if full < f {
                                    for (p, t) in tail.iter_mut().enumerate() {
                                        *t += rest(&xrow[base + p * f..], ws);
                                    }
                                }
                            }
                        }
                        for p in 0..POS {
                            out[(row_out + wo + p) * k + o] = bias[o] + hsum(&acc[p]) + tail[p];
                        }
                        wo += POS;
                    } else {
                        let mut acc = bias[o];
                        for i in ti.clone() {
                            let xrow = &x[((b * g.input.height + ho + i - g.pad_top) * w_in) * f..];
                            for j in taps(wo, g.pad_left, kw, w_in) {
                                let xs = &xrow[(wo + j - g.pad_left) * f..][..f];
                                let ws = &wk[(i * kw + j) * f..(i * kw + j + 1) * f];
                                acc += xs.iter().zip(ws).fold(R::zero(), |a, (p, q)| a + *p * *q);
                            }
                        }
                        out[(row_out + wo) * k + o] = acc;
                        wo += 1;
                    }
                }
            }
        }
    }
}

/// Weight gradient with lanes over input features, written straight into
/// `gw` laid out `(K, kh, kw, F)`.
#[inline(always)]
fn weight_grad_dot<R: Real>(x: &[R], g: &Geometry, gy: &[R], gw: &mut [R]) {
    let (f, k) = (g.input.features, g.output.features);
    let (kh, kw) = (g.kh, g.kw);
    let (w_in, w_out) = (g.input.width, g.output.width);
    let full = f / LANES * LANES;
    for b in 0..g.output.batch {
        for ho in 0..g.output.height {
            let row_out = (b * g.output.height + ho) * w_out;
            for i in taps(ho, g.pad_top, kh, g.input.height) {
                let xrow = &x[((b * g.input.height + ho + i - g.pad_top) * w_in) * f..];
                for j in 0..kw {
                    let span = outputs_for_tap(j, g.pad_left, w_in, w_out);
                    for o in 0..k {
                        let dst = &mut gw[((o * kh + i) * kw + j) * f..][..f];
                        for cb in (0..full).step_by(LANES) {
                            let mut part = [[R::zero(); LANES]; POS];
                            let mut wo = span.start;
                            while wo + POS <= span.end {
                                for (p, a) in part.iter_mut().enumerate() {
                                    let xv = load_lane(&xrow[(wo + p + j - g.pad_left) * f + cb..]);
                                    let gv = gy[(row_out + wo + p) * k + o];
                                    for l in 0..LANES {
                                        a[l] += gv * xv[l];
                                    }
                                }
                                wo += POS;
                            }
                            for wo in wo..span.end {
                                let xv = load_lane(&xrow[(wo + j - g.pad_left) * f + cb..]);
                                fma_lane(&mut part[0], gy[(row_out + wo) * k + o], &xv);
                            }
                            for a in part {
                                for l in 0..LANES {
                                    dst[cb + l] += a[l];
                                }
                            }
                        }
                        for c in full..f {
                            for wo in span.clone() {
                                dst[c] += gy[(row_out + wo) * k + o] * xrow[(wo + j - g.pad_left) * f + c];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `w` is `(K, kh, kw, F)`.
#[inline(always)]
fn conv_any<R: Real>(x: &[R], g: &Geometry, w: &[R], bias: &[R], out: &mut [R]) {
    let (f, k) = (g.input.features, g.output.features);
    if lanes_over_inputs(f, k) {
        correlate_dot(x, g, w, bias, out);
    } else {
        let pw = PackedWeights::pack(w, k, g.kh * g.kw, f);
        correlate(x, g, &pw, bias, out);
    }
}

#[inline(always)]
fn forward_impl<R: Real>(x: &[R], g: &Geometry, w: &[R], bias: &[R], out: &mut [R]) {
    conv_any(x, g, w, bias, out);
}

/// Geometry of the input-gradient pass: a correlation of the output
/// gradient with the flipped kernel, producing input-shaped results.
fn transposed_geometry(g: &Geometry) -> Geometry {
    Geometry {
        input: g.output,
        output: g.input,
        kh: g.kh,
        kw: g.kw,
        pad_top: g.kh - 1 - g.pad_top,
        pad_left: g.kw - 1 - g.pad_left,
    }
}

#[inline(always)]
fn backward_impl<R: Real>(x: &[R], g: &Geometry, w: &[R], gy: &[R], gx: &mut [R], gw: &mut [R]) {
    let (f, k) = (g.input.features, g.output.features);
    let n_taps = g.kh * g.kw;

    // (F, kh, kw, K) view of the kernel, flipped in both spatial axes
    let mut wt = vec![R::zero(); w.len()];
    for o in 0..k {
        for t in 0..n_taps {
            for c in 0..f {
                wt[(c * n_taps + n_taps - 1 - t) * k + o] = w[(o * n_taps + t) * f + c];
            }
        }
    }
    conv_any(gy, &transposed_geometry(g), &wt, &vec![R::zero(); f], gx);

    if lanes_over_inputs(f, k) {
        weight_grad_dot(x, g, gy, gw);
        return;
    }
    let kp = padded(k);
    let acc_w = weight_grad(x, g, gy, kp);
    for o in 0..k {
        for t in 0..n_taps {
            for c in 0..f {
                gw[(o * n_taps + t) * f + c] += acc_w[(t * f + c) * kp + o];
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn forward_avx2<R: Real>(x: &[R], g: &Geometry, w: &[R], bias: &[R], out: &mut [R]) {
    forward_impl(x, g, w, bias, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn backward_avx2<R: Real>(x: &[R], g: &Geometry, w: &[R], gy: &[R], gx: &mut [R], gw: &mut [R]) {
    backward_impl(x, g, w, gy, gx, gw)
}

/// Overwrites `out` (output dims) with bias plus the convolution.
pub(crate) fn forward<R: Real>(x: &[R], g: &Geometry, w: &[R], bias: &[R], out: &mut [R]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        return unsafe { forward_avx2(x, g, w, bias, out) };
    }
    forward_impl(x, g, w, bias, out)
}

/// Overwrites `gx` with the input gradient and adds the weight gradient to `gw`.
pub(crate) fn backward<R: Real>(x: &[R], g: &Geometry, w: &[R], gy: &[R], gx: &mut [R], gw: &mut [R]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        return unsafe { backward_avx2(x, g, w, gy, gx, gw) };
    }
    backward_impl(x, g, w, gy, gx, gw)
}
