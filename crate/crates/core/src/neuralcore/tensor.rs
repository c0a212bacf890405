use std::fmt;

use super::Real;
use crate::error::{Error, Result};

/// Axis sizes of a [`Tensor4`]: batch, height, width, feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims4 {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub features: usize,
}

impl Dims4 {
    pub const fn new(batch: usize, height: usize, width: usize, features: usize) -> Self {
        Dims4 {
            batch,
            height,
            width,
            features,
        }
    }

    pub const fn len(&self) -> usize {
        self.batch * self.height * self.width * self.features
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn as_array(&self) -> [usize; 4] {
        [self.batch, self.height, self.width, self.features]
    }
}

impl From<(usize, usize, usize, usize)> for Dims4 {
    fn from((b, h, w, f): (usize, usize, usize, usize)) -> Self {
        Dims4::new(b, h, w, f)
    }
}

impl fmt::Display for Dims4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.batch, self.height, self.width, self.features)
    }
}

/// Dense 4-axis array, row-major over (batch, height, width, feature).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<R> {
    dims: Dims4,
    data: Vec<R>,
}

impl<R: Real> Tensor4<R> {
    pub fn zeros(dims: impl Into<Dims4>) -> Self {
        let dims = dims.into();
        Tensor4 {
            dims,
            data: vec![R::zero(); dims.len()],
        }
    }

    pub fn filled(dims: impl Into<Dims4>, value: R) -> Self {
        let dims = dims.into();
        Tensor4 {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: impl Into<Dims4>, data: Vec<R>) -> Result<Self> {
        let dims = dims.into();
        if data.len() != dims.len() {
            return Err(Error::shape(
                "Tensor4::from_vec",
                format!("{} elements for {dims}", dims.len()),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn from_fn(dims: impl Into<Dims4>, mut f: impl FnMut([usize; 4]) -> R) -> Self {
        let dims = dims.into();
        let mut data = Vec::with_capacity(dims.len());
        for b in 0..dims.batch {
            for h in 0..dims.height {
                for w in 0..dims.width {
                    for c in 0..dims.features {
                        data.push(f([b, h, w, c]));
                    }
                }
            }
        }
        Tensor4 { dims, data }
    }

    pub fn dims(&self) -> Dims4 {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[R] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<R> {
        self.data
    }

    #[inline]
    pub fn offset(&self, [b, h, w, f]: [usize; 4]) -> usize {
        debug_assert!(b < self.dims.batch && h < self.dims.height && w < self.dims.width && f < self.dims.features);
        ((b * self.dims.height + h) * self.dims.width + w) * self.dims.features + f
    }

    #[inline]
    pub fn get(&self, idx: [usize; 4]) -> R {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], value: R) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    /// Contiguous (width x features) slab at `(b, h)`.
    pub fn row(&self, b: usize, h: usize) -> &[R] {
        let n = self.dims.width * self.dims.features;
        let start = (b * self.dims.height + h) * n;
        &self.data[start..start + n]
    }

    pub fn row_mut(&mut self, b: usize, h: usize) -> &mut [R] {
        let n = self.dims.width * self.dims.features;
        let start = (b * self.dims.height + h) * n;
        &mut self.data[start..start + n]
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(R, R) -> R) -> Result<Self> {
        self.expect_dims(other.dims, "Tensor4::zip_map")?;
        Ok(Tensor4 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<S: Real>(&self) -> Tensor4<S> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| S::from_f64_lossy(v.as_f64())).collect(),
        }
    }

    pub(crate) fn expect_dims(&self, dims: Dims4, context: &'static str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::shape(context, dims, self.dims));
        }
        Ok(())
    }
}

/// Swap the height and feature axes of a tensor whose height is 1:
/// `(B, 1, T, C) -> (B, C, T, 1)`.
pub fn permute_hc<R: Real>(input: &Tensor4<R>) -> Result<Tensor4<R>> {
    let d = input.dims();
    if d.height != 1 {
        return Err(Error::shape("permute_hc", "(B, 1, W, F)", d));
    }
    let out_dims = Dims4::new(d.batch, d.features, d.width, 1);
    let mut out = Tensor4::zeros(out_dims);
    let src = input.as_slice();
    let dst = out.as_mut_slice();
    for b in 0..d.batch {
        let base = b * d.width * d.features;
        for t in 0..d.width {
            for c in 0..d.features {
                dst[base + c * d.width + t] = src[base + t * d.features + c];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`permute_hc`]: `(B, C, T, 1) -> (B, 1, T, C)`.
pub fn permute_ch<R: Real>(input: &Tensor4<R>) -> Result<Tensor4<R>> {
    let d = input.dims();
    if d.features != 1 {
        return Err(Error::shape("permute_ch", "(B, H, W, 1)", d));
    }
    let out_dims = Dims4::new(d.batch, 1, d.width, d.height);
    let mut out = Tensor4::zeros(out_dims);
    let src = input.as_slice();
    let dst = out.as_mut_slice();
    for b in 0..d.batch {
        let base = b * d.width * d.height;
        for c in 0..d.height {
            for t in 0..d.width {
                dst[base + t * d.height + c] = src[base + c * d.width + t];
            }
        }
    }
    Ok(out)
}
