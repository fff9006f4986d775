//! Dense tensor and matrix types plus the convolution lowering.
//!
//! `Tensor3` stores feature maps channel-major then row-major; `Matrix` is a
//! plain row-major 2-D buffer. [`im2col`] flattens convolution receptive
//! fields into matrix columns so a CONV layer becomes one matrix product.
//! [`matmul_reference`] and [`conv_reference`] are the straightforward loop
//! implementations used as oracles for the tiled execution path.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense 3-D feature map: `channels × height × width`, channel-major then
/// row-major. All dimensions are at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<S> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<S>,
}

impl<S: Scalar> Tensor3<S> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        assert!(
            channels >= 1 && height >= 1 && width >= 1,
            "tensor dimensions must be >= 1, got {channels}x{height}x{width}"
        );
        Tensor3 {
            channels,
            height,
            width,
            data: vec![S::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<S>) -> Result<Self> {
        if channels < 1 || height < 1 || width < 1 {
            return Err(Error::shape(format!(
                "tensor dimensions must be >= 1, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "tensor data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Tensor3 {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // dimensions are >= 1 by construction
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> S {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: S) {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Consumes the tensor and returns the flat channel-major buffer.
    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    /// Applies `f` to every element in place.
    pub fn map_inplace(&mut self, f: impl Fn(S) -> S) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }
}

/// Convolution hyper-parameters for one CONV layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvParams {
    /// Output spatial dimensions for an input of `height × width`.
    ///
    /// Requires `(dim + 2*pad - kernel)` to be nonnegative and divisible by
    /// the stride, so `(dim + 2p - k)/s + 1` is a positive integer.
    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        if self.filters < 1 {
            return Err(Error::shape("conv filters must be >= 1".to_string()));
        }
        if self.kernel < 1 {
            return Err(Error::shape("conv kernel must be >= 1".to_string()));
        }
        if self.stride < 1 {
            return Err(Error::shape("conv stride must be >= 1".to_string()));
        }
        let out = |dim: usize, name: &str| -> Result<usize> {
            let span = dim + 2 * self.pad;
            if span < self.kernel {
                return Err(Error::shape(format!(
                    "conv kernel {} exceeds padded {name} {span}",
                    self.kernel
                )));
            }
            if !(span - self.kernel).is_multiple_of(self.stride) {
                return Err(Error::shape(format!(
                    "conv output {name} ({span} - {})/{} + 1 is not an integer",
                    self.kernel, self.stride
                )));
            }
            Ok((span - self.kernel) / self.stride + 1)
        };
        Ok((out(height, "height")?, out(width, "width")?))
    }

    /// Number of rows of the flattened patch matrix: `channels * kernel^2`.
    pub fn patch_rows(&self, channels: usize) -> usize {
        channels * self.kernel * self.kernel
    }
}

/// Flattens convolution receptive fields into matrix columns.
///
/// Returns a `(C*k*k) × (H_out*W_out)` matrix: column `oy*W_out + ox` holds
/// the receptive field of output position `(oy, ox)`, ordered channel-major
/// then kernel-row-major. Padded positions contribute zero.
pub fn im2col<S: Scalar>(input: &Tensor3<S>, p: &ConvParams) -> Result<Matrix<S>> {
    let (out_h, out_w) = p.output_dims(input.height(), input.width())?;
    let k = p.kernel;
    let channels = input.channels();
    let mut out = Matrix::zeros(p.patch_rows(channels), out_h * out_w);
    for c in 0..channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                for oy in 0..out_h {
                    let iy = (oy * p.stride + ky) as isize - p.pad as isize;
                    if iy < 0 || iy >= input.height() as isize {
                        continue; // whole row of this kernel offset is padding
                    }
                    for ox in 0..out_w {
                        let ix = (ox * p.stride + kx) as isize - p.pad as isize;
                        if ix < 0 || ix >= input.width() as isize {
                            continue;
                        }
                        out.set(row, oy * out_w + ox, input.get(c, iy as usize, ix as usize));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Naive triple-loop matrix product. Oracle for the tiled execution path.
pub fn matmul_reference<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    if a.cols() != b.rows() {
        return Err(Error::shape(format!(
            "matmul {}x{} * {}x{}: inner dimensions differ",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut c = Matrix::zeros(m, n);
    for i in 0..m {
        let a_row = a.row(i);
        for j in 0..n {
            let mut acc = S::zero();
            for l in 0..k {
                acc += a_row[l] * b.get(l, j);
            }
            c.set(i, j, acc);
        }
    }
    Ok(c)
}

/// Direct sliding-window convolution. Test oracle for im2col + matrix
/// multiplication; also the host compute path for CPU-only runs.
///
/// `weights` is `filters × (C*k*k)` with the same row layout as the columns
/// produced by [`im2col`]; `bias` has one entry per filter.
pub fn conv_reference<S: Scalar>(
    input: &Tensor3<S>,
    weights: &Matrix<S>,
    bias: &[S],
    p: &ConvParams,
) -> Result<Tensor3<S>> {
    let (out_h, out_w) = p.output_dims(input.height(), input.width())?;
    let channels = input.channels();
    if weights.rows() != p.filters || weights.cols() != p.patch_rows(channels) {
        return Err(Error::shape(format!(
            "conv weights {}x{} do not match {} filters x {} patch elements",
            weights.rows(),
            weights.cols(),
            p.filters,
            p.patch_rows(channels)
        )));
    }
    if bias.len() != p.filters {
        return Err(Error::shape(format!(
            "conv bias length {} does not match {} filters",
            bias.len(),
            p.filters
        )));
    }
    let k = p.kernel;
    let mut out = Tensor3::zeros(p.filters, out_h, out_w);
    for f in 0..p.filters {
        let w_row = weights.row(f);
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = S::zero();
                for c in 0..channels {
                    for ky in 0..k {
                        let iy = (oy * p.stride + ky) as isize - p.pad as isize;
                        if iy < 0 || iy >= input.height() as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * p.stride + kx) as isize - p.pad as isize;
                            if ix < 0 || ix >= input.width() as isize {
                                continue;
                            }
                            acc += w_row[(c * k + ky) * k + kx]
                                * input.get(c, iy as usize, ix as usize);
                        }
                    }
                }
                out.set(f, oy, ox, acc + bias[f]);
            }
        }
    }
    Ok(out)
}

/// Reshapes the `filters × (H_out*W_out)` product matrix into the output
/// feature map: row `f` becomes channel `f`, row-major.
pub fn conv_output_from_matrix<S: Scalar>(
    product: &Matrix<S>,
    bias: &[S],
    out_h: usize,
    out_w: usize,
) -> Result<Tensor3<S>> {
    if product.cols() != out_h * out_w {
        return Err(Error::shape(format!(
            "product has {} columns, expected {}x{}",
            product.cols(),
            out_h,
            out_w
        )));
    }
    if bias.len() != product.rows() {
        return Err(Error::shape(format!(
            "bias length {} does not match {} filters",
            bias.len(),
            product.rows()
        )));
    }
    let mut out = Tensor3::zeros(product.rows(), out_h, out_w);
    for f in 0..product.rows() {
        let row = product.row(f);
        for (i, &v) in row.iter().enumerate() {
            out.set(f, i / out_w, i % out_w, v + bias[f]);
        }
    }
    Ok(out)
}
