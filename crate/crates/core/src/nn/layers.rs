//! Forward and backward kernels for the six layer kinds.
//!
//! Convolution is cross-correlation (no kernel flip) lowered to a GEMM over
//! an im2col buffer. Feature maps are `[channels, height, width]`.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Op, Scalar, Tensor};

pub const KERNEL: usize = 3;
pub const POOL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero-pad by one so the output keeps the input's spatial size.
    Same,
    /// No padding; each spatial dim shrinks by two.
    Valid,
}

impl Padding {
    fn amount(self) -> usize {
        match self {
            Padding::Same => 1,
            Padding::Valid => 0,
        }
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_dims(self, h: usize, w: usize) -> Result<(usize, usize)> {
        match self {
            Padding::Same => Ok((h, w)),
            Padding::Valid if h >= KERNEL && w >= KERNEL => Ok((h - KERNEL + 1, w - KERNEL + 1)),
            Padding::Valid => Err(Error::Shape(format!(
                "valid 3x3 convolution needs at least 3x3 input, got {h}x{w}"
            ))),
        }
    }
}

pub(crate) fn dims3<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::Shape(format!("{what} must be [C, H, W], got {s:?}"))),
    }
}

fn check_conv_weights<T: Scalar>(weights: &Tensor<T>, bias: &[T], in_channels: usize) -> Result<usize> {
    let out_channels = match *weights.shape() {
        [co, ci, KERNEL, KERNEL] if ci == in_channels => co,
        [_, ci, KERNEL, KERNEL] => {
            return Err(Error::Shape(format!(
                "convolution weights expect {ci} input channels, input has {in_channels}"
            )))
        }
        ref s => return Err(Error::Shape(format!("convolution weights must be [C_out, C_in, 3, 3], got {s:?}"))),
    };
    if bias.len() != out_channels {
        return Err(Error::Shape(format!(
            "convolution bias has {} entries for {out_channels} filters",
            bias.len()
        )));
    }
    Ok(out_channels)
}

/// Output columns `ox` for which kernel column `kx` reads inside the
/// image, as the range of `ox` and the matching input start column.
fn valid_span(kx: usize, pad: usize, w: usize, ow: usize) -> (usize, usize, usize) {
    let lo = pad.saturating_sub(kx);
    let hi = ow.min((w + pad).saturating_sub(kx));
    (lo, hi.max(lo), lo + kx - pad)
}

/// Unfolds every 3×3 receptive field into a column: the result is a
/// `(C·9) × (H'·W')` row-major matrix.
fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, padding: Padding) -> Result<(Vec<T>, usize, usize)> {
    let (oh, ow) = padding.output_dims(h, w)?;
    let pad = padding.amount();
    let plane = oh * ow;
    let mut col = vec![T::zero(); c * KERNEL * KERNEL * plane];
    for ci in 0..c {
        let src = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ci * KERNEL + ky) * KERNEL + kx;
                let dst = &mut col[row * plane..(row + 1) * plane];
                let (lo, hi, ix0) = valid_span(kx, pad, w, ow);
                for oy in 0..oh {
                    let iy = oy + ky;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let src_row = &src[(iy - pad) * w + ix0..(iy - pad) * w + ix0 + (hi - lo)];
                    dst[oy * ow + lo..oy * ow + hi].copy_from_slice(src_row);
                }
            }
        }
    }
    Ok((col, oh, ow))
}

/// Inverse scatter of [`im2col`]: accumulates columns back into an image.
fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, oh: usize, ow: usize, padding: Padding) -> Vec<T> {
    let pad = padding.amount();
    let plane = oh * ow;
    let mut image = vec![T::zero(); c * h * w];
    for ci in 0..c {
        let dst = &mut image[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ci * KERNEL + ky) * KERNEL + kx;
                let src = &col[row * plane..(row + 1) * plane];
                let (lo, hi, ix0) = valid_span(kx, pad, w, ow);
                for oy in 0..oh {
                    let iy = oy + ky;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let dst_row = &mut dst[(iy - pad) * w + ix0..(iy - pad) * w + ix0 + (hi - lo)];
                    for (d, &v) in dst_row.iter_mut().zip(&src[oy * ow + lo..oy * ow + hi]) {
                        *d += v;
                    }
                }
            }
        }
    }
    image
}

pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    padding: Padding,
) -> Result<Tensor<T>> {
    Ok(conv2d_forward_cols(input, weights, bias, padding)?.0)
}

/// Forward pass that also hands back the unfolded input for reuse in
/// [`conv2d_backward_cols`].
pub(crate) fn conv2d_forward_cols<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    padding: Padding,
) -> Result<(Tensor<T>, Vec<T>)> {
    let (c, h, w) = dims3(input, "convolution input")?;
    let out_channels = check_conv_weights(weights, bias, c)?;
    let (col, oh, ow) = im2col(input.data(), c, h, w, padding)?;
    let plane = oh * ow;
    let mut out = Vec::with_capacity(out_channels * plane);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, plane));
    }
    gemm(out_channels, c * KERNEL * KERNEL, plane, weights.data(), Op::N, &col, Op::N, &mut out, true);
    Ok((Tensor::new(vec![out_channels, oh, ow], out)?, col))
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    /// Gradient w.r.t. the layer input, when requested.
    pub input: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_output: &Tensor<T>,
    padding: Padding,
    want_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let (c, h, w) = dims3(input, "convolution input")?;
    let (col, _, _) = im2col(input.data(), c, h, w, padding)?;
    let mut dw = Tensor::zeros(weights.shape())?;
    let mut db = vec![T::zero(); weights.shape()[0]];
    let dx = conv2d_backward_cols(input.shape(), &col, weights, grad_output, padding, dw.data_mut(), &mut db, want_input_grad)?;
    Ok(ConvGrads { weights: dw, bias: db, input: dx })
}

/// Backward pass from the forward's unfolded input; parameter gradients
/// are added into `dw` and `db`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward_cols<T: Scalar>(
    input_shape: &[usize],
    col: &[T],
    weights: &Tensor<T>,
    grad_output: &Tensor<T>,
    padding: Padding,
    dw: &mut [T],
    db: &mut [T],
    want_input_grad: bool,
) -> Result<Option<Tensor<T>>> {
    let [c, h, w] = *input_shape else {
        return Err(Error::Shape(format!("convolution input must be [C, H, W], got {input_shape:?}")));
    };
    let out_channels = weights.shape()[0];
    let (oh, ow) = padding.output_dims(h, w)?;
    if grad_output.shape() != [out_channels, oh, ow] {
        return Err(Error::Shape(format!(
            "convolution output gradient {:?} does not match [{out_channels}, {oh}, {ow}]",
            grad_output.shape()
        )));
    }
    let k = c * KERNEL * KERNEL;
    let plane = oh * ow;
    if col.len() != k * plane || dw.len() != out_channels * k || db.len() != out_channels {
        return Err(Error::Shape("convolution gradient buffers do not match the layer".into()));
    }
    let g = grad_output.data();

    gemm(out_channels, plane, k, g, Op::N, col, Op::T, dw, true);
    for (d, row) in db.iter_mut().zip(g.chunks_exact(plane)) {
        *d += row.iter().copied().sum::<T>();
    }
    if !want_input_grad {
        return Ok(None);
    }
    let mut dcol = vec![T::zero(); k * plane];
    gemm(k, out_channels, plane, weights.data(), Op::T, g, Op::N, &mut dcol, false);
    Ok(Some(Tensor::new(vec![c, h, w], col2im(&dcol, c, h, w, oh, ow, padding))?))
}

/// 2×2 max pool with stride 2. Odd trailing rows/columns are dropped.
///
/// Returns the pooled map and, per output element, the flat input index of
/// the winning value (first maximum in row-major window order).
pub fn maxpool_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (c, h, w) = dims3(input, "pooling input")?;
    if h < POOL || w < POOL {
        return Err(Error::Shape(format!("2x2 pooling needs at least 2x2 input, got {h}x{w}")));
    }
    let (oh, ow) = (h / POOL, w / POOL);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (ci * h + oy * POOL) * w + ox * POOL;
                for dy in 0..POOL {
                    for dx in 0..POOL {
                        let idx = (ci * h + oy * POOL + dy) * w + ox * POOL + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
}

pub fn maxpool_backward<T: Scalar>(grad_output: &Tensor<T>, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor<T>> {
    if grad_output.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "pooling gradient has {} values for {} recorded windows",
            grad_output.len(),
            argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape)?;
    let g = grad.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_output.data()) {
        g[idx] += v;
    }
    Ok(grad)
}

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through ReLU given the layer's input; zero at and below the kink.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_output.shape() {
        return Err(Error::Shape("relu gradient shape differs from its input".into()));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Channel-major, then row, then column.
pub fn flatten<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    Tensor::new(vec![input.len()], input.data().to_vec()).expect("flattened length matches")
}

/// `out[i] = Σ_j weights[i, j]·input[j] + bias[i]`.
pub fn dense_forward<T: Scalar>(input: &[T], weights: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let (m, n) = match *weights.shape() {
        [m, n] => (m, n),
        ref s => return Err(Error::Shape(format!("dense weights must be [out, in], got {s:?}"))),
    };
    if input.len() != n {
        return Err(Error::Shape(format!("dense layer expects {n} inputs, got {}", input.len())));
    }
    if bias.len() != m {
        return Err(Error::Shape(format!("dense bias has {} entries for {m} units", bias.len())));
    }
    let out = weights
        .data()
        .chunks_exact(n)
        .zip(bias)
        .map(|(row, &b)| row.iter().zip(input).fold(b, |acc, (&w, &x)| acc + w * x))
        .collect();
    Tensor::vector(out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub input: Option<Vec<T>>,
}

pub fn dense_backward<T: Scalar>(
    input: &[T],
    weights: &Tensor<T>,
    grad_output: &[T],
    want_input_grad: bool,
) -> Result<DenseGrads<T>> {
    let mut dw = Tensor::zeros(weights.shape())?;
    let mut db = vec![T::zero(); grad_output.len()];
    let dx = dense_backward_into(input, weights, grad_output, dw.data_mut(), &mut db, want_input_grad)?;
    Ok(DenseGrads { weights: dw, bias: db, input: dx })
}

/// As [`dense_backward`], adding parameter gradients into `dw` and `db`.
pub(crate) fn dense_backward_into<T: Scalar>(
    input: &[T],
    weights: &Tensor<T>,
    grad_output: &[T],
    dw: &mut [T],
    db: &mut [T],
    want_input_grad: bool,
) -> Result<Option<Vec<T>>> {
    let (m, n) = match *weights.shape() {
        [m, n] => (m, n),
        ref s => return Err(Error::Shape(format!("dense weights must be [out, in], got {s:?}"))),
    };
    if input.len() != n || grad_output.len() != m || dw.len() != m * n || db.len() != m {
        return Err(Error::Shape("dense gradient shapes do not match the layer".into()));
    }
    for (row, &g) in dw.chunks_exact_mut(n).zip(grad_output) {
        if g != T::zero() {
            for (d, &x) in row.iter_mut().zip(input) {
                *d += g * x;
            }
        }
    }
    for (d, &g) in db.iter_mut().zip(grad_output) {
        *d += g;
    }
    Ok(want_input_grad.then(|| {
        let mut dx = vec![T::zero(); n];
        for (row, &g) in weights.data().chunks_exact(n).zip(grad_output) {
            for (d, &w) in dx.iter_mut().zip(row) {
                *d += w * g;
            }
        }
        dx
    }))
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::Shape("softmax over an empty vector".into()));
    }
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("softmax input {v:?} is not finite")));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}
