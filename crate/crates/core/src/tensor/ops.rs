//! Forward and backward passes for the layers of the patch network.

use super::gemm::{matmul, transpose};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Gradients of a parameterised layer with respect to its input, weights and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Valid (unpadded) sliding-window geometry over a single C×H×W map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Window {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl Window {
    pub fn span(&self) -> usize {
        (self.kernel - 1) * self.dilation + 1
    }

    pub fn out_h(&self) -> usize {
        (self.in_h - self.span()) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - self.span()) / self.stride + 1
    }

    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Length of one unrolled receptive field, ordered (channel, ky, kx).
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.kernel == 0 {
            return Err(Error::InvalidArgument(format!(
                "{what}: kernel size must be positive"
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "{what}: stride must be positive"
            )));
        }
        if self.in_h < self.span() || self.in_w < self.span() {
            return Err(Error::Shape(format!(
                "{what}: {}×{} input smaller than {}×{} window",
                self.in_h,
                self.in_w,
                self.span(),
                self.span()
            )));
        }
        Ok(())
    }
}

/// Unrolls receptive fields of `input` (C×H×W) into columns `offset..offset+positions`
/// of `cols`, a row-major matrix with `patch_len` rows and `stride_cols` columns.
pub(crate) fn im2col<T: Scalar>(
    input: &[T],
    g: &Window,
    cols: &mut [T],
    stride_cols: usize,
    offset: usize,
) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = g.in_h * g.in_w;
    for c in 0..g.channels {
        let src = &input[c * plane..(c + 1) * plane];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * stride_cols + offset..][..oh * ow];
                for oy in 0..oh {
                    let src_row =
                        &src[(oy * g.stride + ky * g.dilation) * g.in_w + kx * g.dilation..];
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if g.stride == 1 {
                        dst_row.copy_from_slice(&src_row[..ow]);
                    } else {
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            *d = src_row[ox * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into a C×H×W gradient.
fn col2im<T: Scalar>(cols: &[T], g: &Window, stride_cols: usize, offset: usize, out: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = g.in_h * g.in_w;
    for c in 0..g.channels {
        let dst = &mut out[c * plane..(c + 1) * plane];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * stride_cols + offset..][..oh * ow];
                for oy in 0..oh {
                    let base = (oy * g.stride + ky * g.dilation) * g.in_w + kx * g.dilation;
                    for ox in 0..ow {
                        dst[base + ox * g.stride] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

/// Convolution of one C×H×W map into an OC×OH×OW map (`out`), bias added after
/// the full reduction.
pub(crate) fn conv_map<T: Scalar>(
    input: &[T],
    g: &Window,
    weights: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let p = g.positions();
    let k = g.patch_len();
    let mut cols = vec![T::zero(); k * p];
    im2col(input, g, &mut cols, p, 0);
    matmul(weights, &cols, out, bias.len(), k, p);
    for (row, &b) in out.chunks_exact_mut(p).zip(bias) {
        for v in row {
            *v += b;
        }
    }
}

struct ConvShapes {
    n: usize,
    out_c: usize,
    win: Window,
}

fn conv_shapes<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
) -> Result<ConvShapes> {
    let [n, c, h, w] = input.dims4()?;
    let [oc, ic, kh, kw] = weights.dims4()?;
    if ic != c {
        return Err(Error::Shape(format!(
            "conv2d: input has {c} channels, weights expect {ic}"
        )));
    }
    if kh != kw {
        return Err(Error::Shape(format!(
            "conv2d: kernel must be square, got {kh}×{kw}"
        )));
    }
    let win = Window {
        channels: c,
        in_h: h,
        in_w: w,
        kernel: kh,
        stride,
        dilation: 1,
    };
    win.check("conv2d")?;
    Ok(ConvShapes { n, out_c: oc, win })
}

fn batch_cols<T: Scalar>(input: &Tensor<T>, s: &ConvShapes) -> Vec<T> {
    let p = s.win.positions();
    let total = s.n * p;
    let plane = s.win.channels * s.win.in_h * s.win.in_w;
    let mut cols = vec![T::zero(); s.win.patch_len() * total];
    for (i, sample) in input.data().chunks_exact(plane).enumerate() {
        im2col(sample, &s.win, &mut cols, total, i * p);
    }
    cols
}

/// Valid 2-D convolution of an N×C×H×W batch with OC×C×K×K weights.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let s = conv_shapes(input, weights, stride)?;
    if bias.dims1()? != s.out_c {
        return Err(Error::Shape(format!(
            "conv2d: bias has {} entries for {} output channels",
            bias.len(),
            s.out_c
        )));
    }
    let p = s.win.positions();
    let total = s.n * p;
    let k = s.win.patch_len();
    let cols = batch_cols(input, &s);
    let mut prod = vec![T::zero(); s.out_c * total];
    matmul(weights.data(), &cols, &mut prod, s.out_c, k, total);

    let mut out = vec![T::zero(); s.n * s.out_c * p];
    for oc in 0..s.out_c {
        let b = bias.data()[oc];
        for i in 0..s.n {
            let src = &prod[oc * total + i * p..][..p];
            let dst = &mut out[(i * s.out_c + oc) * p..][..p];
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = v + b;
            }
        }
    }
    let out = Tensor::from_parts(vec![s.n, s.out_c, s.win.out_h(), s.win.out_w()], out);
    out.ensure_finite("conv2d output")?;
    Ok(out)
}

/// Gradients of [`conv2d`] given the gradient of a scalar loss with respect to its output.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    upstream: &Tensor<T>,
) -> Result<LayerGrads<T>> {
    let (dinput, weights, bias) = conv2d_grads(input, weights, stride, upstream, true)?;
    Ok(LayerGrads {
        input: dinput.expect("input gradient requested"),
        weights,
        bias,
    })
}

/// Weight and bias gradients of [`conv2d`] only, for a first layer whose
/// input needs no gradient.
pub fn conv2d_backward_params<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (_, weights, bias) = conv2d_grads(input, weights, stride, upstream, false)?;
    Ok((weights, bias))
}

type ConvGrads<T> = (Option<Tensor<T>>, Tensor<T>, Tensor<T>);

fn conv2d_grads<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    upstream: &Tensor<T>,
    with_input: bool,
) -> Result<ConvGrads<T>> {
    let s = conv_shapes(input, weights, stride)?;
    let expected = [s.n, s.out_c, s.win.out_h(), s.win.out_w()];
    if upstream.shape() != expected {
        return Err(Error::Shape(format!(
            "conv2d_backward: upstream {:?}, expected {expected:?}",
            upstream.shape()
        )));
    }
    let p = s.win.positions();
    let total = s.n * p;
    let k = s.win.patch_len();

    // OC × (N·P) view of the upstream gradient.
    let mut dout = vec![T::zero(); s.out_c * total];
    let mut dbias = vec![T::zero(); s.out_c];
    for i in 0..s.n {
        for oc in 0..s.out_c {
            let src = &upstream.data()[(i * s.out_c + oc) * p..][..p];
            dout[oc * total + i * p..][..p].copy_from_slice(src);
            for &v in src {
                dbias[oc] += v;
            }
        }
    }

    let cols = batch_cols(input, &s);
    let cols_t = transpose(&cols, k, total);
    let mut dw = vec![T::zero(); s.out_c * k];
    matmul(&dout, &cols_t, &mut dw, s.out_c, total, k);

    let dinput = with_input.then(|| {
        let w_t = transpose(weights.data(), s.out_c, k);
        let mut dcols = vec![T::zero(); k * total];
        matmul(&w_t, &dout, &mut dcols, k, s.out_c, total);
        let plane = s.win.channels * s.win.in_h * s.win.in_w;
        let mut dinput = vec![T::zero(); input.len()];
        for (i, dst) in dinput.chunks_exact_mut(plane).enumerate() {
            col2im(&dcols, &s.win, total, i * p, dst);
        }
        Tensor::from_parts(input.shape().to_vec(), dinput)
    });

    Ok((
        dinput,
        Tensor::from_parts(weights.shape().to_vec(), dw),
        Tensor::from_parts(vec![s.out_c], dbias),
    ))
}

/// Max-pooling output together with the flat input index that won each window.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxPool<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Window maximum over a single H×W plane, ties resolved to the first
/// position in row-major order. Returns `(value, index within plane)`.
#[inline]
pub(crate) fn window_max<T: Scalar>(
    plane: &[T],
    width: usize,
    y0: usize,
    x0: usize,
    kernel: usize,
    dilation: usize,
) -> (T, usize) {
    let mut best_i = y0 * width + x0;
    let mut best = plane[best_i];
    for ky in 0..kernel {
        for kx in 0..kernel {
            let i = (y0 + ky * dilation) * width + x0 + kx * dilation;
            if plane[i] > best {
                best = plane[i];
                best_i = i;
            }
        }
    }
    (best, best_i)
}

pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, kernel: usize, stride: usize) -> Result<MaxPool<T>> {
    let [n, c, h, w] = input.dims4()?;
    let win = Window {
        channels: c,
        in_h: h,
        in_w: w,
        kernel,
        stride,
        dilation: 1,
    };
    win.check("maxpool2d")?;
    let (oh, ow) = (win.out_h(), win.out_w());
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for (pi, plane) in input.data().chunks_exact(h * w).enumerate() {
        for oy in 0..oh {
            for ox in 0..ow {
                let (v, i) = window_max(plane, w, oy * stride, ox * stride, kernel, 1);
                out.push(v);
                argmax.push(pi * h * w + i);
            }
        }
    }
    Ok(MaxPool {
        output: Tensor::from_parts(vec![n, c, oh, ow], out),
        argmax,
    })
}

/// Routes each upstream gradient to the input position that won its window.
pub fn maxpool2d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != upstream.len() {
        return Err(Error::Shape(format!(
            "maxpool2d_backward: {} argmax entries for {} upstream values",
            argmax.len(),
            upstream.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    let len = grad.len();
    for (&i, &g) in argmax.iter().zip(upstream.data()) {
        if i >= len {
            return Err(Error::Shape(format!(
                "maxpool2d_backward: argmax {i} out of range"
            )));
        }
        grad.data_mut()[i] += g;
    }
    Ok(grad)
}

#[inline]
pub(crate) fn relu_scalar<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(relu_scalar)
}

/// Passes `upstream` where `input > 0`; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != upstream.shape() {
        return Err(Error::Shape(format!(
            "relu_backward: input {:?} vs upstream {:?}",
            input.shape(),
            upstream.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Ok(Tensor::from_parts(input.shape().to_vec(), data))
}

fn fc_shapes<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let [n, d_in] = input.dims2()?;
    let [w_in, d_out] = weights.dims2()?;
    if d_in != w_in {
        return Err(Error::Shape(format!(
            "fully_connected: input width {d_in}, weights expect {w_in}"
        )));
    }
    Ok((n, d_in, d_out))
}

/// Affine map `input · weights + bias` for an N×In batch and In×Out weights.
pub fn fully_connected<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, d_in, d_out) = fc_shapes(input, weights)?;
    if bias.dims1()? != d_out {
        return Err(Error::Shape(format!(
            "fully_connected: bias has {} entries for {d_out} outputs",
            bias.len()
        )));
    }
    let mut out = vec![T::zero(); n * d_out];
    affine_rows(
        input.data(),
        weights.data(),
        bias.data(),
        &mut out,
        n,
        d_in,
        d_out,
    );
    let out = Tensor::from_parts(vec![n, d_out], out);
    out.ensure_finite("fully_connected output")?;
    Ok(out)
}

pub(crate) fn affine_rows<T: Scalar>(
    input: &[T],
    weights: &[T],
    bias: &[T],
    out: &mut [T],
    n: usize,
    d_in: usize,
    d_out: usize,
) {
    matmul(input, weights, out, n, d_in, d_out);
    for row in out.chunks_exact_mut(d_out) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

pub fn fully_connected_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<LayerGrads<T>> {
    let (n, d_in, d_out) = fc_shapes(input, weights)?;
    if upstream.shape() != [n, d_out] {
        return Err(Error::Shape(format!(
            "fully_connected_backward: upstream {:?}, expected [{n}, {d_out}]",
            upstream.shape()
        )));
    }
    let x_t = transpose(input.data(), n, d_in);
    let mut dw = vec![T::zero(); d_in * d_out];
    matmul(&x_t, upstream.data(), &mut dw, d_in, n, d_out);

    let w_t = transpose(weights.data(), d_in, d_out);
    let mut dx = vec![T::zero(); n * d_in];
    matmul(upstream.data(), &w_t, &mut dx, n, d_out, d_in);

    let mut db = vec![T::zero(); d_out];
    for row in upstream.data().chunks_exact(d_out) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok(LayerGrads {
        input: Tensor::from_parts(vec![n, d_in], dx),
        weights: Tensor::from_parts(vec![d_in, d_out], dw),
        bias: Tensor::from_parts(vec![d_out], db),
    })
}

/// Numerically stable softmax of one row, written into `out`.
pub(crate) fn softmax_into<T: Scalar>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

/// Row-wise softmax of an N×C matrix.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, c] = logits.dims2()?;
    let mut out = vec![T::zero(); logits.len()];
    for (row, dst) in logits.data().chunks_exact(c).zip(out.chunks_exact_mut(c)) {
        softmax_into(row, dst);
    }
    let out = Tensor::from_parts(logits.shape().to_vec(), out);
    out.ensure_finite("softmax")?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxCrossEntropy<T> {
    /// Mean negative log-likelihood over the batch.
    pub loss: T,
    pub probs: Tensor<T>,
    /// Gradient of `loss` with respect to the logits.
    pub grad_logits: Tensor<T>,
}

pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<SoftmaxCrossEntropy<T>> {
    let [n, c] = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "softmax_cross_entropy: {} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "softmax_cross_entropy: label {bad} outside [0, {c})"
        )));
    }
    logits.ensure_finite("logits")?;
    let scale = T::one() / T::lit(n as f64);
    let mut probs = vec![T::zero(); n * c];
    let mut grad = vec![T::zero(); n * c];
    let mut loss = T::zero();
    for (i, &label) in labels.iter().enumerate() {
        let z = &logits.data()[i * c..(i + 1) * c];
        softmax_into(z, &mut probs[i * c..(i + 1) * c]);
        // log-sum-exp form keeps the loss finite when the target probability underflows
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - z[label];
        for j in 0..c {
            let target = if j == label { T::one() } else { T::zero() };
            grad[i * c + j] = (probs[i * c + j] - target) * scale;
        }
    }
    Ok(SoftmaxCrossEntropy {
        loss: loss * scale,
        probs: Tensor::from_parts(vec![n, c], probs),
        grad_logits: Tensor::from_parts(vec![n, c], grad),
    })
}
