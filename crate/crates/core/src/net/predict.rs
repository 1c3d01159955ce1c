//! Per-pixel inference over whole tiles.
//!
//! Classifying every pixel by its own 55×55 window repeats most of the
//! convolution work, since neighboring windows overlap. Instead each layer is
//! evaluated once at every position of a mirror-padded block, with the
//! strides of earlier layers turned into dilations of later ones. The result
//! for a pixel is the value the window network computes for it: the same
//! products are summed in the same order, only shared between windows.

use image::RgbImage;

use super::{input_lut, NetworkParams, CONV_LAYERS, FEATURE_LEN, POOL_LAYERS};
use crate::dataset::{crop_patch, CONTEXT_RADIUS, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::labels::mirror_index;
use crate::net::train::batch_tensor;
use crate::openset::ProbabilityMap;
use crate::tensor::ops::{affine_rows, conv_map, relu_scalar, window_max, Window};
use crate::tensor::{Scalar, Tensor};

/// Output pixels per side of one dense block.
const BLOCK: usize = 64;

/// Softmax in double precision, rounded to the stored single precision.
fn write_softmax<T: Scalar>(logits: &[T], out: &mut [f32]) {
    let max = logits
        .iter()
        .map(|v| v.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    for (o, e) in out.iter_mut().zip(exps) {
        *o = (e / total) as f32;
    }
}

/// Runs the fully connected stack on `rows` feature vectors and writes their
/// distributions into `out`, `batch` rows at a time.
fn classify_features<T: Scalar>(
    params: &NetworkParams<T>,
    features: &[T],
    batch: usize,
    out: &mut [f32],
) -> Result<()> {
    let c = params.n_classes();
    let fcs = params.fc_layers();
    for (chunk, dst) in features
        .chunks(batch * FEATURE_LEN)
        .zip(out.chunks_mut(batch * c))
    {
        let n = chunk.len() / FEATURE_LEN;
        let mut h = chunk.to_vec();
        for (i, layer) in fcs.iter().enumerate() {
            let [d_in, d_out] = layer.weights.dims2()?;
            let mut next = vec![T::zero(); n * d_out];
            affine_rows(
                &h,
                layer.weights.data(),
                layer.bias.data(),
                &mut next,
                n,
                d_in,
                d_out,
            );
            if i + 1 < fcs.len() {
                for v in &mut next {
                    *v = relu_scalar(*v);
                }
            }
            h = next;
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(
                "non-finite logits during inference".into(),
            ));
        }
        for (logits, probs) in h.chunks_exact(c).zip(dst.chunks_exact_mut(c)) {
            write_softmax(logits, probs);
        }
    }
    Ok(())
}

/// Dense max over `kernel × kernel` taps spaced `dilation` apart.
fn pool_dense<T: Scalar>(
    input: &[T],
    channels: usize,
    h: usize,
    w: usize,
    kernel: usize,
    dilation: usize,
) -> (Vec<T>, usize, usize) {
    let span = (kernel - 1) * dilation;
    let (oh, ow) = (h - span, w - span);
    let mut out = Vec::with_capacity(channels * oh * ow);
    for plane in input.chunks_exact(h * w) {
        for y in 0..oh {
            for x in 0..ow {
                out.push(window_max(plane, w, y, x, kernel, dilation).0);
            }
        }
    }
    (out, oh, ow)
}

/// Convolution features (`FEATURE_LEN` per pixel, pixel-major) for the block
/// of output pixels with top-left `(r0, c0)` and extent `bh × bw`.
fn block_features<T: Scalar>(
    params: &NetworkParams<T>,
    image: &RgbImage,
    lut: &[T; 256],
    (r0, c0): (usize, usize),
    (bh, bw): (usize, usize),
) -> Vec<T> {
    let (img_w, img_h) = (image.width() as usize, image.height() as usize);
    let raw = image.as_raw();
    let (mut h, mut w) = (bh + PATCH_SIZE - 1, bw + PATCH_SIZE - 1);
    let mut x = vec![T::zero(); 3 * h * w];
    for y in 0..h {
        let sy = mirror_index((r0 + y) as isize - CONTEXT_RADIUS as isize, img_h);
        for xx in 0..w {
            let sx = mirror_index((c0 + xx) as isize - CONTEXT_RADIUS as isize, img_w);
            let px = &raw[(sy * img_w + sx) * 3..][..3];
            for c in 0..3 {
                x[(c * h + y) * w + xx] = lut[px[c] as usize];
            }
        }
    }

    let mut dilation = 1;
    for ((layer, conv), pool) in params
        .conv_layers()
        .into_iter()
        .zip(&CONV_LAYERS)
        .zip(&POOL_LAYERS)
    {
        let win = Window {
            channels: conv.in_channels,
            in_h: h,
            in_w: w,
            kernel: conv.kernel,
            stride: 1,
            dilation,
        };
        let (oh, ow) = (win.out_h(), win.out_w());
        let mut y = vec![T::zero(); conv.out_channels * oh * ow];
        conv_map(&x, &win, layer.weights.data(), layer.bias.data(), &mut y);
        for v in &mut y {
            *v = relu_scalar(*v);
        }
        dilation *= conv.stride;
        let (p, ph, pw) = pool_dense(&y, conv.out_channels, oh, ow, pool.kernel, dilation);
        dilation *= pool.stride;
        x = p;
        h = ph;
        w = pw;
    }

    let mut features = Vec::with_capacity(bh * bw * FEATURE_LEN);
    for y in 0..bh {
        for xx in 0..bw {
            features.extend((0..FEATURE_LEN).map(|c| x[(c * h + y) * w + xx]));
        }
    }
    features
}

/// Class distribution of every pixel, each computed from the mirror-padded
/// 55×55 window centered on it. `batch_size` bounds the rows pushed through
/// the fully connected layers at once.
pub fn predict_image<T: Scalar>(
    params: &NetworkParams<T>,
    image: &RgbImage,
    batch_size: usize,
) -> Result<ProbabilityMap> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Shape("cannot predict an empty image".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let c = params.n_classes();
    let lut = input_lut::<T>();
    let mut probs = vec![0f32; h * w * c];
    let mut block_probs = Vec::new();
    for r0 in (0..h).step_by(BLOCK) {
        let bh = BLOCK.min(h - r0);
        for c0 in (0..w).step_by(BLOCK) {
            let bw = BLOCK.min(w - c0);
            let features = block_features(params, image, &lut, (r0, c0), (bh, bw));
            block_probs.resize(bh * bw * c, 0.0);
            classify_features(params, &features, batch_size, &mut block_probs)?;
            for y in 0..bh {
                let dst = &mut probs[((r0 + y) * w + c0) * c..][..bw * c];
                dst.copy_from_slice(&block_probs[y * bw * c..][..bw * c]);
            }
        }
    }
    ProbabilityMap::new(h, w, c, probs)
}

/// Reference path: crops every window and runs the network on batches of
/// them. Same output as [`predict_image`], much slower.
pub fn predict_patches<T: Scalar>(
    params: &NetworkParams<T>,
    image: &RgbImage,
    batch_size: usize,
) -> Result<ProbabilityMap> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Shape("cannot predict an empty image".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let c = params.n_classes();
    let lut = input_lut::<T>();
    let centers: Vec<(usize, usize)> = (0..h).flat_map(|y| (0..w).map(move |x| (y, x))).collect();
    let mut probs = vec![0f32; h * w * c];
    for (chunk, dst) in centers
        .chunks(batch_size)
        .zip(probs.chunks_mut(batch_size * c))
    {
        let crops: Vec<Vec<u8>> = chunk
            .iter()
            .map(|&(y, x)| crop_patch(image, y, x))
            .collect();
        let refs: Vec<&[u8]> = crops.iter().map(Vec::as_slice).collect();
        let logits: Tensor<T> = super::forward(params, &batch_tensor(&refs, &lut))?;
        for (l, p) in logits.data().chunks_exact(c).zip(dst.chunks_exact_mut(c)) {
            write_softmax(l, p);
        }
    }
    ProbabilityMap::new(h, w, c, probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_network;

    fn noisy(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let v = (x * 37 + y * 91 + x * y * 13) % 256;
            image::Rgb([v as u8, (v * 3 % 256) as u8, (255 - v) as u8])
        })
    }

    #[test]
    fn dense_equals_patchwise() {
        let p = init_network::<f32>(3, 4).unwrap();
        let img = noisy(7, 5);
        let dense = predict_image(&p, &img, 16).unwrap();
        let patches = predict_patches(&p, &img, 16).unwrap();
        assert_eq!(dense, patches);
    }

    #[test]
    fn single_pixel_tile() {
        let p = init_network::<f32>(2, 0).unwrap();
        let img = noisy(1, 1);
        let m = predict_image(&p, &img, 1).unwrap();
        assert_eq!((m.height(), m.width(), m.classes()), (1, 1, 2));
        assert_eq!(m, predict_patches(&p, &img, 1).unwrap());
    }

    #[test]
    fn constant_tile_is_uniform() {
        let p = init_network::<f32>(4, 2).unwrap();
        let img = RgbImage::from_pixel(6, 4, image::Rgb([10, 200, 90]));
        let m = predict_image(&p, &img, 5).unwrap();
        let first = m.pixel(0, 0).to_vec();
        assert!(m.pixels().all(|px| px == first.as_slice()));
        for px in m.pixels() {
            let s: f64 = px.iter().map(|&v| v as f64).sum();
            assert!((s - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn batch_size_does_not_matter() {
        let p = init_network::<f32>(3, 1).unwrap();
        let img = noisy(5, 3);
        assert_eq!(
            predict_image(&p, &img, 1).unwrap(),
            predict_image(&p, &img, 1000).unwrap()
        );
        assert!(predict_image(&p, &img, 0).is_err());
    }
}
