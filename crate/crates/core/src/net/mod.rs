//! The patch classification network.
//!
//! Three conv → ReLU → max-pool blocks reduce a 3×55×55 context window to a
//! 256-vector, followed by four fully connected layers (ReLU between the
//! hidden ones):
//!
//! | layer | channels | kernel | stride |
//! |-------|----------|--------|--------|
//! | conv1 | 3 → 64    | 4×4 | 2 |
//! | pool1 |           | 2×2 | 2 |
//! | conv2 | 64 → 128  | 4×4 | 1 |
//! | pool2 |           | 2×2 | 2 |
//! | conv3 | 128 → 256 | 2×2 | 2 |
//! | pool3 |           | 2×2 | 1 |
//! | fc1..fc3 | 256 → 1024 → 1024 → 1024 | | |
//! | fc_out | 1024 → classes | | |
//!
//! No padding anywhere: spatial extents run 55 → 26 → 13 → 10 → 5 → 2 → 1.

mod checkpoint;
mod predict;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::{
    checkpoint_precision, decode_checkpoint, encode_checkpoint, load_checkpoint,
    load_checkpoint_for, save_checkpoint,
};
pub use predict::{predict_image, predict_patches};
pub use train::{train, EpochStats, Precision, TrainConfig, TrainReport};

use crate::dataset::PATCH_SIZE;
use crate::error::{Error, Result};
use crate::tensor::{self, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

pub const CONV_LAYERS: [ConvSpec; 3] = [
    ConvSpec {
        in_channels: 3,
        out_channels: 64,
        kernel: 4,
        stride: 2,
    },
    ConvSpec {
        in_channels: 64,
        out_channels: 128,
        kernel: 4,
        stride: 1,
    },
    ConvSpec {
        in_channels: 128,
        out_channels: 256,
        kernel: 2,
        stride: 2,
    },
];

pub const POOL_LAYERS: [PoolSpec; 3] = [
    PoolSpec {
        kernel: 2,
        stride: 2,
    },
    PoolSpec {
        kernel: 2,
        stride: 2,
    },
    PoolSpec {
        kernel: 2,
        stride: 1,
    },
];

/// Length of the flattened convolutional feature fed to the first FC layer.
pub const FEATURE_LEN: usize = 256;
pub const HIDDEN_WIDTH: usize = 1024;

/// Spatial extent after every conv and pool layer for a square input.
pub fn shape_chain(input: usize) -> Result<Vec<usize>> {
    let mut extent = input;
    let mut chain = Vec::with_capacity(6);
    for (conv, pool) in CONV_LAYERS.iter().zip(&POOL_LAYERS) {
        for (k, s) in [(conv.kernel, conv.stride), (pool.kernel, pool.stride)] {
            if extent < k {
                return Err(Error::Shape(format!(
                    "extent {extent} smaller than {k}×{k} window"
                )));
            }
            extent = (extent - k) / s + 1;
            chain.push(extent);
        }
    }
    Ok(chain)
}

/// Maps 8-bit samples to roughly [-1, 1].
pub(crate) fn input_lut<T: Scalar>() -> [T; 256] {
    std::array::from_fn(|v| T::lit((v as f64 - 127.5) / 127.5))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// All learnable tensors of the network for a given class count.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T> {
    n_classes: usize,
    pub conv1: Layer<T>,
    pub conv2: Layer<T>,
    pub conv3: Layer<T>,
    pub fc1: Layer<T>,
    pub fc2: Layer<T>,
    pub fc3: Layer<T>,
    pub fc_out: Layer<T>,
}

pub const LAYER_NAMES: [&str; 7] = ["conv1", "conv2", "conv3", "fc1", "fc2", "fc3", "fc_out"];

/// `(weights, bias)` shapes of every layer, in [`LAYER_NAMES`] order.
pub fn layer_shapes(n_classes: usize) -> [(Vec<usize>, Vec<usize>); 7] {
    let conv = |c: &ConvSpec| {
        (
            vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
            vec![c.out_channels],
        )
    };
    let fc = |i: usize, o: usize| (vec![i, o], vec![o]);
    [
        conv(&CONV_LAYERS[0]),
        conv(&CONV_LAYERS[1]),
        conv(&CONV_LAYERS[2]),
        fc(FEATURE_LEN, HIDDEN_WIDTH),
        fc(HIDDEN_WIDTH, HIDDEN_WIDTH),
        fc(HIDDEN_WIDTH, HIDDEN_WIDTH),
        fc(HIDDEN_WIDTH, n_classes),
    ]
}

fn check_classes(n_classes: usize) -> Result<()> {
    if n_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {n_classes}"
        )));
    }
    Ok(())
}

impl<T: Scalar> NetworkParams<T> {
    pub fn zeros(n_classes: usize) -> Result<Self> {
        check_classes(n_classes)?;
        let [a, b, c, d, e, f, g] = layer_shapes(n_classes).map(|(w, b)| Layer {
            weights: Tensor::zeros(&w),
            bias: Tensor::zeros(&b),
        });
        Ok(NetworkParams {
            n_classes,
            conv1: a,
            conv2: b,
            conv3: c,
            fc1: d,
            fc2: e,
            fc3: f,
            fc_out: g,
        })
    }

    pub(crate) fn from_layers(n_classes: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        check_classes(n_classes)?;
        let shapes = layer_shapes(n_classes);
        if layers.len() != 7 {
            return Err(Error::Shape(format!(
                "expected 7 layers, got {}",
                layers.len()
            )));
        }
        for ((l, (w, b)), name) in layers.iter().zip(&shapes).zip(LAYER_NAMES) {
            if l.weights.shape() != w.as_slice() || l.bias.shape() != b.as_slice() {
                return Err(Error::Shape(format!(
                    "layer {name} does not match {n_classes}-class architecture"
                )));
            }
        }
        let mut it = layers.into_iter();
        let mut next = || it.next().expect("length checked");
        Ok(NetworkParams {
            n_classes,
            conv1: next(),
            conv2: next(),
            conv3: next(),
            fc1: next(),
            fc2: next(),
            fc3: next(),
            fc_out: next(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn layers(&self) -> [&Layer<T>; 7] {
        [
            &self.conv1,
            &self.conv2,
            &self.conv3,
            &self.fc1,
            &self.fc2,
            &self.fc3,
            &self.fc_out,
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut Layer<T>; 7] {
        [
            &mut self.conv1,
            &mut self.conv2,
            &mut self.conv3,
            &mut self.fc1,
            &mut self.fc2,
            &mut self.fc3,
            &mut self.fc_out,
        ]
    }

    /// Weights and biases interleaved, layer by layer.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers()
            .into_iter()
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        let layers = self
            .layers()
            .into_iter()
            .map(|l| Layer {
                weights: l.weights.cast(),
                bias: l.bias.cast(),
            })
            .collect();
        NetworkParams::from_layers(self.n_classes, layers).expect("same architecture")
    }

    fn conv_layers(&self) -> [&Layer<T>; 3] {
        [&self.conv1, &self.conv2, &self.conv3]
    }

    fn fc_layers(&self) -> [&Layer<T>; 4] {
        [&self.fc1, &self.fc2, &self.fc3, &self.fc_out]
    }
}

/// Fresh parameters: fan-in scaled Gaussian weights (std `sqrt(2 / fan_in)`),
/// zero biases. Values depend only on `seed`, whatever the precision.
pub fn init_network<T: Scalar>(n_classes: usize, seed: u64) -> Result<NetworkParams<T>> {
    check_classes(n_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_shapes(n_classes)
        .into_iter()
        .map(|(w, b)| {
            let fan_in: usize = if w.len() == 4 {
                w[1] * w[2] * w[3]
            } else {
                w[0]
            };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            Layer {
                weights: Tensor::from_fn(&w, |_| T::lit(normal.sample(&mut rng))),
                bias: Tensor::zeros(&b),
            }
        })
        .collect();
    NetworkParams::from_layers(n_classes, layers)
}

/// Intermediate values kept for the backward pass.
pub(crate) struct Activations<T> {
    conv_inputs: Vec<Tensor<T>>,
    conv_pre: Vec<Tensor<T>>,
    pool_argmax: Vec<Vec<usize>>,
    fc_inputs: Vec<Tensor<T>>,
    fc_pre: Vec<Tensor<T>>,
    pub logits: Tensor<T>,
}

fn check_batch<T: Scalar>(batch: &Tensor<T>) -> Result<usize> {
    let [n, c, h, w] = batch.dims4()?;
    if c != 3 || h != PATCH_SIZE || w != PATCH_SIZE {
        return Err(Error::Shape(format!(
            "network input must be N×3×{PATCH_SIZE}×{PATCH_SIZE}, got {:?}",
            batch.shape()
        )));
    }
    Ok(n)
}

pub(crate) fn forward_cached<T: Scalar>(
    params: &NetworkParams<T>,
    batch: &Tensor<T>,
) -> Result<Activations<T>> {
    let n = check_batch(batch)?;
    let mut acts = Activations {
        conv_inputs: Vec::with_capacity(3),
        conv_pre: Vec::with_capacity(3),
        pool_argmax: Vec::with_capacity(3),
        fc_inputs: Vec::with_capacity(4),
        fc_pre: Vec::with_capacity(3),
        logits: Tensor::zeros(&[1]),
    };
    let mut x = batch.clone();
    for ((layer, conv), pool) in params
        .conv_layers()
        .into_iter()
        .zip(&CONV_LAYERS)
        .zip(&POOL_LAYERS)
    {
        let pre = tensor::conv2d(&x, &layer.weights, &layer.bias, conv.stride)?;
        let pooled = tensor::maxpool2d(&tensor::relu(&pre), pool.kernel, pool.stride)?;
        acts.conv_inputs.push(x);
        acts.conv_pre.push(pre);
        acts.pool_argmax.push(pooled.argmax);
        x = pooled.output;
    }
    let mut h = x.reshape(&[n, FEATURE_LEN])?;
    let fcs = params.fc_layers();
    for (i, layer) in fcs.iter().enumerate() {
        let out = tensor::fully_connected(&h, &layer.weights, &layer.bias)?;
        acts.fc_inputs.push(h);
        if i + 1 < fcs.len() {
            h = tensor::relu(&out);
            acts.fc_pre.push(out);
        } else {
            acts.logits = out;
            break;
        }
    }
    Ok(acts)
}

/// Logits for an N×3×55×55 batch of context windows.
pub fn forward<T: Scalar>(params: &NetworkParams<T>, batch: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(forward_cached(params, batch)?.logits)
}

/// Flattened 256-long convolutional feature of every sample.
pub fn conv_features<T: Scalar>(params: &NetworkParams<T>, batch: &Tensor<T>) -> Result<Tensor<T>> {
    let acts = forward_cached(params, batch)?;
    Ok(acts
        .fc_inputs
        .into_iter()
        .next()
        .expect("fc1 input recorded"))
}

/// Gradients of the loss with respect to every parameter, given the gradient
/// with respect to the logits. Returned in the shape of the parameters.
pub(crate) fn backward<T: Scalar>(
    params: &NetworkParams<T>,
    acts: &Activations<T>,
    grad_logits: &Tensor<T>,
) -> Result<NetworkParams<T>> {
    let mut grads: Vec<Layer<T>> = Vec::with_capacity(7);
    let fcs = params.fc_layers();
    let mut g = grad_logits.clone();
    for i in (0..fcs.len()).rev() {
        if i + 1 < fcs.len() {
            g = tensor::relu_backward(&acts.fc_pre[i], &g)?;
        }
        let lg = tensor::fully_connected_backward(&acts.fc_inputs[i], &fcs[i].weights, &g)?;
        grads.push(Layer {
            weights: lg.weights,
            bias: lg.bias,
        });
        g = lg.input;
    }
    let n = g.dims2()?[0];
    g = g.reshape(&[n, FEATURE_LEN, 1, 1])?;
    let convs = params.conv_layers();
    for i in (0..convs.len()).rev() {
        let pre = &acts.conv_pre[i];
        g = tensor::maxpool2d_backward(pre.shape(), &acts.pool_argmax[i], &g)?;
        g = tensor::relu_backward(pre, &g)?;
        let (input, w, stride) = (
            &acts.conv_inputs[i],
            &convs[i].weights,
            CONV_LAYERS[i].stride,
        );
        if i == 0 {
            let (weights, bias) = tensor::conv2d_backward_params(input, w, stride, &g)?;
            grads.push(Layer { weights, bias });
            break;
        }
        let lg = tensor::conv2d_backward(input, w, stride, &g)?;
        grads.push(Layer {
            weights: lg.weights,
            bias: lg.bias,
        });
        g = lg.input;
    }
    grads.reverse();
    NetworkParams::from_layers(params.n_classes, grads)
}

/// Mean cross-entropy loss of a labeled batch and its parameter gradients.
pub fn loss_and_gradients<T: Scalar>(
    params: &NetworkParams<T>,
    batch: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, NetworkParams<T>)> {
    let acts = forward_cached(params, batch)?;
    let ce = tensor::softmax_cross_entropy(&acts.logits, labels)?;
    let grads = backward(params, &acts, &ce.grad_logits)?;
    Ok((ce.loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_terminates_at_one() {
        assert_eq!(shape_chain(55).unwrap(), vec![26, 13, 10, 5, 2, 1]);
        assert!(shape_chain(20).is_err());
    }

    #[test]
    fn init_shapes_and_determinism() {
        let p = init_network::<f32>(4, 1).unwrap();
        assert_eq!(p.fc_out.weights.shape(), &[1024, 4]);
        assert_eq!(p.conv1.weights.shape(), &[64, 3, 4, 4]);
        assert_eq!(p, init_network::<f32>(4, 1).unwrap());
        assert_ne!(p, init_network::<f32>(4, 2).unwrap());
        assert!(p
            .tensors()
            .iter()
            .skip(1)
            .step_by(2)
            .all(|b| b.data().iter().all(|&v| v == 0.0)));
        assert!(init_network::<f32>(1, 0).is_err());
    }

    #[test]
    fn init_does_not_depend_on_precision() {
        let a = init_network::<f64>(3, 5).unwrap();
        let b = init_network::<f32>(3, 5).unwrap();
        assert_eq!(a.cast::<f32>(), b);
    }

    #[test]
    fn forward_shapes() {
        let p = init_network::<f32>(5, 0).unwrap();
        let x = Tensor::from_fn(&[2, 3, 55, 55], |i| ((i % 17) as f32 - 8.0) / 8.0);
        assert_eq!(forward(&p, &x).unwrap().shape(), &[2, 5]);
        assert_eq!(conv_features(&p, &x).unwrap().shape(), &[2, FEATURE_LEN]);
        assert!(forward(&p, &Tensor::zeros(&[1, 3, 54, 55])).is_err());
        assert!(forward(&p, &Tensor::zeros(&[1, 4, 55, 55])).is_err());
    }

    #[test]
    fn zero_weights_give_bias_logits() {
        let mut p = NetworkParams::<f64>::zeros(3).unwrap();
        p.fc_out.bias = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let x = Tensor::from_fn(&[2, 3, 55, 55], |i| (i as f64).sin());
        let logits = forward(&p, &x).unwrap();
        assert_eq!(logits.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }
}
