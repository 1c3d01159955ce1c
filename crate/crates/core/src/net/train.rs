use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, forward_cached, input_lut, NetworkParams};
use crate::dataset::{PatchSample, PATCH_PIXELS, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::labels::{IGNORE, UNKNOWN};
use crate::tensor::{softmax_cross_entropy, Scalar, Sgd, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Centers extracted per known class before training.
    pub pool_per_class: usize,
    /// Patches drawn per known class from the pool at the start of each epoch.
    pub patches_per_class: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            epochs: 10,
            pool_per_class: 3000,
            patches_per_class: 1000,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 || self.patches_per_class == 0 || self.pool_per_class == 0 {
            return Err(Error::Config(
                "batch_size, patches_per_class and pool_per_class must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Fraction of training samples classified correctly during the epoch.
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,accuracy\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{:.6},{:.6}\n",
                e.epoch, e.mean_loss, e.accuracy
            ));
        }
        s
    }
}

/// Packs samples into an N×3×55×55 tensor.
pub(crate) fn batch_tensor<T: Scalar>(samples: &[&[u8]], lut: &[T; 256]) -> Tensor<T> {
    let mut data = Vec::with_capacity(samples.len() * PATCH_PIXELS);
    for s in samples {
        data.extend(s.iter().map(|&v| lut[v as usize]));
    }
    Tensor::from_parts(vec![samples.len(), 3, PATCH_SIZE, PATCH_SIZE], data)
}

/// Mini-batch SGD with momentum on softmax cross-entropy.
///
/// Every epoch draws up to `patches_per_class` samples of each class from
/// `samples` without replacement and visits them in shuffled order; the last
/// batch of an epoch may be short.
pub fn train<T: Scalar>(
    mut params: NetworkParams<T>,
    samples: &[PatchSample],
    config: &TrainConfig,
) -> Result<(NetworkParams<T>, TrainReport)> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let n_classes = params.n_classes();
    for s in samples {
        if s.pixels.len() != PATCH_PIXELS {
            return Err(Error::Shape(format!(
                "patch has {} samples, expected {PATCH_PIXELS}",
                s.pixels.len()
            )));
        }
        if s.label == UNKNOWN || s.label == IGNORE {
            return Err(Error::Protocol(format!(
                "patch from `{}` at {:?} is labeled {}; only known classes may be trained",
                s.tile_id,
                s.center,
                if s.label == UNKNOWN {
                    "UNKNOWN"
                } else {
                    "IGNORE"
                }
            )));
        }
        if s.label as usize >= n_classes {
            return Err(Error::InvalidArgument(format!(
                "label {} out of range for {n_classes} classes",
                s.label
            )));
        }
    }

    let shapes: Vec<Vec<usize>> = params
        .tensors()
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let mut opt = Sgd::<T>::new(config.learning_rate, config.momentum, &shape_refs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lut = input_lut::<T>();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, s) in samples.iter().enumerate() {
        by_class[s.label as usize].push(i);
    }
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        let start = Instant::now();
        let mut order = Vec::new();
        for pool in &by_class {
            let take = config.patches_per_class.min(pool.len());
            order.extend(
                index::sample(&mut rng, pool.len(), take)
                    .into_iter()
                    .map(|i| pool[i]),
            );
        }
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let pixels: Vec<&[u8]> = chunk
                .iter()
                .map(|&i| samples[i].pixels.as_slice())
                .collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| samples[i].label as usize).collect();
            let x = batch_tensor(&pixels, &lut);
            let acts = forward_cached(&params, &x)?;
            let ce = softmax_cross_entropy(&acts.logits, &labels)?;
            if !ce.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged in epoch {epoch}"
                )));
            }
            loss_sum += ce.loss.as_f64() * chunk.len() as f64;
            for (row, &y) in ce.probs.data().chunks_exact(n_classes).zip(&labels) {
                if argmax(row) == y {
                    correct += 1;
                }
            }
            let grads = backward(&params, &acts, &ce.grad_logits)?;
            opt.step(params.tensors_mut(), &grads.tensors())?;
        }
        if !params.is_finite() {
            return Err(Error::NonFinite(format!(
                "parameters diverged in epoch {epoch}"
            )));
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / order.len() as f64,
            accuracy: correct as f64 / order.len() as f64,
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, train acc {:.3} ({:.1}s)",
            stats.mean_loss,
            stats.accuracy,
            start.elapsed().as_secs_f64()
        );
        report.epochs.push(stats);
    }
    Ok((params, report))
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_network;

    fn sample(label: u8, value: u8) -> PatchSample {
        PatchSample {
            pixels: vec![value; PATCH_PIXELS],
            label,
            tile_id: "t".into(),
            center: (0, 0),
        }
    }

    #[test]
    fn zero_epochs_leaves_params_unchanged() {
        let p = init_network::<f32>(2, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (q, report) = train(p.clone(), &[sample(0, 10)], &cfg).unwrap();
        assert_eq!(p, q);
        assert!(report.epochs.is_empty());
    }

    #[test]
    fn learns_two_flat_colors() {
        let samples: Vec<_> = (0..8)
            .map(|i| sample((i % 2) as u8, if i % 2 == 0 { 30 } else { 220 }))
            .collect();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 4,
            seed: 1,
            ..TrainConfig::default()
        };
        let (_, report) = train(init_network::<f32>(2, 0).unwrap(), &samples, &cfg).unwrap();
        let first = report.epochs[0].mean_loss;
        let last = report.final_loss().unwrap();
        assert!(last < first * 0.5, "loss {first} -> {last}");
        assert!(report.epochs.last().unwrap().accuracy >= 0.95);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let samples: Vec<_> = (0..6)
            .map(|i| sample((i % 3) as u8, (i * 40) as u8))
            .collect();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let a = train(init_network::<f32>(3, 0).unwrap(), &samples, &cfg).unwrap();
        let b = train(init_network::<f32>(3, 0).unwrap(), &samples, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = init_network::<f32>(2, 0).unwrap();
        let cfg = TrainConfig::default();
        assert!(train(p.clone(), &[], &cfg).is_err());
        assert!(train(p.clone(), &[sample(2, 0)], &cfg).is_err());
        assert!(matches!(
            train(p.clone(), &[sample(UNKNOWN, 0)], &cfg),
            Err(Error::Protocol(_))
        ));
        assert!(matches!(
            train(p.clone(), &[sample(IGNORE, 0)], &cfg),
            Err(Error::Protocol(_))
        ));
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..cfg
        };
        assert!(train(p, &[sample(0, 0)], &bad).is_err());
    }

    #[test]
    fn epochs_are_class_balanced() {
        let mut samples: Vec<_> = (0..20).map(|_| sample(0, 10)).collect();
        samples.push(sample(1, 200));
        let cfg = TrainConfig {
            epochs: 1,
            patches_per_class: 3,
            ..TrainConfig::default()
        };
        let (_, report) = train(init_network::<f32>(2, 0).unwrap(), &samples, &cfg).unwrap();
        assert_eq!(report.epochs.len(), 1);
        assert!(report.epochs[0].accuracy * 4.0 == (report.epochs[0].accuracy * 4.0).round());
    }

    #[test]
    fn ties_pick_first() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.2, 0.2]), 1);
    }
}
