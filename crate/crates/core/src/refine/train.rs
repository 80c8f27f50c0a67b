//! Two-phase training: an MSE warmup followed by geodesic-loss epochs, with
//! Adam updates per batch.

use std::fmt;
use std::sync::mpsc::sync_channel;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use super::loss::{geodesic_loss, mse_loss};
use super::network::{image_batch, quaternion_batch, RefinerWeights};
use super::refined_pose;
use crate::autonet::{Adam, AdamConfig, Mode, Tensor};
use crate::dataset::{DatasetSplit, LabeledImage};
use crate::error::{Error, Result};
use crate::rotgeo::{geodesic_angle, UnitQuaternion};
use crate::sampler::{rng_from_seed, NoiseConfig, NoiseSampler};

/// Validation predictions are computed in chunks of this many samples.
const EVAL_CHUNK: usize = 64;
/// Batches the producer may run ahead of the training step.
const PREFETCH: usize = 2;
/// Mixed into the noise seed for the fixed validation perturbations.
const VALIDATION_STREAM: u64 = 0x5641_4c49_4441_5445;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs_mse: usize,
    pub epochs_geodesic: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Training-input noise. A fresh perturbation is drawn for every sample
    /// in every epoch.
    pub noise: NoiseConfig,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Assemble batches on the training thread instead of a producer thread.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_mse: 5,
            epochs_geodesic: 10,
            batch_size: 32,
            lr: 1e-4,
            noise: NoiseConfig::default(),
            seed: 0,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "batch size {} is below 2 (batch norm needs two samples)",
                self.batch_size
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        self.noise.validate()
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_mse + self.epochs_geodesic
    }

    /// `key = value` lines, one per field.
    pub fn to_kv(&self) -> String {
        format!(
            "epochs_mse = {}\nepochs_geodesic = {}\nbatch_size = {}\nlr = {:?}\nnoise = {}\nnoise_seed = {}\nseed = {}\ndeterministic = {}\n",
            self.epochs_mse,
            self.epochs_geodesic,
            self.batch_size,
            self.lr,
            self.noise.distribution,
            self.noise.seed,
            self.seed,
            self.deterministic
        )
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_kv().as_bytes()).into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    Geodesic,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Geodesic => "geodesic",
        }
    }

    fn eval(self, q_out: [f64; 4], q_label: UnitQuaternion) -> (f64, [f64; 4]) {
        match self {
            LossKind::Mse => mse_loss(q_out, q_label),
            LossKind::Geodesic => geodesic_loss(q_out, q_label),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub loss: LossKind,
    pub batches: usize,
    pub train_loss: f64,
    /// NaN when the validation split is empty.
    pub val_loss: f64,
    /// Mean angular error of the refined validation poses, degrees.
    pub val_error_deg: f64,
}

impl fmt::Display for EpochMetrics {
    /// Floats print in shortest round-trip form, so equal logs are equal
    /// text.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} loss={} batches={} train_loss={:?} val_loss={:?} val_error_deg={:?}",
            self.epoch,
            self.loss.name(),
            self.batches,
            self.train_loss,
            self.val_loss,
            self.val_error_deg
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub epochs: Vec<EpochMetrics>,
}

impl fmt::Display for MetricsLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.epochs {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

struct Batch {
    images: Tensor,
    q_in: Tensor,
    labels: Vec<UnitQuaternion>,
}

/// Per-epoch batch index lists. A trailing batch of one sample is dropped
/// since batch norm cannot train on it.
fn epoch_batches(train: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order = train.to_vec();
    order.shuffle(&mut rng_from_seed(seed.wrapping_add(epoch as u64)));
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

fn assemble(samples: &[LabeledImage], idx: &[usize], noise: &mut NoiseSampler) -> Result<Batch> {
    let mut q_in = Vec::with_capacity(idx.len());
    let mut labels = Vec::with_capacity(idx.len());
    let mut images = Vec::with_capacity(idx.len());
    for &i in idx {
        let s = &samples[i];
        let pair = noise.perturb(s.q_gt);
        q_in.push(pair.q_in.canonical());
        labels.push(pair.q_label);
        images.push(&s.image);
    }
    Ok(Batch {
        images: image_batch(&images)?,
        q_in: quaternion_batch(&q_in),
        labels,
    })
}

fn check_indices(split: &DatasetSplit, n: usize) -> Result<()> {
    let bad = split.train.iter().chain(&split.validation).find(|&&i| i >= n);
    match bad {
        Some(i) => Err(Error::InvalidArgument(format!(
            "split index {i} out of range for {n} samples"
        ))),
        None => Ok(()),
    }
}

/// Fixed validation inputs: one perturbation per validation sample.
struct Validation<'a> {
    samples: Vec<&'a LabeledImage>,
    q_in: Vec<UnitQuaternion>,
    labels: Vec<UnitQuaternion>,
}

impl<'a> Validation<'a> {
    fn new(samples: &'a [LabeledImage], idx: &[usize], noise: &NoiseConfig) -> Result<Self> {
        let mut cfg = *noise;
        cfg.seed ^= VALIDATION_STREAM;
        let mut sampler = NoiseSampler::new(&cfg)?;
        let mut v = Validation {
            samples: Vec::with_capacity(idx.len()),
            q_in: Vec::with_capacity(idx.len()),
            labels: Vec::with_capacity(idx.len()),
        };
        for &i in idx {
            let pair = sampler.perturb(samples[i].q_gt);
            v.samples.push(&samples[i]);
            v.q_in.push(pair.q_in.canonical());
            v.labels.push(pair.q_label);
        }
        Ok(v)
    }

    /// Mean loss and mean angular error in degrees.
    fn score(&self, weights: &RefinerWeights, kind: LossKind) -> Result<(f64, f64)> {
        if self.samples.is_empty() {
            return Ok((f64::NAN, f64::NAN));
        }
        let (mut loss, mut err) = (0.0, 0.0);
        for start in (0..self.samples.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(self.samples.len());
            let images: Vec<&Tensor> = self.samples[start..end].iter().map(|s| &s.image).collect();
            let out = weights.predict_batch(&images, &self.q_in[start..end])?;
            for (k, q_out) in out.into_iter().enumerate() {
                let i = start + k;
                loss += kind.eval(q_out.to_array(), self.labels[i]).0;
                err += geodesic_angle(refined_pose(self.q_in[i], q_out), self.samples[i].q_gt).to_degrees();
            }
        }
        let n = self.samples.len() as f64;
        Ok((loss / n, err / n))
    }
}

fn step(
    weights: &mut RefinerWeights,
    adam: &mut Adam,
    batch: &Batch,
    kind: LossKind,
    epoch: usize,
    index: usize,
) -> Result<f64> {
    let context = || format!("epoch {epoch} batch {index}");
    weights.zero_grad();
    let cache = weights
        .forward(&batch.images, &batch.q_in, Mode::Train)
        .map_err(|e| match e {
            Error::NumericDegeneracy(reason) => Error::TrainingDivergence {
                context: context(),
                reason,
            },
            other => other,
        })?;
    let n = batch.labels.len();
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * 4);
    for (out, label) in cache.output().data().chunks_exact(4).zip(&batch.labels) {
        let q = [out[0] as f64, out[1] as f64, out[2] as f64, out[3] as f64];
        let (value, g) = kind.eval(q, *label);
        if !value.is_finite() {
            return Err(Error::TrainingDivergence {
                context: context(),
                reason: format!("{} loss is {value}", kind.name()),
            });
        }
        total += value;
        grad.extend(g.iter().map(|v| (v / n as f64) as f32));
    }
    weights.backward(&cache, &Tensor::from_vec(&[n, 4], grad)?)?;
    adam.step(&mut weights.parameters_mut()).map_err(|e| match e {
        Error::TrainingDivergence { reason, .. } => Error::TrainingDivergence {
            context: context(),
            reason,
        },
        other => other,
    })?;
    Ok(total / n as f64)
}

/// Trains `weights` in place on `split.train`, scoring on
/// `split.validation` after each epoch. Passing previously trained weights
/// fine-tunes them; every parameter is updated. `on_epoch` sees each
/// epoch's metrics as soon as they are available.
pub fn train(
    weights: &mut RefinerWeights,
    samples: &[LabeledImage],
    split: &DatasetSplit,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<MetricsLog> {
    cfg.validate()?;
    if split.train.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training split has {} samples, need at least 2",
            split.train.len()
        )));
    }
    check_indices(split, samples.len())?;
    weights.config_digest = cfg.digest();

    let validation = Validation::new(samples, &split.validation, &cfg.noise)?;
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut log = MetricsLog::default();
    let phases = std::iter::repeat_n(LossKind::Mse, cfg.epochs_mse)
        .chain(std::iter::repeat_n(LossKind::Geodesic, cfg.epochs_geodesic));
    let plans: Vec<(LossKind, Vec<Vec<usize>>)> = phases
        .enumerate()
        .map(|(e, kind)| (kind, epoch_batches(&split.train, cfg.batch_size, cfg.seed, e)))
        .collect();
    let mut noise = NoiseSampler::new(&cfg.noise)?;

    let mut run_epoch =
        |epoch: usize, kind: LossKind, batches: &mut dyn Iterator<Item = Result<Batch>>| -> Result<()> {
            let (mut sum, mut count) = (0.0, 0usize);
            for (b, batch) in batches.enumerate() {
                sum += step(weights, &mut adam, &batch?, kind, epoch, b + 1)?;
                count += 1;
            }
            let (val_loss, val_error_deg) = validation.score(weights, kind)?;
            let m = EpochMetrics {
                epoch,
                loss: kind,
                batches: count,
                train_loss: sum / count.max(1) as f64,
                val_loss,
                val_error_deg,
            };
            on_epoch(&m);
            log.epochs.push(m);
            Ok(())
        };

    if cfg.deterministic {
        for (e, (kind, plan)) in plans.iter().enumerate() {
            let mut it = plan.iter().map(|idx| assemble(samples, idx, &mut noise));
            run_epoch(e + 1, *kind, &mut it)?;
        }
    } else {
        std::thread::scope(|scope| -> Result<()> {
            let (tx, rx) = sync_channel::<Result<Batch>>(PREFETCH);
            let plans_ref = &plans;
            scope.spawn(move || {
                for (_, plan) in plans_ref {
                    for idx in plan {
                        if tx.send(assemble(samples, idx, &mut noise)).is_err() {
                            return;
                        }
                    }
                }
            });
            for (e, (kind, plan)) in plans.iter().enumerate() {
                let mut it = rx.iter().take(plan.len());
                run_epoch(e + 1, *kind, &mut it)?;
            }
            Ok(())
        })?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_split, INPUT_SIZE};
    use crate::refine::build_network;
    use crate::rotgeo::{axis_angle_to_quat, AxisAngle};

    fn tiny_set(n: usize) -> Vec<LabeledImage> {
        let s = INPUT_SIZE as usize;
        (0..n)
            .map(|i| LabeledImage {
                object_id: 0,
                image: Tensor::filled(&[3, s, s], (i as f32) / n as f32),
                q_gt: axis_angle_to_quat(AxisAngle::new([0.0, 0.0, 1.0], i as f64 * 0.1)).unwrap(),
            })
            .collect()
    }

    #[test]
    fn zero_epochs_leave_weights_unchanged() {
        let samples = tiny_set(6);
        let split = make_split(6, (4, 2, 0), 1).unwrap();
        let mut w = build_network(3);
        let before = build_network(3);
        let cfg = TrainConfig {
            epochs_mse: 0,
            epochs_geodesic: 0,
            ..TrainConfig::default()
        };
        let log = train(&mut w, &samples, &split, &cfg, |_| {}).unwrap();
        assert!(log.epochs.is_empty());
        for ((n, a), (_, b)) in w.named_tensors().iter().zip(before.named_tensors()) {
            assert_eq!(a.data(), b.data(), "{n}");
        }
    }

    #[test]
    fn deterministic_and_threaded_runs_match() {
        let samples = tiny_set(10);
        let split = make_split(10, (7, 3, 0), 2).unwrap();
        let cfg = TrainConfig {
            epochs_mse: 1,
            epochs_geodesic: 1,
            batch_size: 3,
            ..TrainConfig::default()
        };
        let mut a = build_network(4);
        let log_a = train(&mut a, &samples, &split, &cfg, |_| {}).unwrap();
        let mut b = build_network(4);
        let threaded = TrainConfig {
            deterministic: false,
            ..cfg.clone()
        };
        let log_b = train(&mut b, &samples, &split, &threaded, |_| {}).unwrap();
        assert_eq!(log_a.to_string(), log_b.to_string());
        assert_eq!(log_a.epochs.len(), 2);
        assert_eq!(log_a.epochs[0].loss, LossKind::Mse);
        assert_eq!(log_a.epochs[1].loss, LossKind::Geodesic);
        // 7 samples in batches of 3: the final singleton is dropped.
        assert_eq!(log_a.epochs[0].batches, 2);
        for ((n, ta), (_, tb)) in a.named_tensors().iter().zip(b.named_tensors()) {
            assert!(ta.data() == tb.data(), "{n} differs");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let samples = tiny_set(4);
        let split = make_split(4, (4, 0, 0), 0).unwrap();
        let cfg = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&mut build_network(0), &samples, &split, &cfg, |_| {}),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn divergence_names_epoch_and_batch() {
        let samples = tiny_set(4);
        let split = make_split(4, (4, 0, 0), 0).unwrap();
        let mut w = build_network(0);
        w.head[3].bias.data_mut()[0] = f32::NAN;
        let cfg = TrainConfig {
            epochs_mse: 1,
            epochs_geodesic: 0,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let err = train(&mut w, &samples, &split, &cfg, |_| {}).unwrap_err();
        match err {
            Error::TrainingDivergence { context, .. } => assert_eq!(context, "epoch 1 batch 1"),
            other => panic!("unexpected {other}"),
        }
    }
}
