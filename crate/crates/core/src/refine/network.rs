//! The three-stage refiner: a shallow CNN over the crop, a widening MLP over
//! the coarse quaternion, and an MLP head over their concatenation that
//! emits a unit correction quaternion.
//!
//! | stage | layers |
//! |-------|--------|
//! | cnn   | conv 3→16 5×5 pad 2, BN, relu, pool; conv 16→16 5×5 pad 2, BN, relu, pool; flatten to 4096 |
//! | pose  | fc 4→64, relu; fc 64→512, relu; fc 512→4096, relu |
//! | head  | concat to 8192; fc 8192→4096, relu; fc 4096→1024, relu; fc 1024→128, relu; fc 128→4; L2 normalize |

use std::path::Path;

use crate::autonet::{
    concat_backward, concat_forward, l2_normalize_backward, l2_normalize_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, BatchNorm2d, BatchNormCache, Checkpoint, Conv2d, Conv2dCache,
    Layer, Linear, LinearCache, MaxPoolCache, Mode, NormalizeCache, Tensor,
};
use crate::dataset::INPUT_SIZE;
use crate::error::{Error, Result};
use crate::rotgeo::UnitQuaternion;
use crate::sampler::rng_from_seed;

/// Bumped whenever the layer plan or parameter naming changes.
pub const ARCH_VERSION: u32 = 1;

pub const CONV_CHANNELS: usize = 16;
pub const FEATURE_DIM: usize = 4096;
pub const POSE_WIDTHS: [usize; 4] = [4, 64, 512, FEATURE_DIM];
pub const HEAD_WIDTHS: [usize; 5] = [2 * FEATURE_DIM, 4096, 1024, 128, 4];

const META_ARCH: &str = "meta.arch_version";
const META_INPUT: &str = "meta.input_size";
const META_DIGEST: &str = "meta.config_digest";

#[derive(Clone, Debug)]
pub struct RefinerWeights {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub pose: [Linear; 3],
    pub head: [Linear; 4],
    /// SHA-256 of the training configuration that produced these weights;
    /// all zeros for a freshly built network.
    pub config_digest: [u8; 32],
}

/// Everything the backward pass needs from one training forward pass.
pub struct ForwardCache {
    batch: usize,
    conv1: Conv2dCache,
    bn1: BatchNormCache,
    relu1: Tensor,
    pool1: MaxPoolCache,
    conv2: Conv2dCache,
    bn2: BatchNormCache,
    relu2: Tensor,
    pool2: MaxPoolCache,
    pool2_shape: Vec<usize>,
    pose: Vec<(LinearCache, Tensor)>,
    head: Vec<(LinearCache, Option<Tensor>)>,
    norm: NormalizeCache,
    output: Tensor,
}

impl ForwardCache {
    /// Unit-norm network outputs, `[batch, 4]`.
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

/// Builds a freshly initialized network; identical seeds give identical
/// weights.
pub fn build_network(seed: u64) -> RefinerWeights {
    let mut rng = rng_from_seed(seed);
    let conv1 = Conv2d::new(3, CONV_CHANNELS, 5, 1, 2, &mut rng);
    let conv2 = Conv2d::new(CONV_CHANNELS, CONV_CHANNELS, 5, 1, 2, &mut rng);
    let pose = std::array::from_fn(|i| Linear::new(POSE_WIDTHS[i], POSE_WIDTHS[i + 1], &mut rng));
    let head = std::array::from_fn(|i| Linear::new(HEAD_WIDTHS[i], HEAD_WIDTHS[i + 1], &mut rng));
    RefinerWeights {
        conv1,
        bn1: BatchNorm2d::new(CONV_CHANNELS),
        conv2,
        bn2: BatchNorm2d::new(CONV_CHANNELS),
        pose,
        head,
        config_digest: [0; 32],
    }
}

/// Packs unit quaternions as a `[batch, 4]` network input.
pub fn quaternion_batch(qs: &[UnitQuaternion]) -> Tensor {
    let data = qs.iter().flat_map(|q| q.to_array().map(|v| v as f32)).collect();
    Tensor::from_vec(&[qs.len(), 4], data).expect("four values per quaternion")
}

/// Stacks `[3, S, S]` crops into a `[batch, 3, S, S]` tensor.
pub fn image_batch(images: &[&Tensor]) -> Result<Tensor> {
    let expected = [3, INPUT_SIZE as usize, INPUT_SIZE as usize];
    let mut data = Vec::with_capacity(images.len() * expected.iter().product::<usize>());
    for img in images {
        if img.shape() != expected {
            return Err(Error::Shape {
                context: "refiner image input",
                expected: expected.to_vec(),
                actual: img.shape().to_vec(),
            });
        }
        data.extend_from_slice(img.data());
    }
    let mut shape = vec![images.len()];
    shape.extend_from_slice(&expected);
    Tensor::from_vec(&shape, data)
}

fn to_quaternions(out: &Tensor) -> Result<Vec<UnitQuaternion>> {
    out.data()
        .chunks_exact(4)
        .map(|c| UnitQuaternion::new_normalize(c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64))
        .collect()
}

impl RefinerWeights {
    fn check_batch(images: &Tensor, q_in: &Tensor) -> Result<usize> {
        let n = images.shape().first().copied().unwrap_or(0);
        let expected = [n, 3, INPUT_SIZE as usize, INPUT_SIZE as usize];
        if images.shape() != expected {
            return Err(Error::Shape {
                context: "refiner image batch",
                expected: expected.to_vec(),
                actual: images.shape().to_vec(),
            });
        }
        if q_in.shape() != [n, 4] {
            return Err(Error::Shape {
                context: "refiner pose batch",
                expected: vec![n, 4],
                actual: q_in.shape().to_vec(),
            });
        }
        Ok(n)
    }

    /// Forward pass over a batch, keeping what backward needs. Train mode
    /// uses batch statistics and updates the batch-norm running estimates.
    pub fn forward(&mut self, images: &Tensor, q_in: &Tensor, mode: Mode) -> Result<ForwardCache> {
        let batch = Self::check_batch(images, q_in)?;
        let (c1, conv1) = self.conv1.forward(images)?;
        let (b1, bn1) = self.bn1.forward(&c1, mode)?;
        let relu1 = relu_forward(&b1);
        let (p1, pool1) = maxpool2x2_forward(&relu1)?;
        let (c2, conv2) = self.conv2.forward(&p1)?;
        let (b2, bn2) = self.bn2.forward(&c2, mode)?;
        let relu2 = relu_forward(&b2);
        let (p2, pool2) = maxpool2x2_forward(&relu2)?;
        let pool2_shape = p2.shape().to_vec();
        let features = p2.reshape(&[batch, FEATURE_DIM])?;

        let mut pose = Vec::with_capacity(3);
        let mut x = q_in.clone();
        for layer in &self.pose {
            let (y, cache) = layer.forward(&x)?;
            x = relu_forward(&y);
            pose.push((cache, x.clone()));
        }

        let mut h = concat_forward(&features, &x)?;
        let mut head = Vec::with_capacity(4);
        let last = self.head.len() - 1;
        for (i, layer) in self.head.iter().enumerate() {
            let (y, cache) = layer.forward(&h)?;
            if i < last {
                h = relu_forward(&y);
                head.push((cache, Some(h.clone())));
            } else {
                h = y;
                head.push((cache, None));
            }
        }
        let (output, norm) = l2_normalize_forward(&h).map_err(|e| match e {
            Error::NumericDegeneracy(msg) => Error::NumericDegeneracy(format!("refiner output: {msg}")),
            other => other,
        })?;
        Ok(ForwardCache {
            batch,
            conv1,
            bn1,
            relu1,
            pool1,
            conv2,
            bn2,
            relu2,
            pool2,
            pool2_shape,
            pose,
            head,
            norm,
            output,
        })
    }

    /// Accumulates parameter gradients for `d loss / d output`.
    pub fn backward(&mut self, cache: &ForwardCache, grad_output: &Tensor) -> Result<()> {
        let mut g = l2_normalize_backward(&cache.output, &cache.norm, grad_output)?;
        for (layer, (lc, relu_out)) in self.head.iter_mut().zip(&cache.head).rev() {
            if let Some(out) = relu_out {
                g = relu_backward(out, &g)?;
            }
            g = layer.backward(lc, &g)?;
        }
        let (g_features, mut g_pose) = concat_backward(&g, FEATURE_DIM)?;
        for (layer, (lc, out)) in self.pose.iter_mut().zip(&cache.pose).rev() {
            g_pose = relu_backward(out, &g_pose)?;
            g_pose = layer.backward(lc, &g_pose)?;
        }

        let g = g_features.reshape(&cache.pool2_shape)?;
        let g = maxpool2x2_backward(&cache.pool2, &g)?;
        let g = relu_backward(&cache.relu2, &g)?;
        let g = self.bn2.backward(&cache.bn2, &g)?;
        let g = self.conv2.backward(&cache.conv2, &g)?;
        let g = maxpool2x2_backward(&cache.pool1, &g)?;
        let g = relu_backward(&cache.relu1, &g)?;
        let g = self.bn1.backward(&cache.bn1, &g)?;
        self.conv1.backward(&cache.conv1, &g)?;
        debug_assert_eq!(grad_output.shape()[0], cache.batch);
        Ok(())
    }

    /// Eval-mode forward over a batch of crops and coarse poses, returning
    /// the predicted corrections.
    pub fn predict_batch(&self, images: &[&Tensor], q_in: &[UnitQuaternion]) -> Result<Vec<UnitQuaternion>> {
        if images.len() != q_in.len() {
            return Err(Error::InvalidArgument(format!(
                "{} images but {} poses",
                images.len(),
                q_in.len()
            )));
        }
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let x = image_batch(images)?;
        let q = quaternion_batch(q_in);
        let batch = Self::check_batch(&x, &q)?;

        let (c1, _) = self.conv1.forward(&x)?;
        let (b1, _) = self.bn1.forward_eval(&c1)?;
        let (p1, _) = maxpool2x2_forward(&relu_forward(&b1))?;
        let (c2, _) = self.conv2.forward(&p1)?;
        let (b2, _) = self.bn2.forward_eval(&c2)?;
        let (p2, _) = maxpool2x2_forward(&relu_forward(&b2))?;
        let features = p2.reshape(&[batch, FEATURE_DIM])?;

        let mut p = q;
        for layer in &self.pose {
            p = relu_forward(&layer.apply(&p)?);
        }
        let mut h = concat_forward(&features, &p)?;
        let last = self.head.len() - 1;
        for (i, layer) in self.head.iter().enumerate() {
            h = layer.apply(&h)?;
            if i < last {
                h = relu_forward(&h);
            }
        }
        let (out, _) = l2_normalize_forward(&h)?;
        to_quaternions(&out)
    }

    /// Eval-mode prediction for one `[3, S, S]` crop.
    pub fn predict(&self, image: &Tensor, q_in: UnitQuaternion) -> Result<UnitQuaternion> {
        Ok(self.predict_batch(&[image], &[q_in])?[0])
    }

    fn layers(&self) -> Vec<(String, &dyn Layer)> {
        let mut out: Vec<(String, &dyn Layer)> = vec![
            ("cnn.conv1".into(), &self.conv1),
            ("cnn.bn1".into(), &self.bn1),
            ("cnn.conv2".into(), &self.conv2),
            ("cnn.bn2".into(), &self.bn2),
        ];
        out.extend(
            self.pose
                .iter()
                .enumerate()
                .map(|(i, l)| (format!("pose.fc{}", i + 1), l as &dyn Layer)),
        );
        out.extend(
            self.head
                .iter()
                .enumerate()
                .map(|(i, l)| (format!("head.fc{}", i + 1), l as &dyn Layer)),
        );
        out
    }

    fn layers_mut(&mut self) -> Vec<(String, &mut dyn Layer)> {
        let mut out: Vec<(String, &mut dyn Layer)> = vec![
            ("cnn.conv1".into(), &mut self.conv1),
            ("cnn.bn1".into(), &mut self.bn1),
            ("cnn.conv2".into(), &mut self.conv2),
            ("cnn.bn2".into(), &mut self.bn2),
        ];
        out.extend(
            self.pose
                .iter_mut()
                .enumerate()
                .map(|(i, l)| (format!("pose.fc{}", i + 1), l as &mut dyn Layer)),
        );
        out.extend(
            self.head
                .iter_mut()
                .enumerate()
                .map(|(i, l)| (format!("head.fc{}", i + 1), l as &mut dyn Layer)),
        );
        out
    }

    /// Every persistent tensor with its checkpoint name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.layers()
            .into_iter()
            .flat_map(|(prefix, layer)| {
                layer
                    .tensors()
                    .into_iter()
                    .map(move |(name, t)| (format!("{prefix}.{name}"), t))
            })
            .collect()
    }

    /// Trainable tensors in a fixed order, for the optimizer.
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers_mut()
            .into_iter()
            .flat_map(|(_, layer)| layer.tensors_mut().into_iter().map(|(_, t)| t))
            .filter(|t| t.requires_grad())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors()
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        ckpt.push(META_ARCH, &[1], vec![ARCH_VERSION as f32])
            .expect("fresh name");
        ckpt.push(META_INPUT, &[1], vec![INPUT_SIZE as f32])
            .expect("fresh name");
        let limbs = self
            .config_digest
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32)
            .collect();
        ckpt.push(META_DIGEST, &[16], limbs).expect("fresh name");
        for (name, t) in self.named_tensors() {
            ckpt.push_tensor(name, t).expect("unique layer names");
        }
        ckpt
    }

    /// Restores weights from a checkpoint written by [`Self::to_checkpoint`].
    /// Refuses a different architecture version or input size.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = |name: &str, len: usize| -> Result<&[f32]> {
            let e = ckpt
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata entry {name}")))?;
            if e.data.len() != len {
                return Err(Error::Checkpoint(format!(
                    "metadata entry {name} has {} values",
                    e.data.len()
                )));
            }
            Ok(&e.data)
        };
        let arch = meta(META_ARCH, 1)?[0];
        if arch != ARCH_VERSION as f32 {
            return Err(Error::Checkpoint(format!(
                "architecture version {arch} does not match supported version {ARCH_VERSION}"
            )));
        }
        let input = meta(META_INPUT, 1)?[0];
        if input != INPUT_SIZE as f32 {
            return Err(Error::Checkpoint(format!(
                "checkpoint input size {input} does not match {INPUT_SIZE}"
            )));
        }
        let mut digest = [0u8; 32];
        for (i, &limb) in meta(META_DIGEST, 16)?.iter().enumerate() {
            if !(0.0..=65535.0).contains(&limb) || limb.fract() != 0.0 {
                return Err(Error::Checkpoint(format!("invalid config digest limb {limb}")));
            }
            digest[2 * i..2 * i + 2].copy_from_slice(&(limb as u16).to_le_bytes());
        }

        let mut weights = build_network(0);
        weights.config_digest = digest;
        let expected = weights.named_tensors().len() + 3;
        if ckpt.entries().len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} entries, found {}",
                ckpt.entries().len()
            )));
        }
        for (prefix, layer) in weights.layers_mut() {
            for (name, t) in layer.tensors_mut() {
                let full = format!("{prefix}.{name}");
                let e = ckpt
                    .get(&full)
                    .ok_or_else(|| Error::Checkpoint(format!("missing entry {full}")))?;
                if e.shape != t.shape() {
                    return Err(Error::Checkpoint(format!(
                        "entry {full} has shape {:?}, expected {:?}",
                        e.shape,
                        t.shape()
                    )));
                }
                t.data_mut().copy_from_slice(&e.data);
            }
        }
        Ok(weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotgeo::{axis_angle_to_quat, AxisAngle};
    use crate::sampler::{rng_from_seed, sample_noise_axis};
    use rand::Rng;

    fn random_inputs(n: usize, seed: u64) -> (Vec<Tensor>, Vec<UnitQuaternion>) {
        let mut rng = rng_from_seed(seed);
        let s = INPUT_SIZE as usize;
        let images = (0..n)
            .map(|_| Tensor::from_vec(&[3, s, s], (0..3 * s * s).map(|_| rng.random::<f32>()).collect()).unwrap())
            .collect();
        let qs = (0..n)
            .map(|_| {
                let axis = sample_noise_axis(&mut rng);
                axis_angle_to_quat(AxisAngle::new(axis, rng.random::<f64>() * 3.0)).unwrap()
            })
            .collect();
        (images, qs)
    }

    #[test]
    fn layer_shapes_follow_the_plan() {
        let w = build_network(1);
        assert_eq!(w.conv1.weight.shape(), &[16, 3, 5, 5]);
        assert_eq!(w.conv2.weight.shape(), &[16, 16, 5, 5]);
        let pose: Vec<_> = w.pose.iter().map(|l| (l.inputs(), l.outputs())).collect();
        assert_eq!(pose, vec![(4, 64), (64, 512), (512, 4096)]);
        let head: Vec<_> = w.head.iter().map(|l| (l.inputs(), l.outputs())).collect();
        assert_eq!(head, vec![(8192, 4096), (4096, 1024), (1024, 128), (128, 4)]);
        assert_eq!(w.bn1.gamma.data(), &[1.0; 16]);
        assert_eq!(w.bn2.beta.data(), &[0.0; 16]);
    }

    #[test]
    fn stage_widths() {
        let mut w = build_network(2);
        let (images, qs) = random_inputs(2, 3);
        let refs: Vec<&Tensor> = images.iter().collect();
        let cache = w
            .forward(&image_batch(&refs).unwrap(), &quaternion_batch(&qs), Mode::Train)
            .unwrap();
        assert_eq!(cache.pool2_shape, vec![2, 16, 16, 16]);
        assert_eq!(cache.pool2_shape[1..].iter().product::<usize>(), 4096);
        assert_eq!(w.head[0].inputs(), 8192);
    }

    #[test]
    fn same_seed_same_checkpoint_bytes() {
        let a = build_network(5).to_checkpoint().to_bytes();
        assert!(a == build_network(5).to_checkpoint().to_bytes());
        assert!(a != build_network(6).to_checkpoint().to_bytes());
    }

    #[test]
    fn untrained_outputs_unit_and_finite() {
        let w = build_network(7);
        let (images, qs) = random_inputs(100, 8);
        let refs: Vec<&Tensor> = images.iter().collect();
        let out = w.predict_batch(&refs, &qs).unwrap();
        let again = w.predict_batch(&refs, &qs).unwrap();
        for (a, b) in out.iter().zip(&again) {
            assert!(a.to_array().iter().all(|v| v.is_finite()));
            assert!((a.norm() - 1.0).abs() < 1e-6);
            assert_eq!(a.to_array(), b.to_array());
        }
    }

    #[test]
    fn eval_forward_paths_agree() {
        let mut w = build_network(9);
        let (images, qs) = random_inputs(3, 10);
        let refs: Vec<&Tensor> = images.iter().collect();
        let fast = w.predict_batch(&refs, &qs).unwrap();
        let cache = w
            .forward(&image_batch(&refs).unwrap(), &quaternion_batch(&qs), Mode::Eval)
            .unwrap();
        let slow = to_quaternions(cache.output()).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert_eq!(a.to_array(), b.to_array());
        }
    }

    #[test]
    fn checkpoint_round_trip_and_version_gate() {
        let mut w = build_network(11);
        w.config_digest = std::array::from_fn(|i| (i * 37 % 256) as u8);
        let ckpt = w.to_checkpoint();
        let back = RefinerWeights::from_checkpoint(&ckpt).unwrap();
        assert!(back.to_checkpoint().to_bytes() == ckpt.to_bytes());

        let mut entries: Vec<_> = ckpt.entries().to_vec();
        entries[0].data[0] = (ARCH_VERSION + 1) as f32;
        let mut bad = Checkpoint::new();
        for e in entries {
            bad.push(e.name, &e.shape, e.data).unwrap();
        }
        let err = RefinerWeights::from_checkpoint(&bad).unwrap_err();
        assert!(err.to_string().contains("architecture version"));
    }

    #[test]
    fn wrong_image_size_is_a_shape_error() {
        let w = build_network(1);
        let img = Tensor::zeros(&[3, 32, 32]);
        assert!(matches!(
            w.predict(&img, UnitQuaternion::IDENTITY),
            Err(Error::Shape { .. })
        ));
    }
}
