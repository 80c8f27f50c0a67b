//! Deterministic inputs shared by the benchmarks.

use quatrefine::autonet::Tensor;
use quatrefine::dataset::{crop_resize, cuboid_bbox, render_cuboid, RenderParams, INPUT_SIZE};
use quatrefine::rotgeo::{axis_angle_to_quat, AxisAngle, UnitQuaternion};
use quatrefine::sampler::{NoiseConfig, NoiseSampler};

/// Frame side length used when rendering fixtures.
pub const FRAME_SIZE: u32 = 96;

/// `n` evenly spread poses about a tilted axis.
pub fn poses(n: usize) -> Vec<UnitQuaternion> {
    (0..n)
        .map(|i| {
            let angle = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
            axis_angle_to_quat(AxisAngle::new([0.48, 0.6, 0.64], angle)).expect("unit axis")
        })
        .collect()
}

/// Network-ready crops of the synthetic cuboid, one per pose.
pub fn crops(poses: &[UnitQuaternion]) -> Vec<Tensor> {
    let params = RenderParams::default();
    poses
        .iter()
        .map(|&q| {
            let frame = render_cuboid(q, FRAME_SIZE, &params);
            crop_resize(&frame, cuboid_bbox(q, FRAME_SIZE, &params, 2), INPUT_SIZE).expect("bbox inside frame")
        })
        .collect()
}

/// Perturbed network inputs for `poses` under the default noise.
pub fn coarse_poses(poses: &[UnitQuaternion], seed: u64) -> Vec<UnitQuaternion> {
    let mut sampler = NoiseSampler::new(&NoiseConfig {
        seed,
        ..NoiseConfig::default()
    })
    .expect("default noise is valid");
    poses.iter().map(|&q| sampler.perturb(q).q_in.canonical()).collect()
}
