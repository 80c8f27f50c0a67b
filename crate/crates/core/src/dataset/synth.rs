//! Synthetic cuboid dataset generator.
//!
//! Writes the same directory layout as a real dataset, one object per frame.
//! Ground-truth orientations are a fixed base orientation composed with a
//! random rotation of uniformly distributed axis and angle in
//! `[0, spread]`.

use std::fs;
use std::path::Path;

use rand::Rng;

use super::annotations::{write_annotations, write_manifest, FrameAnnotation, ObjectAnnotation, IMAGES_DIR};
use super::render::{cuboid_bbox, render_cuboid, RenderParams};
use crate::error::{Error, Result};
use crate::rotgeo::{axis_angle_to_quat, quat_mul, AxisAngle, RotationMatrix3, UnitQuaternion};
use crate::sampler::{rng_from_seed, sample_noise_axis};

pub const CUBOID_OBJECT_ID: u32 = 0;
pub const CUBOID_NAME: &str = "cuboid";

/// Decimal places kept for matrix entries in the written annotations.
pub const MATRIX_DECIMALS: i32 = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    pub frame_size: u32,
    /// Maximum angle, in degrees, between a ground-truth pose and `base`.
    pub spread_deg: f64,
    pub base: UnitQuaternion,
    /// Extra pixels around the projected cuboid in each bounding box.
    pub bbox_margin: u32,
    pub render: RenderParams,
}

/// Three faces visible, none edge-on.
pub fn default_base_orientation() -> UnitQuaternion {
    let tilt = axis_angle_to_quat(AxisAngle::from_degrees([1.0, 0.0, 0.0], 30.0)).expect("unit axis");
    let turn = axis_angle_to_quat(AxisAngle::from_degrees([0.0, 1.0, 0.0], -35.0)).expect("unit axis");
    quat_mul(tilt, turn)
}

impl SynthConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            frame_size: 96,
            spread_deg: 60.0,
            base: default_base_orientation(),
            bbox_margin: 2,
            render: RenderParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_size < 8 {
            return Err(Error::InvalidArgument(format!(
                "frame size {} is below 8 pixels",
                self.frame_size
            )));
        }
        if !(self.spread_deg >= 0.0 && self.spread_deg <= 180.0) {
            return Err(Error::InvalidArgument(format!(
                "pose spread {} must lie in [0, 180] degrees",
                self.spread_deg
            )));
        }
        Ok(())
    }
}

fn round_entry(v: f64) -> f64 {
    let scale = 10f64.powi(MATRIX_DECIMALS);
    let r = (v * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Draws the ground-truth orientations for `cfg`, in frame order.
pub fn sample_poses(cfg: &SynthConfig) -> Result<Vec<UnitQuaternion>> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    (0..cfg.count)
        .map(|_| {
            let axis = sample_noise_axis(&mut rng);
            let angle = rng.random::<f64>() * cfg.spread_deg;
            let offset = axis_angle_to_quat(AxisAngle::from_degrees(axis, angle))?;
            Ok(quat_mul(cfg.base, offset))
        })
        .collect()
}

pub fn image_name(index: usize) -> String {
    format!("{index:06}.png")
}

/// Renders and writes `cfg.count` frames to `root`, returning the written
/// annotations. Output bytes depend only on `cfg`.
pub fn generate(root: &Path, cfg: &SynthConfig) -> Result<Vec<FrameAnnotation>> {
    let poses = sample_poses(cfg)?;
    let images = root.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut frames = Vec::with_capacity(poses.len());
    for (i, q) in poses.into_iter().enumerate() {
        let name = image_name(i);
        render_cuboid(q, cfg.frame_size, &cfg.render).write_png(&images.join(&name))?;
        let m = q.to_matrix().to_row_major().map(round_entry);
        frames.push(FrameAnnotation {
            image: name,
            objects: vec![ObjectAnnotation {
                object_id: CUBOID_OBJECT_ID,
                bbox: cuboid_bbox(q, cfg.frame_size, &cfg.render, cfg.bbox_margin),
                rotation: RotationMatrix3::from_row_major(m),
            }],
        });
    }
    write_annotations(root, &frames)?;
    write_manifest(root, &[(CUBOID_OBJECT_ID, CUBOID_NAME.to_string())])?;
    Ok(frames)
}
