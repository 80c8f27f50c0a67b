//! Pose-annotated bounding-box datasets: loading, annotation cleanup,
//! cropping, splits, and the synthetic cuboid source.

pub mod annotations;
pub mod image;
pub mod render;
pub mod split;
pub mod synth;

use std::collections::HashMap;
use std::path::Path;

pub use annotations::{
    distance_to_so3, format_annotations, load_annotations, read_manifest, write_annotations, write_manifest,
    FrameAnnotation, LoadedAnnotations, ObjectAnnotation, Rejected, ANNOTATIONS_FILE, IMAGES_DIR, MANIFEST_FILE,
    MAX_SO3_DISTANCE,
};
pub use image::{crop_resize, BoundingBox, RgbImage};
pub use render::{cuboid_bbox, render_cuboid, RenderParams};
pub use split::{make_split, DatasetSplit};
pub use synth::{generate, SynthConfig};

use crate::autonet::Tensor;
use crate::error::{Error, Result};
use crate::rotgeo::{reorthogonalize, rotmat_to_quat, RotationMatrix3, UnitQuaternion};
use crate::sampler::NoisePair;

/// Side length of the square network input, pixels.
pub const INPUT_SIZE: u32 = 64;

/// Re-orthogonalizes a raw annotation matrix and converts it to a
/// canonical (w ≥ 0) quaternion.
pub fn clean_pose(raw: &RotationMatrix3) -> Result<UnitQuaternion> {
    rotmat_to_quat(reorthogonalize(*raw)?)
}

/// One cropped object with its cleaned ground-truth orientation.
#[derive(Clone, Debug)]
pub struct LabeledImage {
    pub object_id: u32,
    /// `[3, S, S]` RGB values in `[0, 1]`.
    pub image: Tensor,
    pub q_gt: UnitQuaternion,
}

/// A network training or evaluation sample: a crop, its true orientation,
/// a perturbed coarse estimate and the correction that undoes it.
#[derive(Clone, Copy, Debug)]
pub struct PoseSample<'a> {
    pub object_id: u32,
    pub image: &'a Tensor,
    pub q_gt: UnitQuaternion,
    pub q_in: UnitQuaternion,
    pub q_label: UnitQuaternion,
}

impl LabeledImage {
    pub fn with_noise(&self, pair: &NoisePair) -> PoseSample<'_> {
        PoseSample {
            object_id: self.object_id,
            image: &self.image,
            q_gt: self.q_gt,
            q_in: pair.q_in,
            q_label: pair.q_label,
        }
    }
}

#[derive(Debug, Default)]
pub struct Dataset {
    pub samples: Vec<LabeledImage>,
    /// Records that were reported and skipped while loading.
    pub rejected: Vec<Rejected>,
    pub object_names: Vec<(u32, String)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn object_name(&self, id: u32) -> Option<&str> {
        self.object_names
            .iter()
            .find(|(i, _)| *i == id)
            .map(|(_, n)| n.as_str())
    }
}

/// Loads every valid record under `root`, crops it to `input_size` and
/// cleans its pose. Records whose matrix cannot be repaired are added to
/// [`Dataset::rejected`] alongside the loader's own diagnostics.
pub fn load_dataset(root: &Path, input_size: u32) -> Result<Dataset> {
    let loaded = load_annotations(root)?;
    let object_names = read_manifest(root)?;
    let mut rejected = loaded.rejected;
    let mut samples = Vec::with_capacity(loaded.frames.iter().map(|f| f.objects.len()).sum());
    let mut cache: HashMap<&str, RgbImage> = HashMap::new();
    let ann_path = root.join(annotations::ANNOTATIONS_FILE);
    for frame in &loaded.frames {
        if !cache.contains_key(frame.image.as_str()) {
            cache.clear();
            cache.insert(&frame.image, RgbImage::read_png(&frame.image_path(root))?);
        }
        let img = &cache[frame.image.as_str()];
        for obj in &frame.objects {
            let q_gt = match clean_pose(&obj.rotation) {
                Ok(q) => q,
                Err(e) => {
                    rejected.push(Rejected {
                        line: 0,
                        error: Error::Parse {
                            path: ann_path.clone(),
                            line: 0,
                            msg: format!("{}: object {}: {e}", frame.image, obj.object_id),
                        },
                    });
                    continue;
                }
            };
            samples.push(LabeledImage {
                object_id: obj.object_id,
                image: crop_resize(img, obj.bbox, input_size)?,
                q_gt,
            });
        }
    }
    Ok(Dataset {
        samples,
        rejected,
        object_names,
    })
}
