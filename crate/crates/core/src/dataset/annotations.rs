//! On-disk dataset layout and the annotation record format.
//!
//! ```text
//! root/
//!   annotations.txt   one record per (frame, object) pair
//!   manifest.txt      "<object_id> <name>" per line
//!   images/*.png      8-bit RGB frames
//! ```
//!
//! Each non-comment line of `annotations.txt` holds 15 whitespace-separated
//! fields:
//!
//! ```text
//! <image> <object_id> <x_min> <y_min> <x_max> <y_max> <r00> <r01> <r02> <r10> <r11> <r12> <r20> <r21> <r22>
//! ```
//!
//! `image` is a file name inside `images/` (no whitespace). The box is
//! half-open in pixels (`x_min..x_max`, `y_min..y_max`). The nine numbers
//! are the object's rotation matrix in row-major order, written as decimal
//! floats. Lines starting with `#` and blank lines are ignored. Records for
//! the same image on consecutive lines form one frame.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::image::{BoundingBox, RgbImage};
use crate::error::{Error, Result};
use crate::rotgeo::RotationMatrix3;

pub const ANNOTATIONS_FILE: &str = "annotations.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const IMAGES_DIR: &str = "images";

const HEADER: &str = "# image object_id x_min y_min x_max y_max r00 r01 r02 r10 r11 r12 r20 r21 r22";

/// Largest Frobenius distance from SO(3) accepted for a raw annotation.
pub const MAX_SO3_DISTANCE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectAnnotation {
    pub object_id: u32,
    pub bbox: BoundingBox,
    /// Raw matrix as read, not yet re-orthogonalized.
    pub rotation: RotationMatrix3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameAnnotation {
    /// File name inside `images/`.
    pub image: String,
    pub objects: Vec<ObjectAnnotation>,
}

impl FrameAnnotation {
    pub fn image_path(&self, root: &Path) -> PathBuf {
        root.join(IMAGES_DIR).join(&self.image)
    }
}

/// A record that was reported and skipped.
#[derive(Debug)]
pub struct Rejected {
    pub line: usize,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct LoadedAnnotations {
    pub frames: Vec<FrameAnnotation>,
    pub rejected: Vec<Rejected>,
}

impl LoadedAnnotations {
    pub fn object_count(&self) -> usize {
        self.frames.iter().map(|f| f.objects.len()).sum()
    }
}

/// Frobenius distance from `m` to the nearest rotation (its orthogonal polar
/// factor, found by Newton iteration `R ← ½(R + R⁻ᵀ)`). Infinite when `m` is
/// singular or improper.
pub fn distance_to_so3(m: &RotationMatrix3) -> f64 {
    let mut r = m.rows();
    if !(RotationMatrix3::from_rows(r).determinant() > 1e-9) {
        return f64::INFINITY;
    }
    for _ in 0..30 {
        let cur = RotationMatrix3::from_rows(r);
        let det = cur.determinant();
        if !(det.abs() > 1e-12) {
            return f64::INFINITY;
        }
        // Inverse transpose = cofactor matrix / det.
        let cof = |i: usize, j: usize| {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
            r[i1][j1] * r[i2][j2] - r[i1][j2] * r[i2][j1]
        };
        let next: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (r[i][j] + cof(i, j) / det)));
        let step = RotationMatrix3::from_rows(next).frobenius_distance(&cur);
        r = next;
        if step < 1e-15 {
            break;
        }
    }
    m.frobenius_distance(&RotationMatrix3::from_rows(r))
}

fn parse_record(path: &Path, line_no: usize, line: &str) -> Result<(String, ObjectAnnotation)> {
    let perr = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        msg,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 15 {
        return Err(perr(format!("expected 15 fields, found {}", fields.len())));
    }
    let int = |i: usize, what: &str| -> Result<u32> {
        fields[i]
            .parse::<u32>()
            .map_err(|_| perr(format!("{what} {:?} is not a non-negative integer", fields[i])))
    };
    let object_id = int(1, "object id")?;
    let bbox = BoundingBox::new(int(2, "x_min")?, int(3, "y_min")?, int(4, "x_max")?, int(5, "y_max")?);
    let mut m = [0.0; 9];
    for (k, slot) in m.iter_mut().enumerate() {
        let s = fields[6 + k];
        *slot = s
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| perr(format!("matrix entry {k} {s:?} is not a finite number")))?;
    }
    if !bbox.is_valid() {
        return Err(perr(format!("empty bounding box {bbox:?}")));
    }
    let rotation = RotationMatrix3::from_row_major(m);
    let dist = distance_to_so3(&rotation);
    if !(dist <= MAX_SO3_DISTANCE) {
        return Err(perr(format!(
            "rotation matrix is {dist:.4} from SO(3) (limit {MAX_SO3_DISTANCE})"
        )));
    }
    Ok((
        fields[0].to_string(),
        ObjectAnnotation {
            object_id,
            bbox,
            rotation,
        },
    ))
}

/// Reads `root/annotations.txt`. Records that fail to parse, reference a
/// missing image, have a box outside the image, or carry a matrix too far
/// from SO(3) are collected in [`LoadedAnnotations::rejected`] with their
/// line numbers. A directory without an annotations file yields no frames.
pub fn load_annotations(root: &Path) -> Result<LoadedAnnotations> {
    let path = root.join(ANNOTATIONS_FILE);
    if !path.exists() {
        if !root.is_dir() {
            return Err(Error::io(
                root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        return Ok(LoadedAnnotations::default());
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = LoadedAnnotations::default();
    let mut dims: HashMap<String, Result<(u32, u32), String>> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let checked = parse_record(&path, line_no, line).and_then(|(image, obj)| {
            let image_path = root.join(IMAGES_DIR).join(&image);
            let size = dims
                .entry(image.clone())
                .or_insert_with(|| RgbImage::png_dimensions(&image_path).map_err(|e| e.to_string()))
                .clone();
            let (w, h) = size.map_err(|msg| Error::Parse {
                path: path.clone(),
                line: line_no,
                msg,
            })?;
            if !obj.bbox.fits(w, h) {
                return Err(Error::Parse {
                    path: path.clone(),
                    line: line_no,
                    msg: format!("bounding box {:?} outside {w}x{h} image {image}", obj.bbox),
                });
            }
            Ok((image, obj))
        });
        match checked {
            Ok((image, obj)) => match out.frames.last_mut() {
                Some(frame) if frame.image == image => frame.objects.push(obj),
                _ => out.frames.push(FrameAnnotation {
                    image,
                    objects: vec![obj],
                }),
            },
            Err(error) => out.rejected.push(Rejected { line: line_no, error }),
        }
    }
    Ok(out)
}

/// Serializes frames in the record format. Floats use the shortest
/// representation that reads back to the same value.
pub fn format_annotations(frames: &[FrameAnnotation]) -> String {
    let mut s = String::new();
    s.push_str(HEADER);
    s.push('\n');
    for frame in frames {
        for obj in &frame.objects {
            let b = obj.bbox;
            let _ = write!(
                s,
                "{} {} {} {} {} {}",
                frame.image, obj.object_id, b.x_min, b.y_min, b.x_max, b.y_max
            );
            for v in obj.rotation.to_row_major() {
                let _ = write!(s, " {v:?}");
            }
            s.push('\n');
        }
    }
    s
}

pub fn write_annotations(root: &Path, frames: &[FrameAnnotation]) -> Result<()> {
    let path = root.join(ANNOTATIONS_FILE);
    fs::write(&path, format_annotations(frames)).map_err(|e| Error::io(&path, e))
}

pub fn write_manifest(root: &Path, objects: &[(u32, String)]) -> Result<()> {
    let path = root.join(MANIFEST_FILE);
    let mut s = String::new();
    for (id, name) in objects {
        let _ = writeln!(s, "{id} {name}");
    }
    fs::write(&path, s).map_err(|e| Error::io(&path, e))
}

/// Reads `manifest.txt`; a missing manifest is an empty list.
pub fn read_manifest(root: &Path) -> Result<Vec<(u32, String)>> {
    let path = root.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, name) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let id = id.parse().map_err(|_| Error::Parse {
            path: path.clone(),
            line: idx + 1,
            msg: format!("object id {id:?} is not an integer"),
        })?;
        out.push((id, name.trim().to_string()));
    }
    Ok(out)
}
