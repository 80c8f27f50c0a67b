//! Orthographic flat-shaded cuboid rasterizer used as a synthetic data
//! source.
//!
//! The camera looks down the −z axis of the camera frame; image x points
//! right and image y up, and the object center projects to the image
//! center. Each face gets its own flat color; hidden surfaces are removed
//! with back-face culling plus a depth buffer.

use super::image::{BoundingBox, RgbImage};
use crate::rotgeo::UnitQuaternion;

/// Face order for [`RenderParams::face_colors`].
pub const FACE_NAMES: [&str; 6] = ["+x", "-x", "+y", "-y", "+z", "-z"];

#[derive(Clone, Debug, PartialEq)]
pub struct RenderParams {
    /// Edge lengths along the object x, y, z axes, object units.
    pub dims: [f64; 3],
    /// Fraction of the frame width spanned by the cuboid's circumscribed
    /// sphere diameter.
    pub fill: f64,
    pub face_colors: [[u8; 3]; 6],
    pub background: [u8; 3],
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            dims: [1.0, 0.7, 0.4],
            fill: 0.9,
            face_colors: [
                [220, 50, 50],
                [50, 200, 210],
                [60, 190, 60],
                [200, 60, 200],
                [60, 90, 230],
                [235, 200, 50],
            ],
            background: [48, 48, 48],
        }
    }
}

impl RenderParams {
    fn half_extents(&self) -> [f64; 3] {
        [0.5 * self.dims[0], 0.5 * self.dims[1], 0.5 * self.dims[2]]
    }

    /// Pixels per object unit for a frame of `size` pixels.
    pub fn pixels_per_unit(&self, size: u32) -> f64 {
        let h = self.half_extents();
        let radius = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
        self.fill * size as f64 / (2.0 * radius)
    }
}

struct Face {
    normal: [f64; 3],
    corners: [[f64; 3]; 4],
}

fn faces(half: [f64; 3]) -> [Face; 6] {
    std::array::from_fn(|f| {
        let axis = f / 2;
        let sign = if f % 2 == 0 { 1.0 } else { -1.0 };
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut normal = [0.0; 3];
        normal[axis] = sign;
        let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].map(|(su, sv)| {
            let mut p = [0.0; 3];
            p[axis] = sign * half[axis];
            p[u] = su * half[u];
            p[v] = sv * half[v];
            p
        });
        Face { normal, corners }
    })
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Renders the cuboid rotated by `q` into a `size × size` frame.
///
/// Pure function of its inputs. `q` and `-q` produce identical bytes since
/// only the rotation matrix is used.
pub fn render_cuboid(q: UnitQuaternion, size: u32, params: &RenderParams) -> RgbImage {
    let mut img = RgbImage::filled(size, size, params.background);
    let mut depth = vec![f64::NEG_INFINITY; size as usize * size as usize];
    let rot = q.to_matrix();
    let scale = params.pixels_per_unit(size);
    let half = 0.5 * size as f64;

    for (face, &color) in faces(params.half_extents()).iter().zip(&params.face_colors) {
        if rot.apply(face.normal)[2] <= 0.0 {
            continue;
        }
        // Centered pixel coordinates (y up) and depth (larger is nearer).
        let pts: Vec<([f64; 2], f64)> = face
            .corners
            .iter()
            .map(|&c| {
                let p = rot.apply(c);
                ([scale * p[0], scale * p[1]], p[2])
            })
            .collect();
        for tri in [[0, 1, 2], [0, 2, 3]] {
            let (a, b, c) = (pts[tri[0]], pts[tri[1]], pts[tri[2]]);
            let area = edge(a.0, b.0, c.0);
            if area.abs() < 1e-12 {
                continue;
            }
            let xs = [a.0[0], b.0[0], c.0[0]];
            let ys = [a.0[1], b.0[1], c.0[1]];
            let min_x = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max_x = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min_y = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let max_y = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let col_lo = ((min_x + half - 0.5).floor().max(0.0)) as u32;
            let col_hi = ((max_x + half - 0.5).ceil().min(size as f64 - 1.0)).max(-1.0);
            let row_lo = ((half - 0.5 - max_y).floor().max(0.0)) as u32;
            let row_hi = ((half - 0.5 - min_y).ceil().min(size as f64 - 1.0)).max(-1.0);
            if col_hi < 0.0 || row_hi < 0.0 {
                continue;
            }
            for row in row_lo..=row_hi as u32 {
                let py = half - (row as f64 + 0.5);
                for col in col_lo..=col_hi as u32 {
                    let px = (col as f64 + 0.5) - half;
                    let p = [px, py];
                    let w0 = edge(b.0, c.0, p);
                    let w1 = edge(c.0, a.0, p);
                    let w2 = edge(a.0, b.0, p);
                    let inside = if area > 0.0 {
                        w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0
                    } else {
                        w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0
                    };
                    if !inside {
                        continue;
                    }
                    let z = (w0 * a.1 + w1 * b.1 + w2 * c.1) / area;
                    let idx = row as usize * size as usize + col as usize;
                    if z > depth[idx] {
                        depth[idx] = z;
                        img.put_pixel(col, row, color);
                    }
                }
            }
        }
    }
    img
}

/// Square pixel box around the projected cuboid, grown by `margin` pixels
/// and clamped to the frame.
pub fn cuboid_bbox(q: UnitQuaternion, size: u32, params: &RenderParams, margin: u32) -> BoundingBox {
    let rot = q.to_matrix();
    let scale = params.pixels_per_unit(size);
    let half = 0.5 * size as f64;
    let h = params.half_extents();
    let (mut min_x, mut max_x, mut min_y, mut max_y) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..8 {
        let v = [
            if i & 1 == 0 { -h[0] } else { h[0] },
            if i & 2 == 0 { -h[1] } else { h[1] },
            if i & 4 == 0 { -h[2] } else { h[2] },
        ];
        let p = rot.apply(v);
        let (col, row) = (half + scale * p[0], half - scale * p[1]);
        min_x = min_x.min(col);
        max_x = max_x.max(col);
        min_y = min_y.min(row);
        max_y = max_y.max(row);
    }
    let (cx, cy) = (0.5 * (min_x + max_x), 0.5 * (min_y + max_y));
    let side = (max_x - min_x).max(max_y - min_y) + 2.0 * margin as f64;
    let clamp = |v: f64| v.clamp(0.0, size as f64);
    BoundingBox::new(
        clamp((cx - 0.5 * side).floor()) as u32,
        clamp((cy - 0.5 * side).floor()) as u32,
        clamp((cx + 0.5 * side).ceil()) as u32,
        clamp((cy + 0.5 * side).ceil()) as u32,
    )
}
