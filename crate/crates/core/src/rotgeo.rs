//! Rotation algebra on SO(3).
//!
//! Orientations are unit quaternions `(w, x, y, z)` with scalar part `w`.
//! `q` and `-q` encode the same rotation, so every comparison that is meant
//! "as a rotation" goes through [`geodesic_angle`], which is invariant under
//! sign flips of either argument.
//!
//! Rotation matrices act on column vectors (`v' = R v`) and are stored
//! row-major; their rows are called X, Y and Z.
//!
//! All angles here are radians. Degrees only appear at configuration and
//! CLI boundaries.

use std::fmt;
use std::ops::{Mul, Neg};

use crate::error::{Error, Result};

/// Tolerance on the axis norm accepted by [`axis_angle_to_quat`].
pub const AXIS_NORM_TOLERANCE: f64 = 1e-6;

/// Largest `‖RᵀR − I‖_F` accepted as "a rotation matrix".
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-6;

/// Residual after one re-orthogonalization pass beyond which the input is
/// considered too far from SO(3) to repair.
pub const REPAIRABLE_RESIDUAL: f64 = 1e-3;

const MAX_RENORMALIZE_PASSES: usize = 8;

/// A rotation encoded as a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes `(w, x, y, z)` onto the unit sphere.
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::NumericDegeneracy(format!(
                "cannot normalize quaternion ({w}, {x}, {y}, {z}) with norm {norm}"
            )));
        }
        Ok(Self {
            w: w / norm,
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Builds a quaternion from components that are already unit length
    /// within `1e-6`; the result is renormalized.
    pub fn try_from_array(q: [f64; 4]) -> Result<Self> {
        let n2 = q.iter().map(|c| c * c).sum::<f64>();
        if !n2.is_finite() || (n2.sqrt() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "quaternion {q:?} is not unit length (norm {})",
                n2.sqrt()
            )));
        }
        Self::new_normalize(q[0], q[1], q[2], q[3])
    }

    #[inline]
    pub fn w(&self) -> f64 {
        self.w
    }
    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }
    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }
    #[inline]
    pub fn z(&self) -> f64 {
        self.z
    }

    #[inline]
    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    #[inline]
    pub fn vector(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// The representative with non-negative scalar part.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            -*self
        } else {
            *self
        }
    }

    pub fn inverse(&self) -> Self {
        quat_inverse(*self)
    }

    pub fn angle_to(&self, other: &Self) -> f64 {
        geodesic_angle(*self, *other)
    }

    pub fn to_matrix(&self) -> RotationMatrix3 {
        quat_to_matrix(*self)
    }

    pub fn to_axis_angle(&self) -> AxisAngle {
        quat_to_axis_angle(*self)
    }

    /// Rotates a vector by this quaternion.
    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        self.to_matrix().apply(v)
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Neg for UnitQuaternion {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

impl Mul for UnitQuaternion {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        quat_mul(self, rhs)
    }
}

impl fmt::Display for UnitQuaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.w, self.x, self.y, self.z)
    }
}

/// A rotation by `angle` radians about a unit `axis`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisAngle {
    pub axis: [f64; 3],
    pub angle: f64,
}

impl AxisAngle {
    pub fn new(axis: [f64; 3], angle: f64) -> Self {
        Self { axis, angle }
    }

    pub fn from_degrees(axis: [f64; 3], angle_deg: f64) -> Self {
        Self {
            axis,
            angle: angle_deg.to_radians(),
        }
    }
}

/// A 3×3 matrix, row-major. Not necessarily orthogonal: raw annotations are
/// stored in this type before [`reorthogonalize`] repairs them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix3 {
    rows: [[f64; 3]; 3],
}

impl RotationMatrix3 {
    pub const IDENTITY: RotationMatrix3 = RotationMatrix3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Self { rows }
    }

    /// Row-major nine entries.
    pub fn from_row_major(m: [f64; 9]) -> Self {
        Self {
            rows: [[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]],
        }
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.rows
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let r = &self.rows;
        [
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        ]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }

    pub fn transpose(&self) -> Self {
        let r = &self.rows;
        Self {
            rows: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.rows[i][k] * rhs.rows[k][j]).sum();
            }
        }
        Self { rows: out }
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let r = &self.rows;
        [dot(r[0], v), dot(r[1], v), dot(r[2], v)]
    }

    pub fn trace(&self) -> f64 {
        self.rows[0][0] + self.rows[1][1] + self.rows[2][2]
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rows;
        dot(r[0], cross(r[1], r[2]))
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        self.to_row_major()
            .iter()
            .zip(other.to_row_major().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthogonality_residual(&self) -> f64 {
        self.transpose().matmul(self).frobenius_distance(&Self::IDENTITY)
    }

    pub fn is_rotation(&self) -> bool {
        self.orthogonality_residual() < ORTHOGONALITY_TOLERANCE && self.determinant() > 0.0
    }
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `[cos(θ/2), n sin(θ/2)]`.
pub fn axis_angle_to_quat(aa: AxisAngle) -> Result<UnitQuaternion> {
    let norm = dot(aa.axis, aa.axis).sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > AXIS_NORM_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "rotation axis {:?} has norm {norm}, expected 1",
            aa.axis
        )));
    }
    if !aa.angle.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rotation angle {} is not finite",
            aa.angle
        )));
    }
    let half = 0.5 * aa.angle;
    let s = half.sin() / norm;
    UnitQuaternion::new_normalize(half.cos(), aa.axis[0] * s, aa.axis[1] * s, aa.axis[2] * s)
}

/// `θ = 2 arccos(w)`, axis `= v / √(1 − w²)`.
///
/// At the identity the axis is undefined; `(1, 0, 0)` is returned. The angle
/// lies in `[0, 2π]` and follows the sign of `w` as given.
pub fn quat_to_axis_angle(q: UnitQuaternion) -> AxisAngle {
    let w = q.w.clamp(-1.0, 1.0);
    let vnorm = dot(q.vector(), q.vector()).sqrt();
    // atan2 is the same angle as 2·acos(w) but stays accurate near θ = 0.
    let angle = 2.0 * vnorm.atan2(w);
    if vnorm < 1e-15 {
        return AxisAngle {
            axis: [1.0, 0.0, 0.0],
            angle,
        };
    }
    AxisAngle {
        axis: scale(q.vector(), 1.0 / vnorm),
        angle,
    }
}

/// Hamilton product `(r1 r2 − v1·v2, r1 v2 + r2 v1 + v1 × v2)`, renormalized.
pub fn quat_mul(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion {
    let (va, vb) = (a.vector(), b.vector());
    let w = a.w * b.w - dot(va, vb);
    let c = cross(va, vb);
    let x = a.w * vb[0] + b.w * va[0] + c[0];
    let y = a.w * vb[1] + b.w * va[1] + c[1];
    let z = a.w * vb[2] + b.w * va[2] + c[2];
    let n = (w * w + x * x + y * y + z * z).sqrt();
    UnitQuaternion {
        w: w / n,
        x: x / n,
        y: y / n,
        z: z / n,
    }
}

/// Scalar part of `a * b⁻¹`, i.e. the 4-vector dot product.
#[inline]
pub fn relative_scalar(a: UnitQuaternion, b: UnitQuaternion) -> f64 {
    a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z
}

pub fn quat_inverse(q: UnitQuaternion) -> UnitQuaternion {
    UnitQuaternion {
        w: q.w,
        x: -q.x,
        y: -q.y,
        z: -q.z,
    }
}

/// Minimal rotation angle between two orientations, in `[0, π]`.
///
/// Equal to `2 arccos(|scalar(q1 * q2⁻¹)|)` for unit inputs, but evaluated
/// as `2 atan2(‖vector‖, |scalar|)` of the relative rotation: the arccos
/// form cannot resolve angles below ~1e-8 rad.
pub fn geodesic_angle(q1: UnitQuaternion, q2: UnitQuaternion) -> f64 {
    let w = relative_scalar(q1, q2);
    // Vector part of q1 * q2⁻¹ = (r1, v1)(r2, −v2).
    let (v1, v2) = (q1.vector(), q2.vector());
    let c = cross(v1, v2);
    let v = [
        q2.w * v1[0] - q1.w * v2[0] - c[0],
        q2.w * v1[1] - q1.w * v2[1] - c[1],
        q2.w * v1[2] - q1.w * v2[2] - c[2],
    ];
    2.0 * dot(v, v).sqrt().atan2(w.abs())
}

pub fn quat_to_matrix(q: UnitQuaternion) -> RotationMatrix3 {
    let UnitQuaternion { w, x, y, z } = q;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, xz, yz) = (x * y, x * z, y * z);
    let (wx, wy, wz) = (w * x, w * y, w * z);
    RotationMatrix3 {
        rows: [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ],
    }
}

/// Converts a proper rotation matrix to the quaternion with `w ≥ 0`.
///
/// Branches on the largest of `(trace, r00, r11, r22)` so the square root is
/// always taken of a quantity ≥ 1 and nothing cancels near 180°.
pub fn rotmat_to_quat(m: RotationMatrix3) -> Result<UnitQuaternion> {
    let residual = m.orthogonality_residual();
    let det = m.determinant();
    if !(residual < ORTHOGONALITY_TOLERANCE) || det <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "matrix is not a rotation (‖RᵀR − I‖_F = {residual:e}, det = {det})"
        )));
    }
    let r = &m.rows;
    let trace = m.trace();
    let (w, x, y, z);
    if trace >= r[0][0] && trace >= r[1][1] && trace >= r[2][2] {
        let s = 2.0 * (1.0 + trace).sqrt();
        w = 0.25 * s;
        x = (r[2][1] - r[1][2]) / s;
        y = (r[0][2] - r[2][0]) / s;
        z = (r[1][0] - r[0][1]) / s;
    } else if r[0][0] >= r[1][1] && r[0][0] >= r[2][2] {
        let s = 2.0 * (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt();
        w = (r[2][1] - r[1][2]) / s;
        x = 0.25 * s;
        y = (r[0][1] + r[1][0]) / s;
        z = (r[0][2] + r[2][0]) / s;
    } else if r[1][1] >= r[2][2] {
        let s = 2.0 * (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt();
        w = (r[0][2] - r[2][0]) / s;
        x = (r[0][1] + r[1][0]) / s;
        y = 0.25 * s;
        z = (r[1][2] + r[2][1]) / s;
    } else {
        let s = 2.0 * (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt();
        w = (r[1][0] - r[0][1]) / s;
        x = (r[0][2] + r[2][0]) / s;
        y = (r[1][2] + r[2][1]) / s;
        z = 0.25 * s;
    }
    Ok(UnitQuaternion::new_normalize(w, x, y, z)?.canonical())
}

/// One direction-cosine renormalization pass: split the X·Y error between
/// the first two rows, rebuild Z as their cross product, then pull every
/// row back to unit length with the first-order step `v ← ½(3 − v·v) v`.
pub fn renormalize_once(m: RotationMatrix3) -> RotationMatrix3 {
    let [x, y, _] = m.rows;
    let error = dot(x, y);
    let x_orth = sub(x, scale(y, 0.5 * error));
    let y_orth = sub(y, scale(x, 0.5 * error));
    let z_orth = cross(x_orth, y_orth);
    let unit = |v: [f64; 3]| scale(v, 0.5 * (3.0 - dot(v, v)));
    RotationMatrix3 {
        rows: [unit(x_orth), unit(y_orth), unit(z_orth)],
    }
}

/// Repairs a nearly orthogonal matrix onto SO(3).
///
/// Repeats [`renormalize_once`] until the result stops changing. Each pass
/// roughly squares the residual, so a handful of passes reach machine
/// precision.
pub fn reorthogonalize(m: RotationMatrix3) -> Result<RotationMatrix3> {
    if m.rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("matrix has non-finite entries".into()));
    }
    let mut current = renormalize_once(m);
    let first_residual = current.orthogonality_residual();
    if !(first_residual <= REPAIRABLE_RESIDUAL) || current.determinant() <= 0.0 {
        return Err(Error::DegenerateInput(format!(
            "matrix too far from SO(3): residual {first_residual:e} after one pass, det {}",
            current.determinant()
        )));
    }
    for _ in 1..MAX_RENORMALIZE_PASSES {
        let next = renormalize_once(current);
        let step = next.frobenius_distance(&current);
        current = next;
        if step < 1e-15 {
            break;
        }
    }
    Ok(current)
}
