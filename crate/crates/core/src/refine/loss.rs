//! Training losses over a raw 4-vector network output `q_out` and a unit
//! label. Each returns the loss value and its gradient with respect to
//! `q_out`.

use crate::rotgeo::{geodesic_angle, UnitQuaternion};

/// Bound on `|q_out · q_label|` used in the geodesic-loss gradient. Keeps
/// the gradient magnitude finite as the loss approaches zero.
pub const DOT_CLAMP: f64 = 1.0 - 1e-7;

fn dot(a: [f64; 4], b: [f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Geodesic angle (radians) between the rotations `q_out` and `q_label`.
///
/// The value is the exact rotation distance, so it treats `q_out` as a
/// direction: scaling `q_out` does not change it. The gradient is that of
/// `2 arccos(|q̂ · l|)` with `q̂ = q_out / ‖q_out‖`, evaluated with the dot
/// product clamped to [`DOT_CLAMP`]; it has no component along `q_out`.
pub fn geodesic_loss(q_out: [f64; 4], q_label: UnitQuaternion) -> (f64, [f64; 4]) {
    let norm = dot(q_out, q_out).sqrt();
    let l = q_label.to_array();
    let Ok(q) = UnitQuaternion::new_normalize(q_out[0], q_out[1], q_out[2], q_out[3]) else {
        return (f64::NAN, [f64::NAN; 4]);
    };
    let value = geodesic_angle(q, q_label);
    let u = q.to_array();
    let d = dot(u, l);
    let dc = d.abs().min(DOT_CLAMP);
    let scale = -2.0 * d.signum() / (1.0 - dc * dc).sqrt() / norm;
    let grad = std::array::from_fn(|i| scale * (l[i] - d * u[i]));
    (value, grad)
}

/// Mean squared difference over the four components against the label's
/// non-negative-scalar representative.
pub fn mse_loss(q_out: [f64; 4], q_label: UnitQuaternion) -> (f64, [f64; 4]) {
    let l = q_label.canonical().to_array();
    let diff: [f64; 4] = std::array::from_fn(|i| q_out[i] - l[i]);
    let value = dot(diff, diff) / 4.0;
    (value, diff.map(|d| d / 2.0))
}
