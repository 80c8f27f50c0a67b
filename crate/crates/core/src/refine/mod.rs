//! The pose refiner: network, losses and training.

mod loss;
mod network;
mod train;

pub use loss::{geodesic_loss, mse_loss, DOT_CLAMP};
pub use network::{
    build_network, image_batch, quaternion_batch, ForwardCache, RefinerWeights, ARCH_VERSION, CONV_CHANNELS,
    FEATURE_DIM, HEAD_WIDTHS, POSE_WIDTHS,
};
pub use train::{train, EpochMetrics, LossKind, MetricsLog, TrainConfig};

use crate::rotgeo::{quat_mul, UnitQuaternion};

/// Applies a predicted correction to the coarse estimate: `q_in * q_out`.
pub fn refined_pose(q_in: UnitQuaternion, q_out: UnitQuaternion) -> UnitQuaternion {
    quat_mul(q_in, q_out)
}
