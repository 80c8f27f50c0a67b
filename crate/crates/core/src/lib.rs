//! Refinement of coarse 3D object orientations from bounding-box RGB crops.
//!
//! A shallow network looks at an object crop together with a coarse
//! orientation estimate and predicts a correction rotation; composing the
//! estimate with the correction gives the refined orientation.
//!
//! * [`rotgeo`]: quaternion and rotation-matrix algebra, geodesic angle,
//!   annotation re-orthogonalization.
//! * [`sampler`]: rotation-noise generation for coarse poses and labels.
//! * [`dataset`]: annotation I/O, cropping, the synthetic cuboid renderer
//!   and dataset splits.
//! * [`autonet`]: the small reverse-mode tensor engine, Adam and the
//!   checkpoint container.
//! * [`refine`]: the three-stage network, its losses and training loop.
//! * [`eval`]: angular-error metrics, evaluation reports and experiments.

// Negated float comparisons in this crate are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autonet;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod refine;
pub mod rotgeo;
pub mod sampler;

pub use error::{Error, Result};
pub use rotgeo::{AxisAngle, RotationMatrix3, UnitQuaternion};
