//! Angular error and the models the evaluator can drive.

use crate::dataset::PoseSample;
use crate::error::Result;
use crate::refine::RefinerWeights;
use crate::rotgeo::{geodesic_angle, UnitQuaternion};

/// Rotation distance between a refined and a ground-truth pose, degrees.
pub fn angular_error(q_refined: UnitQuaternion, q_gt: UnitQuaternion) -> f64 {
    geodesic_angle(q_refined, q_gt).to_degrees()
}

/// Anything that predicts a correction rotation for a coarse pose.
pub trait CorrectionModel: Sync {
    /// One correction per sample, in order.
    fn corrections(&self, batch: &[PoseSample<'_>]) -> Result<Vec<UnitQuaternion>>;
}

impl CorrectionModel for RefinerWeights {
    fn corrections(&self, batch: &[PoseSample<'_>]) -> Result<Vec<UnitQuaternion>> {
        let images: Vec<_> = batch.iter().map(|s| s.image).collect();
        let q_in: Vec<_> = batch.iter().map(|s| s.q_in).collect();
        self.predict_batch(&images, &q_in)
    }
}

/// Always predicts "no correction", so the error equals the injected noise.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityModel;

impl CorrectionModel for IdentityModel {
    fn corrections(&self, batch: &[PoseSample<'_>]) -> Result<Vec<UnitQuaternion>> {
        Ok(vec![UnitQuaternion::IDENTITY; batch.len()])
    }
}

/// Test double that returns the true correction for every sample.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleModel;

impl CorrectionModel for OracleModel {
    fn corrections(&self, batch: &[PoseSample<'_>]) -> Result<Vec<UnitQuaternion>> {
        Ok(batch.iter().map(|s| s.q_label).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotgeo::{axis_angle_to_quat, quat_mul, AxisAngle};
    use crate::sampler::{rng_from_seed, sample_noise_axis};
    use rand::Rng;

    #[test]
    fn zero_for_identical() {
        let q = UnitQuaternion::new_normalize(0.2, 0.4, -0.1, 0.9).unwrap();
        assert_eq!(angular_error(q, q), 0.0);
    }

    #[test]
    fn thirty_degrees_about_any_axis() {
        let mut rng = rng_from_seed(4);
        for _ in 0..100 {
            let gt =
                axis_angle_to_quat(AxisAngle::new(sample_noise_axis(&mut rng), rng.random::<f64>() * 3.0)).unwrap();
            let turn = axis_angle_to_quat(AxisAngle::from_degrees(sample_noise_axis(&mut rng), 30.0)).unwrap();
            assert!((angular_error(quat_mul(gt, turn), gt) - 30.0).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_trace_oracle() {
        let mut rng = rng_from_seed(5);
        for _ in 0..1000 {
            let a = axis_angle_to_quat(AxisAngle::new(sample_noise_axis(&mut rng), rng.random::<f64>() * 3.1)).unwrap();
            let b = axis_angle_to_quat(AxisAngle::new(sample_noise_axis(&mut rng), rng.random::<f64>() * 3.1)).unwrap();
            let rel = a.to_matrix().transpose().matmul(&b.to_matrix());
            let oracle = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees();
            assert!((angular_error(a, b) - oracle).abs() < 1e-4);
        }
    }
}
