use proptest::prelude::*;
use quatrefine::autonet::{
    l2_normalize_forward, maxpool2x2_forward, relu_forward, BatchNorm2d, Conv2d, Linear, Mode, Tensor,
};
use quatrefine::dataset::{
    load_annotations, make_split, render_cuboid, write_annotations, BoundingBox, FrameAnnotation, ObjectAnnotation,
    RenderParams, RgbImage, IMAGES_DIR,
};
use quatrefine::refine::{geodesic_loss, mse_loss, refined_pose};
use quatrefine::rotgeo::{
    axis_angle_to_quat, geodesic_angle, quat_inverse, quat_mul, quat_to_axis_angle, quat_to_matrix, reorthogonalize,
    rotmat_to_quat, AxisAngle, UnitQuaternion,
};
use quatrefine::sampler::{perturb_with, rng_from_seed, NoiseConfig, NoiseDistribution, NoiseSampler};

fn unit_quaternion() -> impl Strategy<Value = UnitQuaternion> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("norm bounded away from zero", |v| {
            v.iter().map(|c| c * c).sum::<f64>() > 0.01
        })
        .prop_map(|v| UnitQuaternion::new_normalize(v[0], v[1], v[2], v[3]).unwrap())
}

fn unit_axis() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("norm bounded away from zero", |v| {
            v.iter().map(|c| c * c).sum::<f64>() > 0.01
        })
        .prop_map(|v| {
            let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        })
}

fn norm_error(q: UnitQuaternion) -> f64 {
    (q.norm() - 1.0).abs()
}

proptest! {
    #[test]
    fn operations_return_unit_quaternions(a in unit_quaternion(), b in unit_quaternion()) {
        prop_assert!(norm_error(quat_mul(a, b)) < 1e-9);
        prop_assert!(norm_error(quat_inverse(a)) < 1e-9);
        prop_assert!(norm_error(rotmat_to_quat(quat_to_matrix(a)).unwrap()) < 1e-9);
        prop_assert!(norm_error(axis_angle_to_quat(quat_to_axis_angle(a)).unwrap()) < 1e-9);
    }

    #[test]
    fn geodesic_angle_ignores_the_sign_of_either_argument(a in unit_quaternion(), b in unit_quaternion()) {
        let d = geodesic_angle(a, b);
        prop_assert_eq!(d, geodesic_angle(a, -b));
        prop_assert_eq!(d, geodesic_angle(-a, b));
    }

    #[test]
    fn quaternion_product_matches_matrix_product(a in unit_quaternion(), b in unit_quaternion()) {
        let lhs = quat_to_matrix(quat_mul(a, b));
        let rhs = quat_to_matrix(a).matmul(&quat_to_matrix(b));
        prop_assert!(lhs.frobenius_distance(&rhs) < 1e-9);
    }

    #[test]
    fn geodesic_angle_is_a_metric(a in unit_quaternion(), b in unit_quaternion(), c in unit_quaternion()) {
        let ab = geodesic_angle(a, b);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - geodesic_angle(b, a)).abs() < 1e-12);
        prop_assert!(geodesic_angle(a, a) < 1e-12);
        prop_assert!(geodesic_angle(a, -a) < 1e-12);
        prop_assert!(ab <= geodesic_angle(a, c) + geodesic_angle(c, b) + 1e-9);
    }

    #[test]
    fn distinct_rotations_have_positive_distance(a in unit_quaternion(), axis in unit_axis(), angle in 1e-3f64..3.1) {
        let b = quat_mul(a, axis_angle_to_quat(AxisAngle::new(axis, angle)).unwrap());
        prop_assert!((geodesic_angle(a, b) - angle).abs() < 1e-9);
    }

    #[test]
    fn axis_angle_round_trip(axis in unit_axis(), angle in 1e-4f64..(std::f64::consts::PI - 1e-4)) {
        let back = quat_to_axis_angle(axis_angle_to_quat(AxisAngle::new(axis, angle)).unwrap());
        prop_assert!((back.angle - angle).abs() < 1e-9);
        let axis_err = back.axis.iter().zip(axis).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        prop_assert!(axis_err < 1e-6);
    }

    #[test]
    fn matrix_round_trip_preserves_rotation(q in unit_quaternion()) {
        let back = rotmat_to_quat(quat_to_matrix(q)).unwrap();
        prop_assert!(geodesic_angle(q, back) < 1e-7);
        prop_assert!(back.w() >= 0.0);
    }

    #[test]
    fn reorthogonalize_is_idempotent(q in unit_quaternion(), noise in prop::array::uniform9(-1e-3f64..1e-3)) {
        let mut m = quat_to_matrix(q).to_row_major();
        for (v, n) in m.iter_mut().zip(noise) {
            *v += n;
        }
        let once = reorthogonalize(quatrefine::RotationMatrix3::from_row_major(m)).unwrap();
        let twice = reorthogonalize(once).unwrap();
        prop_assert!(once.orthogonality_residual() < 1e-6);
        prop_assert!(once.determinant() > 0.0);
        prop_assert!(once.frobenius_distance(&twice) < 1e-12);
    }

    #[test]
    fn perturbation_is_undone_by_its_label(q_gt in unit_quaternion(), axis in unit_axis(), angle in 0.0f64..std::f64::consts::PI) {
        let pair = perturb_with(q_gt, AxisAngle::new(axis, angle)).unwrap();
        prop_assert!(geodesic_angle(quat_mul(pair.q_in, pair.q_label), q_gt) < 1e-9);
        prop_assert!(geodesic_angle(refined_pose(pair.q_in.canonical(), pair.q_label), q_gt) < 1e-9);
        prop_assert!((geodesic_angle(pair.q_in, q_gt) - angle).abs() < 1e-9);
    }

    #[test]
    fn noise_streams_are_determined_by_the_seed(seed in any::<u64>(), q in unit_quaternion()) {
        let cfg = NoiseConfig::new(NoiseDistribution::Normal { mean_deg: 30.0, sd_deg: 5.0 }, seed);
        let mut a = NoiseSampler::new(&cfg).unwrap();
        let mut b = NoiseSampler::new(&cfg).unwrap();
        for _ in 0..8 {
            let (pa, pb) = (a.perturb(q), b.perturb(q));
            prop_assert_eq!(pa.q_in.to_array(), pb.q_in.to_array());
            prop_assert_eq!(pa.q_label.to_array(), pb.q_label.to_array());
        }
    }

    #[test]
    fn geodesic_loss_equals_geodesic_angle(q in unit_quaternion(), label in unit_quaternion()) {
        let (loss, grad) = geodesic_loss(q.to_array(), label);
        prop_assert!((loss - geodesic_angle(q, label)).abs() < 1e-9);
        prop_assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn both_losses_vanish_at_the_label(label in unit_quaternion(), flip in any::<bool>()) {
        let target = if flip { -label } else { label };
        prop_assert!(geodesic_loss(target.to_array(), label).0.abs() < 1e-9);
        prop_assert!(mse_loss(target.canonical().to_array(), label).0.abs() < 1e-12);
    }

    #[test]
    fn both_losses_are_positive_away_from_the_label(label in unit_quaternion(), axis in unit_axis(), angle in 0.01f64..3.1) {
        let q = quat_mul(label, axis_angle_to_quat(AxisAngle::new(axis, angle)).unwrap()).canonical();
        prop_assert!(geodesic_loss(q.to_array(), label).0 > 0.0);
        prop_assert!(mse_loss(q.to_array(), label).0 > 0.0);
    }

    #[test]
    fn rendering_is_a_pure_function(q in unit_quaternion(), size in 16u32..48) {
        let params = RenderParams::default();
        let a = render_cuboid(q, size, &params);
        prop_assert!(a == render_cuboid(q, size, &params));
        prop_assert_eq!((a.width(), a.height()), (size, size));
    }

    #[test]
    fn splits_are_disjoint_and_sized(available in 3usize..400, seed in any::<u64>(), parts in prop::array::uniform3(0.0f64..1.0)) {
        let sum: f64 = parts.iter().sum::<f64>().max(1e-9);
        let counts: Vec<usize> = parts.iter().map(|p| ((p / sum) * available as f64 * 0.99) as usize).collect();
        let split = make_split(available, (counts[0], counts[1], counts[2]), seed).unwrap();
        prop_assert_eq!(split.counts(), (counts[0], counts[1], counts[2]));
        let mut all: Vec<usize> = split.train.iter().chain(&split.validation).chain(&split.test).copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), n);
        prop_assert!(all.iter().all(|&i| i < available));
    }

    #[test]
    fn layer_outputs_stay_finite(values in prop::collection::vec(-1e3f32..1e3, 2 * 3 * 8 * 8), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let conv = Conv2d::new(3, 4, 3, 1, 1, &mut rng);
        let mut bn = BatchNorm2d::new(4);
        let fc = Linear::new(4 * 4 * 4, 4, &mut rng);
        let x = Tensor::from_vec(&[2, 3, 8, 8], values).unwrap();
        let (y, _) = conv.forward(&x).unwrap();
        prop_assert!(y.is_finite());
        let (y, _) = bn.forward(&y, Mode::Train).unwrap();
        prop_assert!(y.is_finite());
        prop_assert!(bn.running_mean.is_finite() && bn.running_var.is_finite());
        let (y, _) = maxpool2x2_forward(&relu_forward(&y)).unwrap();
        let y = fc.apply(&y.reshape(&[2, 64]).unwrap()).unwrap();
        prop_assert!(y.is_finite());
        let shifted = Tensor::from_vec(&[2, 4], y.data().iter().map(|v| v + 1.0).collect()).unwrap();
        let (q, _) = l2_normalize_forward(&shifted).unwrap();
        prop_assert!(q.is_finite());
    }
}

fn annotation_frames() -> impl Strategy<Value = Vec<FrameAnnotation>> {
    let object =
        (0u32..5, unit_quaternion(), 0u32..20, 0u32..20, 1u32..12, 1u32..12).prop_map(|(id, q, x, y, w, h)| {
            ObjectAnnotation {
                object_id: id,
                bbox: BoundingBox::new(x, y, x + w, y + h),
                rotation: quat_to_matrix(q),
            }
        });
    prop::collection::vec(prop::collection::vec(object, 1..4), 1..5).prop_map(|frames| {
        frames
            .into_iter()
            .enumerate()
            .map(|(i, objects)| FrameAnnotation {
                image: format!("{i:06}.png"),
                objects,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn annotations_survive_a_write_load_round_trip(frames in annotation_frames()) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join(IMAGES_DIR)).unwrap();
        for f in &frames {
            RgbImage::filled(32, 32, [0, 0, 0]).write_png(&f.image_path(dir.path())).unwrap();
        }
        write_annotations(dir.path(), &frames).unwrap();
        let loaded = load_annotations(dir.path()).unwrap();
        prop_assert!(loaded.rejected.is_empty());
        prop_assert_eq!(loaded.frames, frames);
    }
}
