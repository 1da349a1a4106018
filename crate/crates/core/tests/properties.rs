use nalgebra::{DVector, Matrix3, Vector3};
use proptest::prelude::*;
use psmgc::dynamics::{inverse_dynamics, regressor};
use psmgc::excitation::FourierTrajectory;
use psmgc::gravsim::{drift_threshold, is_drift, SimLog};
use psmgc::io::{self, ModelConfig};
use psmgc::kinematics::{forward_kinematics, frame_coordinates, frame_kinematics_derivatives};
use psmgc::model::{example_psm, validate, InertialMode, PSM_LENGTH_KEYS};
use psmgc::{ChainModel, JointVector, ParamLayout, ParamVector, RobotState, INSERTION_JOINT, N_JOINTS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn joint_vector(lo: f64, hi: f64) -> impl Strategy<Value = JointVector> {
    proptest::array::uniform7(lo..hi).prop_map(|a| JointVector::from_column_slice(&a))
}

fn state() -> impl Strategy<Value = RobotState> {
    (joint_vector(-1.0, 1.0), joint_vector(-1.0, 1.0), joint_vector(-2.0, 2.0)).prop_map(|(mut q, qd, qdd)| {
        q[INSERTION_JOINT] = 0.1 + 0.1 * q[INSERTION_JOINT];
        RobotState::new(q, qd, qdd)
    })
}

fn params(model: &ChainModel, mode: InertialMode, seed: u64) -> ParamVector {
    ParamVector::sample_physical(model, mode, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn mode() -> impl Strategy<Value = InertialMode> {
    prop_oneof![Just(InertialMode::Gravity), Just(InertialMode::Full)]
}

fn skew_part(m: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn preset_is_valid_for_positive_lengths(scales in proptest::collection::vec(0.01f64..10.0, PSM_LENGTH_KEYS.len())) {
        let mut cfg = ModelConfig::default();
        for (k, s) in PSM_LENGTH_KEYS.iter().zip(&scales) {
            *cfg.lengths.get_mut(*k).unwrap() *= s;
        }
        let model = cfg.build().unwrap();
        prop_assert!(validate(&model).is_empty());
        let text = serde_json::to_string(&model).unwrap();
        let back: ChainModel = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, model);
        let back: ModelConfig = serde_json::from_str(&io::to_json(&cfg)).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn rotations_stay_orthonormal(q in joint_vector(-3.0, 3.0)) {
        let model = example_psm();
        let poses = forward_kinematics(&model, &q);
        for (id, t) in poses.iter() {
            prop_assert!(t.orthonormality_error() < 1e-10, "frame {}", id);
        }
    }

    #[test]
    fn insertion_axis_passes_through_the_remote_center(q in joint_vector(-1.0, 1.0)) {
        let model = example_psm();
        let mut q = q;
        q[INSERTION_JOINT] = 0.12 + 0.1 * q[INSERTION_JOINT];
        let poses = forward_kinematics(&model, &q);
        let rcm = poses.rcm().unwrap().translation;
        let shaft = poses.get("3").unwrap();
        let axis = shaft.rotation.column(2).into_owned();
        let r = rcm - shaft.translation;
        prop_assert!((r - axis * axis.dot(&r)).norm() < 1e-9);
    }

    #[test]
    fn frame_rates_match_finite_differences(s in state()) {
        let model = example_psm();
        let h = 1e-6;
        let motion = frame_kinematics_derivatives(&model, &s, false);
        let up = forward_kinematics(&model, &(s.q + s.qd * h));
        let dn = forward_kinematics(&model, &(s.q - s.qd * h));
        for (i, m) in motion.iter().enumerate() {
            let Some(m) = m else { continue };
            let (a, b) = (up.frame(i), dn.frame(i));
            let v = (a.translation - b.translation) / (2.0 * h);
            let rdot = (a.rotation - b.rotation) / (2.0 * h);
            let w = skew_part(&(rdot * m.rotation.transpose()));
            prop_assert!((v - m.velocity).norm() <= 1e-6 * (1.0 + m.velocity.norm()));
            prop_assert!((w - m.omega).norm() <= 1e-6 * (1.0 + m.omega.norm()));
        }
    }

    #[test]
    fn frame_coordinates_are_affine(a in joint_vector(-1.0, 1.0), b in joint_vector(-1.0, 1.0)) {
        let model = example_psm();
        let ca = frame_coordinates(&model, &a);
        let cb = frame_coordinates(&model, &b);
        let c0 = frame_coordinates(&model, &JointVector::zeros());
        let cs = frame_coordinates(&model, &(a + b));
        for k in 0..ca.len() {
            prop_assert!((ca[k] + cb[k] - c0[k] - cs[k]).abs() <= 1e-14);
        }
    }

    #[test]
    fn inverse_dynamics_is_linear_in_parameters(s in state(), mode in mode(), seeds in (0u64..1000, 0u64..1000), ab in (-2.0f64..2.0, -2.0f64..2.0)) {
        let model = example_psm();
        let d1 = params(&model, mode, seeds.0);
        let d2 = params(&model, mode, seeds.1);
        let mix = ParamVector::new(d1.layout.clone(), &d1.values * ab.0 + &d2.values * ab.1).unwrap();
        let lhs = inverse_dynamics(&model, &s, &mix).unwrap();
        let rhs = inverse_dynamics(&model, &s, &d1).unwrap() * ab.0 + inverse_dynamics(&model, &s, &d2).unwrap() * ab.1;
        prop_assert!((lhs - rhs).amax() <= 1e-9 * (1.0 + lhs.amax()));
        let h = regressor(&model, &ParamLayout::for_model(&model, mode), &s).matrix;
        let lin: DVector<f64> = h * &mix.values;
        prop_assert!((0..N_JOINTS).all(|j| (lin[j] - lhs[j]).abs() <= 1e-9 * (1.0 + lhs.amax())));
    }

    #[test]
    fn params_file_round_trips(mode in mode(), seed in 0u64..10_000) {
        let model = example_psm();
        let d = params(&model, mode, seed);
        let file: io::ParamsFile = serde_json::from_str(&io::params_json(&model, &d)).unwrap();
        prop_assert_eq!(file.to_params(&model).unwrap(), d);
    }

    #[test]
    fn drift_flag_flips_at_the_threshold(joint in 0usize..N_JOINTS, ratio in 0.5f64..1.5, sign in prop_oneof![Just(1.0), Just(-1.0)]) {
        prop_assume!((ratio - 1.0).abs() > 1e-9);
        let target = JointVector::from_element(0.1);
        let peak = sign * ratio * drift_threshold(joint);
        // Smooth excursion out to `peak` and back.
        let n = 200;
        let mut log = SimLog::default();
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let mut q = target;
            q[joint] += peak * (std::f64::consts::PI * t).sin();
            log.t.push(t);
            log.q.push(q);
            log.qd.push(JointVector::zeros());
            log.tau.push(JointVector::zeros());
        }
        prop_assert_eq!(is_drift(&log.max_deviation(&target)), ratio > 1.0);
    }

    #[test]
    fn rest_ends_have_zero_velocity(coeffs in proptest::collection::vec(-0.3f64..0.3, 2 * N_JOINTS * 4)) {
        let mut traj = FourierTrajectory::zero(2.0 * std::f64::consts::PI * 0.1, 4, [0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0]);
        for j in 0..N_JOINTS {
            for k in 0..4 {
                traj.sin_coeffs[j][k] = coeffs[j * 8 + k];
                traj.cos_coeffs[j][k] = coeffs[j * 8 + 4 + k];
            }
        }
        traj.enforce_rest_ends();
        for t in [0.0, traj.duration] {
            prop_assert_eq!(traj.evaluate(t).unwrap().qd, JointVector::zeros());
        }
    }
}
