use proptest::prelude::*;
use psmgc::dynamics::{gravity_torque, inverse_dynamics};
use psmgc::excitation::{optimize_trajectory, ExcitationOptions, FourierTrajectory, JointLimits};
use psmgc::gravsim::{
    drift_test, gc_torque, lb_ub_search, random_targets, simulate, DriftConfig, GravityCompensation, SimConfig,
    BRACKET_RESOLUTION, REPORTED_JOINTS,
};
use psmgc::identification::{
    assemble, check_constraints, model_hulls, solve_constrained, DataSource, DatasetMeta, IdentDataset, IdentResult, Sample,
    SolveOptions, DEFAULT_M_MIN,
};
use psmgc::model::{example_psm, InertialMode};
use psmgc::{ChainModel, JointVector, ParamLayout, ParamVector, RobotState, N_JOINTS};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

struct Setup {
    model: ChainModel,
    layout: ParamLayout,
    truth: ParamVector,
    data: IdentDataset,
}

fn setup() -> &'static Setup {
    static CELL: OnceLock<Setup> = OnceLock::new();
    CELL.get_or_init(|| {
        let model = example_psm();
        let layout = ParamLayout::for_model(&model, InertialMode::Gravity);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = ParamVector::sample_physical(&model, InertialMode::Gravity, &mut rng);
        let opts = ExcitationOptions {
            budget: 400,
            seed: 5,
            ..ExcitationOptions::default()
        };
        let traj = optimize_trajectory(&model, &layout, &JointLimits::default(), &opts).unwrap().trajectory;
        let data = sample(&model, &truth, &traj);
        Setup {
            model,
            layout,
            truth,
            data,
        }
    })
}

fn sample(model: &ChainModel, truth: &ParamVector, traj: &FourierTrajectory) -> IdentDataset {
    let samples = traj
        .sample_times(1000)
        .into_iter()
        .map(|t| {
            let s = traj.evaluate(t).unwrap();
            Sample {
                t,
                q: s.q,
                tau: inverse_dynamics(model, &s, truth).unwrap(),
                qd: Some(s.qd),
                qdd: Some(s.qdd),
            }
        })
        .collect();
    IdentDataset {
        samples,
        meta: DatasetMeta {
            sample_rate: 100.0,
            source: DataSource::Simulated,
            noise: "none".into(),
        },
    }
}

fn solve(s: &Setup, data: &IdentDataset) -> (IdentResult, f64) {
    let (w, t) = assemble(&s.model, &s.layout, data).unwrap();
    let res = solve_constrained(&w, &t, &s.layout, &model_hulls(&s.model), &SolveOptions::default()).unwrap();
    let r = &w * &res.params.values - &t;
    let per_row = r.norm_squared() / r.len() as f64;
    (res, per_row)
}

#[test]
fn solution_is_stationary_and_consistent() {
    let s = setup();
    let (res, _) = solve(s, &s.data);
    assert!(res.kkt_residual < 1e-6, "{}", res.kkt_residual);
    assert!(check_constraints(&res.params, &model_hulls(&s.model), DEFAULT_M_MIN).is_empty());
}

#[test]
fn gravity_prediction_is_exact_on_noiseless_data() {
    let s = setup();
    let (res, _) = solve(s, &s.data);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let limits = JointLimits::default();
    for _ in 0..100 {
        let q = JointVector::from_fn(|j, _| rng.random_range(limits.q_min[j]..limits.q_max[j]));
        let g = gravity_torque(&s.model, &q, &s.truth, true).unwrap();
        let e = gravity_torque(&s.model, &q, &res.params, true).unwrap();
        assert!((g - e).amax() < 1e-4, "{}", (g - e).amax());
    }
}

#[test]
fn more_rows_do_not_raise_the_mean_residual() {
    let s = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let mut idx: Vec<usize> = (0..s.data.samples.len()).collect();
        idx.shuffle(&mut rng);
        let mut part: Vec<usize> = idx[..600].to_vec();
        part.sort_unstable();
        let subset = IdentDataset {
            samples: part.iter().map(|&i| s.data.samples[i].clone()).collect(),
            meta: s.data.meta.clone(),
        };
        let (_, sub) = solve(s, &subset);
        let (_, all) = solve(s, &s.data);
        assert!(all <= sub + 1e-12, "{all} vs {sub}");
    }
}

#[test]
fn simulation_is_bit_reproducible() {
    let s = setup();
    let q = random_targets(&JointLimits::default(), 1, &mut ChaCha8Rng::seed_from_u64(2))[0];
    let plant = s.truth.to_full_mode(&s.model, 1e-6);
    let run = || {
        let mut gc = GravityCompensation::new(&s.model, &s.truth).unwrap();
        let mut x0 = RobotState::at_rest(q);
        x0.qd[0] = 0.05;
        simulate(&s.model, &plant, &mut gc, &x0, &SimConfig::default()).unwrap()
    };
    let (a, b) = (run(), run());
    assert!(a.len() > 1);
    assert_eq!(a, b);
}

#[test]
fn compensation_beats_pd_at_most_poses() {
    let s = setup();
    let targets = random_targets(&JointLimits::default(), 5, &mut ChaCha8Rng::seed_from_u64(42));
    let reports = drift_test(&s.model, &s.truth, &s.truth, &targets, &DriftConfig::default());
    let better = reports
        .iter()
        .map(|r| r.as_ref().unwrap())
        .filter(|r| r.joints.iter().all(|j| j.gc_pos_err <= j.pd_pos_err))
        .count();
    assert!(better >= 4, "{better} of 5");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn compensation_lies_in_the_bracket(seed in 0u64..10_000) {
        let model = example_psm();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mode = if seed % 2 == 0 { InertialMode::Gravity } else { InertialMode::Full };
        let plant = ParamVector::sample_physical(&model, mode, &mut rng);
        let plant = if mode == InertialMode::Gravity { plant.to_full_mode(&model, 1e-6) } else { plant };
        let q = random_targets(&JointLimits::default(), 1, &mut rng)[0];
        let g = gc_torque(&model, &plant, &q).unwrap();
        for j in 0..REPORTED_JOINTS.min(N_JOINTS) {
            let (lb, ub) = lb_ub_search(&model, &plant, &q, j, &SimConfig::default()).unwrap();
            let (lo, hi) = (lb.min(ub), lb.max(ub));
            prop_assert!(g[j] >= lo - BRACKET_RESOLUTION && g[j] <= hi + BRACKET_RESOLUTION, "joint {}: {} not in [{}, {}]", j + 1, g[j], lo, hi);
        }
    }
}
