use mount_codesign::controller::{
    cem_schedule, episode_set, evaluate_gains, mix_seed, score_design, tune_policy, CemSettings, ControllerError, ControllerGains,
    ScoreSettings, GAIN_BOUNDS,
};
use mount_codesign::feasibility::CheckOptions;
use mount_codesign::robot::bundled;
use mount_codesign::sim::{TaskConfig, TaskId};
use mount_codesign::DesignParams;
use proptest::prelude::*;

const TASKS: [TaskId; 2] = [TaskId::RandomGoal, TaskId::Drawer];

fn small_cem() -> CemSettings {
    CemSettings {
        population: 4,
        max_iterations: 2,
        episodes_per_candidate: 2,
        ..Default::default()
    }
}

#[test]
fn schedule_examples() {
    let s = CemSettings::default();
    assert_eq!(cem_schedule(8, &s).unwrap(), (1, 1));
    assert_eq!(cem_schedule(24, &s).unwrap(), (1, 3));
    assert_eq!(cem_schedule(80, &s).unwrap(), (3, 3));
    assert_eq!(cem_schedule(200, &s).unwrap(), (8, 3));
    assert_eq!(cem_schedule(1000, &s).unwrap(), (8, 15));
    assert_eq!(
        cem_schedule(7, &s),
        Err(ControllerError::BudgetTooSmall { budget: 7, population: 8 })
    );
}

proptest! {
    #[test]
    fn schedule_never_overspends(budget in 1usize..5000, pop in 1usize..20, per in 1usize..6, iters in 1usize..12) {
        let s = CemSettings { population: pop, episodes_per_candidate: per, max_iterations: iters, ..Default::default() };
        match cem_schedule(budget, &s) {
            Ok((it, e)) => {
                prop_assert!(it >= 1 && it <= iters && e >= 1);
                prop_assert!(it * pop * e <= budget);
            }
            Err(_) => prop_assert!(budget < pop),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn tuned_gains_stay_in_bounds(seed in 0u64..10_000) {
        let robot = bundled("fmm_franka").unwrap();
        let tuned = tune_policy(&robot, &TASKS, 16, seed, &TaskConfig::default(), &small_cem()).unwrap();
        prop_assert!(tuned.gains.is_valid());
        for (x, (lo, hi)) in tuned.gains.as_array().iter().zip(GAIN_BOUNDS) {
            prop_assert!(*x >= lo && *x <= hi);
        }
    }
}

#[test]
fn tuning_never_loses_to_the_initial_gains() {
    let robot = bundled("fmm_franka").unwrap();
    let cfg = TaskConfig::default();
    let cem = small_cem();
    for seed in [1, 2, 3] {
        let tuned = tune_policy(&robot, &TASKS, 16, seed, &cfg, &cem).unwrap();
        let (_, per) = cem_schedule(16, &cem).unwrap();
        let episodes = episode_set(&TASKS, per, mix_seed(seed, 0x7EA1), &cfg).unwrap();
        let start = evaluate_gains(&robot, &episodes, &cem.initial).unwrap();
        assert!(tuned.fitness >= start, "seed {seed}: {} < {start}", tuned.fitness);
        let again = evaluate_gains(&robot, &episodes, &tuned.gains).unwrap();
        assert!((again - tuned.fitness).abs() < 1e-12);
        assert_eq!(tuned.budget_used, 16);
    }
}

#[test]
fn tuning_is_deterministic() {
    let robot = bundled("fmm_franka").unwrap();
    let cfg = TaskConfig::default();
    let a = tune_policy(&robot, &TASKS, 16, 9, &cfg, &small_cem()).unwrap();
    assert_eq!(a, tune_policy(&robot, &TASKS, 16, 9, &cfg, &small_cem()).unwrap());
}

#[test]
fn tuning_needs_tasks() {
    let robot = bundled("fmm_franka").unwrap();
    let r = tune_policy(&robot, &[], 16, 0, &TaskConfig::default(), &small_cem());
    assert_eq!(r, Err(ControllerError::NoTasks));
}

#[test]
fn score_counts_tuning_and_validation_episodes() {
    let base = bundled("fmm_franka").unwrap();
    let settings = ScoreSettings {
        episodes_per_task: 5,
        cem: small_cem(),
        ..Default::default()
    };
    let s = score_design(&base, &DesignParams::tabletop(), &settings, 16, 4).unwrap();
    assert!(s.feasible);
    assert_eq!(s.episodes, 16 + 2 * 5);
    let mean = s.rates.iter().map(|r| r.successes as f64 / 5.0).sum::<f64>() / 2.0;
    assert!((s.score - mean).abs() < 1e-12);
    assert!(s.gains.is_some());
    assert_eq!(s, score_design(&base, &DesignParams::tabletop(), &settings, 16, 4).unwrap());
}

#[test]
fn tipping_design_scores_zero_without_simulating() {
    let base = bundled("fmm_franka").unwrap();
    let settings = ScoreSettings {
        feasibility: CheckOptions {
            payload_kg: Some(20.0),
            external_torque: Some(30.0),
            ..Default::default()
        },
        ..Default::default()
    };
    let omega: DesignParams = "arm_pitch=90deg,forward_x=0.15".parse().unwrap();
    let s = score_design(&base, &omega, &settings, 80, 0).unwrap();
    assert!(!s.feasible);
    assert_eq!(s.score, 0.0);
    assert_eq!(s.episodes, 0);
    assert!(s.gains.is_none());
    assert!(s.rates.iter().all(|r| r.episodes == 0));
}

#[test]
fn default_gains_are_valid() {
    assert!(ControllerGains::default().is_valid());
}
