//! Cross-module flows through the public API only: worlds feed training,
//! checkpoints feed evaluation and planning, and everything composes the
//! way an external caller would wire it.

use hwm_core::diagnostics::compare_models;
use hwm_core::learning::{
    evaluate_rollout_error, init_model, parameters, set_parameters, train, DynamicsKind,
    ModelConfig, TrainConfig,
};
use hwm_core::planning::{mpc_run, EvalSpace, PlanMethod, PlannerConfig, PointMassPlanModel, UtilitySpec};
use hwm_core::worlds::{generate_dataset, make_world, ActionPolicy, WorldKind, WorldSpec};
use ndarray::s;

fn pendulum_data(n: usize, horizon: usize, seed: u64) -> hwm_core::worlds::Dataset {
    let w = make_world(&WorldSpec::noiseless(WorldKind::Pendulum {
        m: 1.0,
        l: 1.0,
        g: 1.0,
    }))
    .unwrap();
    generate_dataset(&w, n, horizon, 0.05, &ActionPolicy::Zero, seed).unwrap()
}

fn tiny_cfg() -> (ModelConfig, TrainConfig) {
    let mc = ModelConfig {
        energy_hidden: vec![4],
        enc_hidden: vec![4],
        dec_hidden: vec![4],
        ext_hidden: vec![4],
        ..ModelConfig::new(1, 1, 0.05)
    };
    let tc = TrainConfig {
        steps: 60,
        batch_size: 4,
        horizon: 4,
        seed: 7,
        ..TrainConfig::default()
    };
    (mc, tc)
}

#[test]
fn pendulum_pipeline_trains_scores_and_compares_both_kinds() {
    let train_ds = pendulum_data(6, 16, 0);
    let held = pendulum_data(3, 16, 1000);
    let (mc, tc) = tiny_cfg();

    let (hwm, hwm_log) = train(DynamicsKind::PortHamiltonian, &mc, &tc, &train_ds).unwrap();
    let (base, _) = train(DynamicsKind::Baseline, &mc, &tc, &train_ds).unwrap();
    assert_eq!(hwm_log.records.len(), tc.steps);

    let horizons = [1, 2, 5, 10];
    let errs = evaluate_rollout_error(&hwm.model, &held, &horizons).unwrap();
    assert_eq!(errs.mean.len(), horizons.len());
    assert!(errs.mean.iter().all(|e| e.is_finite() && *e >= 0.0));

    let report = compare_models(&hwm, &base, &held, &horizons, &[2, 4], Some(&train_ds)).unwrap();
    report.validate().unwrap();
    let names: Vec<&str> = report.series.iter().map(|s| s.name.as_str()).collect();
    assert!(names.iter().any(|n| n.contains("rollout_error")));
    assert!(names.iter().any(|n| n.contains("data_efficiency")));
    assert!(report.provenance.seeds.contains(&held.seed));
    assert!(report.provenance.seeds.contains(&tc.seed));
}

#[test]
fn checkpoints_rebuild_into_the_identical_predictor() {
    let ds = pendulum_data(4, 12, 3);
    let (mc, tc) = tiny_cfg();
    let (ck, _) = train(DynamicsKind::PortHamiltonian, &mc, &tc, &ds).unwrap();

    // Rebuild from the flat parameter vector the way a checkpoint reader
    // would, then demand bit-identical predictions.
    let stats = (
        ds.obs_mean.clone(),
        ds.obs_std.clone(),
    );
    let mut fresh = init_model(
        DynamicsKind::PortHamiltonian,
        &mc,
        ds.obs_dim(),
        ds.action_dim(),
        stats.0,
        stats.1,
        tc.seed,
    )
    .unwrap();
    set_parameters(&mut fresh, &parameters(&ck.model));

    let window = ds.trajectories[0].observations.slice(s![0..mc.window, ..]);
    let z_a = ck.model.encode_window(window).unwrap();
    let z_b = fresh.encode_window(window).unwrap();
    assert_eq!(z_a.as_slice(), z_b.as_slice());

    let a0 = vec![0.0; ds.action_dim()];
    let step_a = ck.model.predict_latent(z_a.as_slice(), &a0).unwrap();
    let step_b = fresh.predict_latent(z_b.as_slice(), &a0).unwrap();
    assert_eq!(step_a, step_b);
    assert_eq!(
        ck.model.decode_raw(&step_a).unwrap(),
        fresh.decode_raw(&step_b).unwrap()
    );
}

#[test]
fn learned_models_plug_into_the_planner() {
    let spec = WorldSpec::noiseless(WorldKind::DoubleIntegrator);
    let w = make_world(&spec).unwrap();
    let ds = generate_dataset(
        &w,
        6,
        14,
        0.05,
        &ActionPolicy::UniformRandom { scale: 1.0 },
        5,
    )
    .unwrap();
    let (mc, tc) = tiny_cfg();
    let (ck, _) = train(DynamicsKind::PortHamiltonian, &mc, &tc, &ds).unwrap();

    let cfg = PlannerConfig {
        method: PlanMethod::Shooting { candidates: 16 },
        horizon: 4,
        bounds_lo: vec![-1.0],
        bounds_hi: vec![1.0],
        seed: 0,
    };
    let utility = UtilitySpec::goal_diag(vec![0.5, 0.0], &[1.0, 0.1], EvalSpace::Latent);
    let run = mpc_run(&w, &ck.model, &utility, &cfg, 5, 9).unwrap();
    assert_eq!(run.states.len(), 6);
    assert_eq!(run.executed.horizon(), 5);
    for k in 0..5 {
        let a = run.executed.row(k)[0];
        assert!((-1.0..=1.0).contains(&a));
        assert!(run.plans[k].best_utility.is_finite());
    }
}

#[test]
fn analytic_point_mass_control_reaches_the_goal() {
    let w = make_world(&WorldSpec::noiseless(WorldKind::DoubleIntegrator)).unwrap();
    let model = PointMassPlanModel { dt: 0.05 };
    let cfg = PlannerConfig {
        method: PlanMethod::Shooting { candidates: 64 },
        horizon: 20,
        bounds_lo: vec![-1.0],
        bounds_hi: vec![1.0],
        seed: 0,
    };
    let utility = UtilitySpec::goal_diag(vec![0.5, 0.0], &[1.0, 0.1], EvalSpace::Latent);
    let run = mpc_run(&w, &model, &utility, &cfg, 100, 0).unwrap();
    let q = run.states.last().unwrap().as_slice()[0];
    assert!(
        (q - 0.5).abs() <= 0.05,
        "controller ended at q = {q}, wanted 0.5 +/- 0.05"
    );
}

#[test]
fn every_world_kind_produces_a_coherent_dataset() {
    let kinds = [
        WorldKind::Pendulum { m: 1.0, l: 1.0, g: 1.0 },
        WorldKind::SpringChain { n: 3, k: 1.0, m: 1.0, rest_len: 1.0 },
        WorldKind::TwoBody { m1: 1.0, m2: 1.0, g: 1.0 },
        WorldKind::DampedDrivenOscillator { k: 1.0, m: 1.0, c: 0.1 },
        WorldKind::DoubleIntegrator,
    ];
    for kind in kinds {
        let w = make_world(&WorldSpec::noiseless(kind)).unwrap();
        let policy = if w.action_dim > 0 {
            ActionPolicy::UniformRandom { scale: 0.5 }
        } else {
            ActionPolicy::Zero
        };
        let ds = generate_dataset(&w, 2, 10, 0.02, &policy, 42).unwrap();
        assert_eq!(ds.obs_dim(), w.obs_dim());
        assert_eq!(ds.action_dim(), w.action_dim);
        assert_eq!(ds.horizon(), 10);
        assert_eq!(ds.trajectories.len(), 2);
        for traj in &ds.trajectories {
            assert!(traj.observations.iter().all(|v| v.is_finite()));
            assert!(traj.actions.as_array().iter().all(|v| v.abs() <= 0.5));
        }
        assert!(ds.obs_std.iter().all(|s| *s > 0.0));
    }
}
