//! Parallel seam vs. sequential fallback on the three hot paths: oracle
//! trajectory generation, planner candidate scoring, and learned-model
//! rollout. Both sides run the identical payload closure; only the map
//! seam differs, so the gap is pure scheduling cost or speedup. On a
//! single-core box expect the parallel rows to trail slightly — that
//! overhead is what the sequential fallback exists to avoid.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hwm_core::learning::{train, DynamicsKind, ModelConfig, TrainConfig, TrainedModel};
use hwm_core::par;
use hwm_core::phase::{ActionSequence, FlatState};
use hwm_core::planning::{
    evaluate_candidates, sample_candidates, EvalSpace, PlanMethod, PlanModel, PlannerConfig,
    PointMassPlanModel, UtilitySpec,
};
use hwm_core::rng;
use hwm_core::worlds::{
    generate_dataset, make_world, world_rollout, ActionPolicy, WorldKind, WorldSpec,
};
use std::hint::black_box;
use std::time::Duration;

fn bench_oracle_rollouts(c: &mut Criterion) {
    let world = make_world(&WorldSpec::noiseless(WorldKind::Pendulum {
        m: 1.0,
        l: 1.0,
        g: 1.0,
    }))
    .unwrap();
    let indices: Vec<u64> = (0..16).collect();
    let payload = |i: &u64| {
        let mut rng = rng::seeded(rng::derive(*i, 1));
        let z0 = FlatState::new(vec![1.5, 0.2]).unwrap();
        let actions = ActionSequence::zeros(64, 0, 0.05).unwrap();
        world_rollout(&world, &z0, &actions, &mut rng).unwrap()
    };
    let mut g = c.benchmark_group("oracle_rollouts");
    g.bench_with_input(BenchmarkId::new("parallel", 16), &indices, |b, idx| {
        b.iter(|| black_box(par::map_collect(idx, payload)))
    });
    g.bench_with_input(BenchmarkId::new("serial", 16), &indices, |b, idx| {
        b.iter(|| black_box(par::map_collect_seq(idx, payload)))
    });
    g.finish();
}

fn bench_candidate_scoring(c: &mut Criterion) {
    let model = PointMassPlanModel { dt: 0.1 };
    let cfg = PlannerConfig {
        method: PlanMethod::Shooting { candidates: 256 },
        horizon: 20,
        bounds_lo: vec![-1.0],
        bounds_hi: vec![1.0],
        seed: 7,
    };
    let candidates = sample_candidates(&cfg, model.action_dim(), model.dt()).unwrap();
    let utility = UtilitySpec::goal_diag(vec![0.5, 0.0], &[1.0, 0.1], EvalSpace::Latent);
    let z0 = [-0.5, 0.0];
    // Same scoring rule as the library path, spelled out so the serial
    // seam can run the identical closure.
    let score = |cand: &ActionSequence| {
        let mut z = z0.to_vec();
        let mut total = 0.0;
        for k in 0..cand.horizon() {
            match model.step(&z, cand.row(k)) {
                Ok(next) if next.iter().all(|v| v.is_finite()) => z = next,
                _ => return f64::NEG_INFINITY,
            }
            match utility.stage(&model, &z) {
                Some(u) if u.is_finite() => total += u,
                _ => return f64::NEG_INFINITY,
            }
        }
        total
    };
    let mut g = c.benchmark_group("candidate_scoring");
    g.bench_with_input(BenchmarkId::new("parallel", 256), &candidates, |b, cs| {
        b.iter(|| black_box(par::map_collect(cs, score)))
    });
    g.bench_with_input(BenchmarkId::new("serial", 256), &candidates, |b, cs| {
        b.iter(|| black_box(par::map_collect_seq(cs, score)))
    });
    g.bench_with_input(
        BenchmarkId::new("library_path", 256),
        &candidates,
        |b, cs| b.iter(|| black_box(evaluate_candidates(&model, &z0, cs, &utility))),
    );
    g.finish();
}

fn bench_learned_rollout(c: &mut Criterion) {
    let world = make_world(&WorldSpec::noiseless(WorldKind::DoubleIntegrator)).unwrap();
    let ds = generate_dataset(
        &world,
        4,
        16,
        0.1,
        &ActionPolicy::UniformRandom { scale: 1.0 },
        3,
    )
    .unwrap();
    let mut mc = ModelConfig::new(1, 1, 0.1);
    mc.energy_hidden = vec![16, 16];
    let tc = TrainConfig {
        steps: 0,
        horizon: 2,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let (ckpt, _) = train(DynamicsKind::PortHamiltonian, &mc, &tc, &ds).unwrap();
    let model: TrainedModel = ckpt.model;
    let starts: Vec<Vec<f64>> = (0..64)
        .map(|i| vec![0.01 * i as f64, -0.005 * i as f64])
        .collect();
    let payload = |z0: &Vec<f64>| {
        let mut z = z0.clone();
        for _ in 0..10 {
            z = model.predict_latent(&z, &[0.1]).unwrap();
        }
        z
    };
    let mut g = c.benchmark_group("learned_rollout");
    g.bench_with_input(BenchmarkId::new("parallel", 64), &starts, |b, zs| {
        b.iter(|| black_box(par::map_collect(zs, payload)))
    });
    g.bench_with_input(BenchmarkId::new("serial", 64), &starts, |b, zs| {
        b.iter(|| black_box(par::map_collect_seq(zs, payload)))
    });
    g.finish();
}

fn configured() -> Criterion {
    Criterion::default()
        .sample_size(10)
        .warm_up_time(Duration::from_millis(500))
        .measurement_time(Duration::from_secs(2))
}

criterion_group! {
    name = benches;
    config = configured();
    targets = bench_oracle_rollouts, bench_candidate_scoring, bench_learned_rollout
}
criterion_main!(benches);
