use hwm_core::learning::{evaluate_rollout_error, train, DynamicsKind, ModelConfig, TrainConfig};
use hwm_core::worlds::{generate_dataset, make_world, ActionPolicy, WorldKind, WorldSpec};
use std::time::Instant;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0);
    let lambda_lat: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let conservative: bool = args.get(4).map(|s| s == "conservative").unwrap_or(false);
    let w = make_world(&WorldSpec::noiseless(WorldKind::Pendulum { m: 1.0, l: 1.0, g: 1.0 })).unwrap();
    let train_ds = generate_dataset(&w, 50, 201, 0.05, &ActionPolicy::Zero, seed).unwrap();
    let held = generate_dataset(&w, 10, 201, 0.05, &ActionPolicy::Zero, seed + 1000).unwrap();
    let mut mc = ModelConfig::new(1, 1, 0.05);
    if conservative {
        mc.use_dissipation = false;
        mc.use_input_gain = false;
    }
    let tc = TrainConfig { steps, lambda_res: 1.0, lambda_lat, seed, ..TrainConfig::default() };
    for kind in [DynamicsKind::PortHamiltonian, DynamicsKind::Baseline] {
        let t = Instant::now();
        let (ck, log) = train(kind, &mc, &tc, &train_ds).unwrap();
        let errs = evaluate_rollout_error(&ck.model, &held, &[50, 100, 200]).unwrap();
        let at200: Vec<f64> = (0..held.trajectories.len()).map(|i| errs.per_traj[[i, 2]]).collect();
        let means: Vec<String> = errs.mean.iter().map(|v| format!("{v:.3e}")).collect();
        println!(
            "{kind:?} seed {seed} steps {steps}: {:.1?}  final pred loss {:.3e}  mean@[50,100,200]={}  median@200={:.4e}",
            t.elapsed(),
            log.records.last().map(|r| r.prediction).unwrap_or(f64::NAN),
            means.join(","),
            median(at200)
        );
    }
}
