use hwm_core::learning::{evaluate_rollout_error, train, DynamicsKind, ModelConfig, TrainConfig};
use hwm_core::worlds::{generate_dataset, make_world, ActionPolicy, WorldKind, WorldSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let w = make_world(&WorldSpec::noiseless(WorldKind::Pendulum { m: 1.0, l: 1.0, g: 1.0 })).unwrap();
    let train_ds = generate_dataset(&w, 50, 201, 0.05, &ActionPolicy::Zero, 0).unwrap();
    let held = generate_dataset(&w, 10, 201, 0.05, &ActionPolicy::Zero, 1000).unwrap();
    // Held-out initial amplitudes for context
    for (i, t) in held.trajectories.iter().enumerate() {
        let z0 = &t.truth[0];
        print!("traj{i}: q0={:+.2} p0={:+.2}  ", z0.as_slice()[0], z0.as_slice()[1]);
    }
    println!();
    let mc = ModelConfig::new(1, 1, 0.05);
    let tc = TrainConfig { steps, lambda_res: 1.0, seed: 0, ..TrainConfig::default() };
    for kind in [DynamicsKind::PortHamiltonian, DynamicsKind::Baseline] {
        let (ck, _) = train(kind, &mc, &tc, &train_ds).unwrap();
        let errs = evaluate_rollout_error(&ck.model, &held, &[50, 200]).unwrap();
        println!("{kind:?}:");
        for i in 0..10 {
            println!("  traj{i}: @50={:.3e} @200={:.3e}", errs.per_traj[[i, 0]], errs.per_traj[[i, 1]]);
        }
    }
}
