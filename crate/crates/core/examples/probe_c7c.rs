use hwm_core::learning::{train, DynamicsKind, ModelConfig, TrainConfig, TrainedModel};
use hwm_core::worlds::{generate_dataset, make_world, ActionPolicy, WorldKind, WorldSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(6000);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0);
    let w = make_world(&WorldSpec::noiseless(WorldKind::Pendulum { m: 1.0, l: 1.0, g: 1.0 })).unwrap();
    let train_ds = generate_dataset(&w, 50, 201, 0.05, &ActionPolicy::Zero, seed).unwrap();
    let held = generate_dataset(&w, 10, 201, 0.05, &ActionPolicy::Zero, seed + 1000).unwrap();
    let mc = ModelConfig::new(1, 1, 0.05);
    let tc = TrainConfig { steps, lambda_res: 1.0, seed, ..TrainConfig::default() };
    let (ck, _) = train(DynamicsKind::PortHamiltonian, &mc, &tc, &train_ds).unwrap();
    let model = &ck.model;
    // roll the worst trajectory by hand
    for ti in [0usize, 3, 7] {
        let t = &held.trajectories[ti];
        let k = model.window();
        let window = t.observations.slice(ndarray::s![0..k, ..]);
        let mut z = model.encode_window(window).unwrap().as_slice().to_vec();
        let e0 = match model { TrainedModel::PortHamiltonian(m) => m.dynamics.hamiltonian.eval_flat(&z).unwrap(), _ => 0.0 };
        println!("traj{ti} q0={:+.2} p0={:+.2} latent0=({:+.3},{:+.3}) E0={:+.4}", t.truth[0].as_slice()[0], t.truth[0].as_slice()[1], z[0], z[1], e0);
    for step in 1..=200 {
            z = model.predict_latent(&z, &[]).unwrap();
            if step % 50 == 0 {
                let o = model.decode_raw(&z).unwrap();
                let truth = t.observations.row(k - 1 + step);
                let e = match model { TrainedModel::PortHamiltonian(m) => m.dynamics.hamiltonian.eval_flat(&z).unwrap(), _ => 0.0 };
                println!("  step {step}: pred=({:+.2},{:+.2},{:+.2}) true=({:+.2},{:+.2},{:+.2}) |z|=({:+.3},{:+.3}) E={:+.4}",
                    o[0], o[1], o[2], truth[0], truth[1], truth[2], z[0], z[1], e);
            }
        }
    }
}
