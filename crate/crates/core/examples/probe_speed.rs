use hwm_core::learning::{train, DynamicsKind, ModelConfig, TrainConfig};
use hwm_core::worlds::{generate_dataset, make_world, ActionPolicy, WorldKind, WorldSpec};
use std::time::Instant;

fn main() {
    let w = make_world(&WorldSpec::noiseless(WorldKind::Pendulum { m: 1.0, l: 1.0, g: 1.0 })).unwrap();
    let t0 = Instant::now();
    let ds = generate_dataset(&w, 50, 201, 0.05, &ActionPolicy::Zero, 0).unwrap();
    println!("generate 50x201: {:.2?}", t0.elapsed());
    let mc = ModelConfig::new(1, 1, 0.05);
    let tc = TrainConfig { steps: 20, lambda_res: 1.0, seed: 0, ..TrainConfig::default() };
    for kind in [DynamicsKind::PortHamiltonian, DynamicsKind::Baseline] {
        let t = Instant::now();
        let (_ck, _log) = train(kind, &mc, &tc, &ds).unwrap();
        let dt = t.elapsed();
        println!("{kind:?}: 20 steps in {:.2?} -> {:.1} ms/step", dt, dt.as_secs_f64() * 1000.0 / 20.0);
    }
}
