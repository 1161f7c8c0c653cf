//! Measures what the structured model is supposed to buy: bounded energy
//! error, a symplectic step map, time reversibility, and better long-horizon
//! prediction than an unconstrained net of the same size.
//!
//! Structural checks deliberately avoid the crate's own gradient engine:
//! the symplecticity defect builds its Jacobian by central finite
//! differences of the step map, so it would catch a wrong gradient rather
//! than inherit it. Reports are pure functions of logged data — rebuilding
//! any metric from the same inputs reproduces the reported value.

use crate::energy::Hamiltonian;
use crate::error::HwmError;
use crate::learning::{
    evaluate_rollout_error, parameters, train, Checkpoint, DynamicsKind, TrainedModel,
};
use crate::linalg;
use crate::phase::Trajectory;
use crate::worlds::Dataset;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Central-difference displacement for the step-map Jacobian.
pub const JACOBIAN_FD_EPS: f64 = 1e-6;

/// One named curve. `x` and `y` always have equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Where a report's numbers came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub checkpoints: Vec<String>,
    pub datasets: Vec<String>,
    pub seeds: Vec<u64>,
}

/// Named scalars plus named curves. Scalar order is alphabetical by
/// construction (sorted map), so serialization is stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scalars: BTreeMap<String, f64>,
    pub series: Vec<Series>,
    pub provenance: Provenance,
}

impl MetricsReport {
    /// Shape and finiteness contract: series lengths match, and the only
    /// non-finite value allowed anywhere is `+∞` marking divergence.
    pub fn validate(&self) -> Result<()> {
        for s in &self.series {
            if s.x.len() != s.y.len() {
                return Err(HwmError::DimensionMismatch {
                    context: format!("series '{}' x vs y", s.name),
                    expected: s.x.len(),
                    got: s.y.len(),
                });
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(HwmError::NonFinite {
                    context: format!("series '{}' x axis", s.name),
                });
            }
            if s.y.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
                return Err(HwmError::NonFinite {
                    context: format!("series '{}' values", s.name),
                });
            }
        }
        for (k, v) in &self.scalars {
            if v.is_nan() || *v == f64::NEG_INFINITY {
                return Err(HwmError::NonFinite {
                    context: format!("scalar '{k}'"),
                });
            }
        }
        Ok(())
    }
}

/// Energy along a trajectory, relative to the start: the series
/// `H(z_k) − H(z_0)` against time, plus the largest magnitude normalized
/// by `max(|H(z_0)|, 1e-12)`.
pub fn energy_drift(traj: &Trajectory, h: &Hamiltonian) -> Result<(Series, f64)> {
    let h0 = h.eval_flat(traj.states[0].as_slice())?;
    let mut drift = Vec::with_capacity(traj.states.len());
    let mut max_abs = 0.0f64;
    for state in &traj.states {
        let d = h.eval_flat(state.as_slice())? - h0;
        max_abs = max_abs.max(d.abs());
        drift.push(d);
    }
    let series = Series {
        name: "energy_drift".into(),
        x_label: "time".into(),
        y_label: "H(z_k) - H(z_0)".into(),
        x: traj.times.clone(),
        y: drift,
    };
    Ok((series, max_abs / h0.abs().max(1e-12)))
}

/// How far one application of `step_fn` is from preserving the symplectic
/// form: builds the Jacobian `M` of the step by central finite differences
/// (displacement [`JACOBIAN_FD_EPS`]) and returns the largest entry of
/// `MᵀJM − J`. Exactly zero only for exactly-linear symplectic maps; a
/// symplectic integrator shows the finite-difference floor (~1e-7), a
/// non-symplectic one shows its genuine defect.
pub fn symplecticity_defect<F>(step_fn: F, z: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n2 = z.len();
    if n2 == 0 || n2 % 2 != 0 {
        return Err(HwmError::OddStateLength { len: n2 });
    }
    let eps = JACOBIAN_FD_EPS;
    // Column j of M = ∂step/∂z_j.
    let mut m = vec![vec![0.0; n2]; n2];
    for j in 0..n2 {
        let mut zp = z.to_vec();
        zp[j] += eps;
        let fp = step_fn(&zp)?;
        let mut zm = z.to_vec();
        zm[j] -= eps;
        let fm = step_fn(&zm)?;
        if fp.len() != n2 || fm.len() != n2 {
            return Err(HwmError::DimensionMismatch {
                context: "step map output".into(),
                expected: n2,
                got: fp.len(),
            });
        }
        for i in 0..n2 {
            m[i][j] = (fp[i] - fm[i]) / (2.0 * eps);
        }
    }
    // (MᵀJM)_{ij} = Σ_k M_{ki} (JM)_{kj}; J = [[0, I], [−I, 0]] acting on
    // rows: (JM)_{k} = M_{k+n} for k < n, −M_{k−n} otherwise.
    let n = n2 / 2;
    let jm = |k: usize, j: usize| -> f64 {
        if k < n {
            m[k + n][j]
        } else {
            -m[k - n][j]
        }
    };
    let mut defect = 0.0f64;
    for i in 0..n2 {
        for j in 0..n2 {
            let mut acc = 0.0;
            for k in 0..n2 {
                acc += m[k][i] * jm(k, j);
            }
            let target = if j == i + n {
                1.0
            } else if i == j + n {
                -1.0
            } else {
                0.0
            };
            defect = defect.max((acc - target).abs());
        }
    }
    Ok(defect)
}

/// Distance from the start after `n` steps of `+dt` followed by `n` steps
/// of `−dt`. Zero for `n = 0`; at the round-off floor for time-reversible
/// methods on conservative fields.
pub fn reversibility_defect<F>(step_fn: F, z0: &[f64], dt: f64, n: usize) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    let mut z = z0.to_vec();
    for _ in 0..n {
        z = step_fn(&z, dt)?;
    }
    for _ in 0..n {
        z = step_fn(&z, -dt)?;
    }
    let diff: Vec<f64> = z.iter().zip(z0).map(|(a, b)| a - b).collect();
    Ok(linalg::norm2(&diff))
}

/// Head-to-head comparison of two checkpoints on held-out data:
/// open-loop rollout error against horizon for both, and — when
/// `dataset_sizes` and training data are given — a data-efficiency curve
/// obtained by retraining each model on nested prefixes of the training
/// set and scoring the longest requested horizon on the held-out set.
///
/// The slots are labels: the first checkpoint reports under `hwm_*`, the
/// second under `baseline_*`, whatever their actual kinds (so a checkpoint
/// can be compared against itself). Four series at most; the total point
/// count is `2·|horizons| + 2·|dataset_sizes|`.
pub fn compare_models(
    hwm: &Checkpoint,
    baseline: &Checkpoint,
    held_out: &Dataset,
    horizons: &[usize],
    dataset_sizes: &[usize],
    train_data: Option<&Dataset>,
) -> Result<MetricsReport> {
    if horizons.is_empty() {
        return Err(HwmError::InvalidParams("need at least one horizon".into()));
    }
    let max_h = *horizons.iter().max().unwrap();
    let mut report = MetricsReport::default();

    let rollout_series = |model: &TrainedModel, label: &str| -> Result<Series> {
        let errs = evaluate_rollout_error(model, held_out, horizons)?;
        Ok(Series {
            name: format!("{label}_rollout_error"),
            x_label: "horizon".into(),
            y_label: "mean squared observation error".into(),
            x: horizons.iter().map(|h| *h as f64).collect(),
            y: errs.mean,
        })
    };
    let hwm_rollout = rollout_series(&hwm.model, "hwm")?;
    let base_rollout = rollout_series(&baseline.model, "baseline")?;
    report.scalars.insert(
        "hwm_error_at_max_horizon".into(),
        *hwm_rollout.y.last().unwrap(),
    );
    report.scalars.insert(
        "baseline_error_at_max_horizon".into(),
        *base_rollout.y.last().unwrap(),
    );
    report.scalars.insert(
        "hwm_param_count".into(),
        parameters(&hwm.model).len() as f64,
    );
    report.scalars.insert(
        "baseline_param_count".into(),
        parameters(&baseline.model).len() as f64,
    );
    report.series.push(hwm_rollout);
    report.series.push(base_rollout);

    if !dataset_sizes.is_empty() {
        let Some(train_full) = train_data else {
            return Err(HwmError::InvalidParams(
                "data-efficiency curves need the training dataset".into(),
            ));
        };
        let mut hwm_curve = Vec::with_capacity(dataset_sizes.len());
        let mut base_curve = Vec::with_capacity(dataset_sizes.len());
        for &s in dataset_sizes {
            let subset = train_full.prefix(s)?;
            let (hwm_ck, _) = train(
                kind_of(&hwm.model),
                hwm.model.config(),
                &hwm.train_config,
                &subset,
            )?;
            let (base_ck, _) = train(
                kind_of(&baseline.model),
                baseline.model.config(),
                &baseline.train_config,
                &subset,
            )?;
            let h_err = evaluate_rollout_error(&hwm_ck.model, held_out, &[max_h])?;
            let b_err = evaluate_rollout_error(&base_ck.model, held_out, &[max_h])?;
            hwm_curve.push(h_err.mean[0]);
            base_curve.push(b_err.mean[0]);
        }
        let x: Vec<f64> = dataset_sizes.iter().map(|s| *s as f64).collect();
        report.series.push(Series {
            name: "hwm_data_efficiency".into(),
            x_label: "training trajectories".into(),
            y_label: format!("held-out error at horizon {max_h}"),
            x: x.clone(),
            y: hwm_curve,
        });
        report.series.push(Series {
            name: "baseline_data_efficiency".into(),
            x_label: "training trajectories".into(),
            y_label: format!("held-out error at horizon {max_h}"),
            x,
            y: base_curve,
        });
    }

    report.provenance = Provenance {
        checkpoints: vec![
            format!(
                "hwm: train seed {}, dataset seed {}",
                hwm.train_seed, hwm.dataset_seed
            ),
            format!(
                "baseline: train seed {}, dataset seed {}",
                baseline.train_seed, baseline.dataset_seed
            ),
        ],
        datasets: vec![format!("held-out: seed {}", held_out.seed)],
        seeds: vec![hwm.train_seed, baseline.train_seed, held_out.seed],
    };
    report.validate()?;
    Ok(report)
}

fn kind_of(model: &TrainedModel) -> DynamicsKind {
    model.kind()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Integrator, PortHamiltonianModel};
    use crate::energy::AnalyticKind;
    use crate::learning::{train, ModelConfig, TrainConfig};
    use crate::phase::{ActionSequence, FlatState};
    use crate::worlds::{
        generate_dataset, make_world, world_rollout, ActionPolicy, WorldKind, WorldSpec,
    };
    use ndarray::Array2;

    fn oscillator_model() -> PortHamiltonianModel {
        PortHamiltonianModel::conservative(Hamiltonian::Analytic(
            AnalyticKind::HarmonicOscillator { k: 1.0, m: 1.0 },
        ))
    }

    #[test]
    fn constant_trajectory_has_zero_drift() {
        let h = Hamiltonian::Analytic(AnalyticKind::HarmonicOscillator { k: 1.0, m: 1.0 });
        let states = vec![FlatState::new(vec![0.3, -0.4]).unwrap(); 5];
        let actions = ActionSequence::zeros(4, 0, 0.1).unwrap();
        let traj = Trajectory::from_states(states, actions).unwrap();
        let (series, max_rel) = energy_drift(&traj, &h).unwrap();
        assert!(series.y.iter().all(|d| *d == 0.0));
        assert_eq!(max_rel, 0.0);
        assert_eq!(series.x.len(), series.y.len());
    }

    #[test]
    fn drift_is_recomputable_from_the_trajectory() {
        // Reports are pure functions of logged data: rebuild the series by
        // hand and compare to 1e-12.
        let m = oscillator_model();
        let actions = ActionSequence::zeros(50, 0, 0.05).unwrap();
        let traj = m
            .rollout(&FlatState::new(vec![1.0, 0.0]).unwrap(), &actions, Integrator::Leapfrog)
            .unwrap();
        let h = Hamiltonian::Analytic(AnalyticKind::HarmonicOscillator { k: 1.0, m: 1.0 });
        let (series, _) = energy_drift(&traj, &h).unwrap();
        let h0 = h.eval_flat(traj.states[0].as_slice()).unwrap();
        for (k, state) in traj.states.iter().enumerate() {
            let manual = h.eval_flat(state.as_slice()).unwrap() - h0;
            assert!((series.y[k] - manual).abs() <= 1e-12);
        }
    }

    #[test]
    fn oracle_rollout_drift_stays_below_the_fidelity_bound() {
        // The ground-truth integrator itself, measured with the same
        // instrument used on learned models: ≤ 1e-6 relative over t = 100.
        let world = make_world(&WorldSpec::noiseless(WorldKind::Pendulum {
            m: 1.0,
            l: 1.0,
            g: 1.0,
        }))
        .unwrap();
        let z0 = FlatState::new(vec![2.0, 0.5]).unwrap();
        let actions = ActionSequence::zeros(1000, 0, 0.1).unwrap();
        let mut rng = crate::rng::seeded(0);
        let traj = world_rollout(&world, &z0, &actions, &mut rng).unwrap();
        let (_, max_rel) = energy_drift(&traj, &world.hamiltonian).unwrap();
        assert!(max_rel <= 1e-6, "oracle drift {max_rel}");
    }

    #[test]
    fn symplecticity_defect_separates_leapfrog_from_rk4() {
        let m = oscillator_model();
        let z = [0.7, -0.2];
        let dt = 0.1;
        let leap =
            symplecticity_defect(|z| m.step(z, &[], dt, Integrator::Leapfrog), &z).unwrap();
        assert!(leap <= 1e-6, "leapfrog defect {leap}");
        let rk4 = symplecticity_defect(|z| m.step(z, &[], dt, Integrator::Rk4), &z).unwrap();
        // On a linear field the Runge-Kutta step map is exactly linear, so
        // its defect equals |det M − 1| = dt⁶/72 — an oracle independent of
        // the finite-difference machinery. The measured defect must match
        // it and sit orders of magnitude above the symplectic method's.
        let oracle = dt.powi(6) / 72.0;
        assert!((rk4 - oracle).abs() <= 0.1 * oracle, "rk4 {rk4} vs {oracle}");
        assert!(rk4 > 100.0 * leap);
    }

    #[test]
    fn rk4_defect_grows_to_visible_size_at_coarse_steps() {
        // O(dt⁵) scaling on a nonlinear field: invisible at fine steps,
        // unmistakable at coarse ones.
        let m = PortHamiltonianModel::conservative(Hamiltonian::Analytic(
            AnalyticKind::Pendulum { m: 1.0, l: 1.0, g: 1.0 },
        ));
        let z = [2.0, 0.5];
        let fine = symplecticity_defect(|z| m.step(z, &[], 0.1, Integrator::Rk4), &z).unwrap();
        let coarse = symplecticity_defect(|z| m.step(z, &[], 0.5, Integrator::Rk4), &z).unwrap();
        assert!(fine < 1e-7, "fine-step defect {fine}");
        assert!(coarse > 1e-6, "coarse-step defect {coarse}");
    }

    #[test]
    fn identity_map_defect_is_exact_at_the_origin() {
        let defect = symplecticity_defect(|z| Ok(z.to_vec()), &[0.0, 0.0]).unwrap();
        assert_eq!(defect, 0.0);
        // Away from the origin the finite differences of the identity are
        // still clean to near round-off.
        let generic = symplecticity_defect(|z| Ok(z.to_vec()), &[0.3, -0.8]).unwrap();
        assert!(generic <= 1e-9);
    }

    #[test]
    fn reversibility_zero_steps_is_exact() {
        let m = oscillator_model();
        let d = reversibility_defect(
            |z, dt| m.step(z, &[], dt, Integrator::Leapfrog),
            &[1.0, 0.0],
            0.01,
            0,
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn leapfrog_reverses_to_round_off() {
        let m = oscillator_model();
        let z0 = [1.0, 0.25];
        let d = reversibility_defect(
            |z, dt| m.step(z, &[], dt, Integrator::Leapfrog),
            &z0,
            0.01,
            1000,
        )
        .unwrap();
        assert!(d / linalg::norm2(&z0) <= 1e-8, "defect {d}");
    }

    #[test]
    fn report_validation_catches_shape_and_nan() {
        let mut r = MetricsReport::default();
        r.series.push(Series {
            name: "bad".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            x: vec![1.0, 2.0],
            y: vec![0.5],
        });
        assert!(r.validate().is_err());
        r.series[0].y = vec![0.5, f64::NAN];
        assert!(r.validate().is_err());
        r.series[0].y = vec![0.5, f64::INFINITY];
        assert!(r.validate().is_ok(), "divergence marker is allowed");
    }

    fn tiny_cfg(dt: f64) -> ModelConfig {
        let mut c = ModelConfig::new(1, 1, dt);
        c.energy_hidden = vec![4];
        c.enc_hidden = vec![4];
        c.dec_hidden = vec![4];
        c.ext_hidden = vec![4];
        c
    }

    #[test]
    fn comparison_report_has_the_contracted_shape() {
        let w = make_world(&WorldSpec::noiseless(WorldKind::DoubleIntegrator)).unwrap();
        let train_ds = generate_dataset(
            &w,
            4,
            8,
            0.1,
            &ActionPolicy::UniformRandom { scale: 1.0 },
            0,
        )
        .unwrap();
        let held = generate_dataset(
            &w,
            3,
            8,
            0.1,
            &ActionPolicy::UniformRandom { scale: 1.0 },
            1,
        )
        .unwrap();
        let mc = tiny_cfg(0.1);
        let tc = TrainConfig {
            horizon: 2,
            batch_size: 2,
            steps: 2,
            seed: 0,
            ..TrainConfig::default()
        };
        let (hwm, _) = train(DynamicsKind::PortHamiltonian, &mc, &tc, &train_ds).unwrap();
        let (base, _) = train(DynamicsKind::Baseline, &mc, &tc, &train_ds).unwrap();
        let horizons = [1usize, 3, 6];
        let sizes = [2usize, 4];
        let report =
            compare_models(&hwm, &base, &held, &horizons, &sizes, Some(&train_ds)).unwrap();
        assert_eq!(report.series.len(), 4);
        let points: usize = report.series.iter().map(|s| s.x.len()).sum();
        assert_eq!(points, 2 * horizons.len() + 2 * sizes.len());
        report.validate().unwrap();
        // Without sizes: two series, rollout error only.
        let short = compare_models(&hwm, &base, &held, &horizons, &[], None).unwrap();
        assert_eq!(short.series.len(), 2);
    }

    #[test]
    fn comparing_a_checkpoint_to_itself_gives_identical_curves() {
        let w = make_world(&WorldSpec::noiseless(WorldKind::DoubleIntegrator)).unwrap();
        let ds = generate_dataset(
            &w,
            3,
            8,
            0.1,
            &ActionPolicy::UniformRandom { scale: 1.0 },
            2,
        )
        .unwrap();
        let mc = tiny_cfg(0.1);
        let tc = TrainConfig {
            horizon: 2,
            batch_size: 2,
            steps: 2,
            seed: 1,
            ..TrainConfig::default()
        };
        let (ck, _) = train(DynamicsKind::PortHamiltonian, &mc, &tc, &ds).unwrap();
        let report = compare_models(&ck, &ck, &ds, &[1, 2, 4], &[], None).unwrap();
        assert_eq!(report.series[0].y, report.series[1].y);
        assert_eq!(
            report.scalars["hwm_error_at_max_horizon"],
            report.scalars["baseline_error_at_max_horizon"]
        );
    }
}
