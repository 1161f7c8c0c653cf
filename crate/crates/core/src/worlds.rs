//! Reference environments with known physics.
//!
//! Each world wraps a closed-form energy plus (for the actuated ones)
//! constant damping and input-gain matrices, so the true field has the
//! same shape the learned model assumes:
//!
//! ```text
//!     ż = (J − R_true) ∇H_true + G_true a
//! ```
//!
//! They serve two jobs: generating training data (observations + actions,
//! with ground truth kept on the side strictly for evaluation) and acting
//! as brute-force oracles — the rollout here integrates with RK4 at a
//! twentieth of the sampling interval, accurate enough that closed-form
//! checks treat it as exact.
//!
//! Everything is reproducible from a single seed. Per-trajectory draws
//! come from seeds derived as (seed, trajectory index, purpose), so a
//! parallel generation run and a serial one produce identical bytes.

use crate::energy::{make_hamiltonian, AnalyticKind, Hamiltonian, HamiltonianSpec};
use crate::error::HwmError;
use crate::phase::{j_apply, ActionSequence, FlatState, Trajectory};
use crate::rng::{self, stream};
use crate::Result;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Oracle rollouts cut each sampling interval into this many RK4 substeps.
pub const ORACLE_SUBSTEPS: usize = 20;

/// Same trust region as the learned-model rollout.
const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorldKind {
    /// Point pendulum; observed through (cos q, sin q, p).
    Pendulum { m: f64, l: f64, g: f64 },
    /// Linear chain of masses joined by springs, free ends.
    SpringChain { n: usize, k: f64, m: f64, rest_len: f64 },
    /// Planar gravitational pair (softened), sampled near circular orbits.
    TwoBody { m1: f64, m2: f64, g: f64 },
    /// Oscillator with linear momentum damping `c` and a force input.
    DampedDrivenOscillator { k: f64, m: f64, c: f64 },
    /// Unit mass, force input: q̇ = p, ṗ = a.
    DoubleIntegrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    #[serde(flatten)]
    pub kind: WorldKind,
    /// Gaussian noise added to the state once per sampling interval.
    #[serde(default)]
    pub sigma_proc: f64,
    /// Gaussian noise added to each observation channel.
    #[serde(default)]
    pub sigma_obs: f64,
}

impl WorldSpec {
    pub fn noiseless(kind: WorldKind) -> Self {
        WorldSpec {
            kind,
            sigma_proc: 0.0,
            sigma_obs: 0.0,
        }
    }
}

/// A fully specified environment: true energy, true damping and gain,
/// observation map, and initial-state sampler.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub hamiltonian: Hamiltonian,
    /// Constant damping matrix, `None` for conservative kinds.
    r_true: Option<Array2<f64>>,
    /// Constant input gain `[2n × d_a]`, `None` when unactuated.
    g_true: Option<Array2<f64>>,
    pub action_dim: usize,
}

pub fn make_world(spec: &WorldSpec) -> Result<World> {
    if !(spec.sigma_proc >= 0.0 && spec.sigma_proc.is_finite()) {
        return Err(HwmError::InvalidParams(format!(
            "process noise scale must be finite and >= 0, got {}",
            spec.sigma_proc
        )));
    }
    if !(spec.sigma_obs >= 0.0 && spec.sigma_obs.is_finite()) {
        return Err(HwmError::InvalidParams(format!(
            "observation noise scale must be finite and >= 0, got {}",
            spec.sigma_obs
        )));
    }
    let analytic = |kind: AnalyticKind| {
        make_hamiltonian(&HamiltonianSpec::Analytic { spec: kind }, 0)
    };
    let (hamiltonian, r_true, g_true, action_dim) = match &spec.kind {
        WorldKind::Pendulum { m, l, g } => (
            analytic(AnalyticKind::Pendulum {
                m: *m,
                l: *l,
                g: *g,
            })?,
            None,
            None,
            0,
        ),
        WorldKind::SpringChain { n, k, m, rest_len } => (
            analytic(AnalyticKind::SpringChain {
                n: *n,
                k: *k,
                m: *m,
                rest_len: *rest_len,
            })?,
            None,
            None,
            0,
        ),
        WorldKind::TwoBody { m1, m2, g } => (
            analytic(AnalyticKind::TwoBody {
                m1: *m1,
                m2: *m2,
                g: *g,
            })?,
            None,
            None,
            0,
        ),
        WorldKind::DampedDrivenOscillator { k, m, c } => {
            if !(*c >= 0.0 && c.is_finite()) {
                return Err(HwmError::InvalidParams(format!(
                    "damping must be finite and >= 0, got {c}"
                )));
            }
            let mut r = Array2::<f64>::zeros((2, 2));
            r[[1, 1]] = *c;
            let mut g_in = Array2::<f64>::zeros((2, 1));
            g_in[[1, 0]] = 1.0;
            (
                analytic(AnalyticKind::HarmonicOscillator { k: *k, m: *m })?,
                Some(r),
                Some(g_in),
                1,
            )
        }
        WorldKind::DoubleIntegrator => {
            let mut g_in = Array2::<f64>::zeros((2, 1));
            g_in[[1, 0]] = 1.0;
            (
                analytic(AnalyticKind::FreeParticle { m: 1.0 })?,
                None,
                Some(g_in),
                1,
            )
        }
    };
    Ok(World {
        spec: spec.clone(),
        hamiltonian,
        r_true,
        g_true,
        action_dim,
    })
}

impl World {
    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn obs_dim(&self) -> usize {
        match self.spec.kind {
            WorldKind::Pendulum { .. } => 3,
            _ => self.dim(),
        }
    }

    /// The exact right-hand side `(J − R_true)∇H_true + G_true a`.
    pub fn true_vector_field(&self, z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(HwmError::DimensionMismatch {
                context: "world state".into(),
                expected: self.dim(),
                got: z.len(),
            });
        }
        if a.len() != self.action_dim {
            return Err(HwmError::DimensionMismatch {
                context: "world action".into(),
                expected: self.action_dim,
                got: a.len(),
            });
        }
        let grad = self.hamiltonian.grad_flat(z)?;
        let mut f = j_apply(&grad);
        if let Some(r) = &self.r_true {
            for i in 0..f.len() {
                let mut acc = 0.0;
                for j in 0..grad.len() {
                    acc += r[[i, j]] * grad[j];
                }
                f[i] -= acc;
            }
        }
        if let Some(g) = &self.g_true {
            for i in 0..f.len() {
                for (j, aj) in a.iter().enumerate() {
                    f[i] += g[[i, j]] * aj;
                }
            }
        }
        Ok(f)
    }

    /// Deterministic part of the observation map. Pendulum angles are
    /// wrapped into `[0, 2π)` first so readouts of equivalent angles are
    /// bit-identical; other worlds expose the state itself.
    pub fn readout(&self, z: &[f64]) -> Vec<f64> {
        match self.spec.kind {
            WorldKind::Pendulum { .. } => {
                let q = z[0].rem_euclid(TAU);
                vec![q.cos(), q.sin(), z[1]]
            }
            _ => z.to_vec(),
        }
    }

    /// Readout plus per-channel Gaussian noise of scale σ_obs. Draws
    /// nothing when the scale is zero.
    pub fn observe(&self, z: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut o = self.readout(z);
        if self.spec.sigma_obs > 0.0 {
            for x in o.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *x += self.spec.sigma_obs * n;
            }
        }
        o
    }

    /// Samples an initial state from the world's documented range:
    /// pendulum q ∈ [−π, π], p ∈ [−1, 1]; oscillator, chain and double
    /// integrator uniform in [−1, 1] per component; two-body a circular
    /// orbit with radius and speed each perturbed by at most 10%.
    pub fn sample_initial(&self, rng: &mut ChaCha8Rng) -> FlatState {
        let z = match &self.spec.kind {
            WorldKind::Pendulum { m, l, g } => {
                // Librating orbits only, rejection-sampled to keep total
                // energy below 80% of the separatrix value. Near or above
                // the separatrix the period diverges and two frames cannot
                // distinguish swinging from rotating, which turns
                // long-horizon forecasting into guesswork.
                let cap = -m * g * l + 0.8 * (2.0 * m * g * l);
                loop {
                    let q: f64 = rng.gen_range(-2.0..2.0);
                    let p: f64 = rng.gen_range(-0.8..0.8);
                    let e = p * p / (2.0 * m * l * l) - m * g * l * q.cos();
                    if e <= cap {
                        break vec![q, p];
                    }
                }
            }
            WorldKind::TwoBody { m1, m2, g } => {
                let phi = rng.gen_range(0.0..TAU);
                let u_r: f64 = rng.gen_range(0.9..1.1);
                let u_v: f64 = rng.gen_range(0.9..1.1);
                let total = m1 + m2;
                let d = u_r; // circular separation 1, radially perturbed
                let omega = (g * total / (d * d * d)).sqrt();
                let (c, s) = (phi.cos(), phi.sin());
                let speed = d * omega * u_v;
                // positions about the barycentre, velocities tangential
                let q1 = [-(m2 / total) * d * c, -(m2 / total) * d * s];
                let q2 = [(m1 / total) * d * c, (m1 / total) * d * s];
                let v1 = [(m2 / total) * speed * s, -(m2 / total) * speed * c];
                let v2 = [-(m1 / total) * speed * s, (m1 / total) * speed * c];
                vec![
                    q1[0],
                    q1[1],
                    q2[0],
                    q2[1],
                    m1 * v1[0],
                    m1 * v1[1],
                    m2 * v2[0],
                    m2 * v2[1],
                ]
            }
            _ => {
                let n = self.dim();
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            }
        };
        FlatState::new(z).expect("sampled state is finite by construction")
    }
}

fn rk4_true(w: &World, z: &[f64], a: &[f64], dt: f64) -> Result<Vec<f64>> {
    let k1 = w.true_vector_field(z, a)?;
    let z2: Vec<f64> = z.iter().zip(&k1).map(|(zi, ki)| zi + 0.5 * dt * ki).collect();
    let k2 = w.true_vector_field(&z2, a)?;
    let z3: Vec<f64> = z.iter().zip(&k2).map(|(zi, ki)| zi + 0.5 * dt * ki).collect();
    let k3 = w.true_vector_field(&z3, a)?;
    let z4: Vec<f64> = z.iter().zip(&k3).map(|(zi, ki)| zi + dt * ki).collect();
    let k4 = w.true_vector_field(&z4, a)?;
    Ok(z
        .iter()
        .enumerate()
        .map(|(i, zi)| zi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates the true dynamics, sampling at the action interval but
/// stepping internally at a twentieth of it. Process noise (if any) is
/// injected once per sampling interval, after the substeps.
pub fn world_rollout(
    w: &World,
    z0: &FlatState,
    actions: &ActionSequence,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    if actions.action_dim() != w.action_dim {
        return Err(HwmError::DimensionMismatch {
            context: "world rollout actions".into(),
            expected: w.action_dim,
            got: actions.action_dim(),
        });
    }
    let dt = actions.dt();
    let sub = dt / ORACLE_SUBSTEPS as f64;
    let mut states = Vec::with_capacity(actions.horizon() + 1);
    check_state(z0.as_slice(), 0)?;
    states.push(z0.clone());
    let mut cur = z0.as_slice().to_vec();
    for k in 0..actions.horizon() {
        let a = actions.row(k);
        for _ in 0..ORACLE_SUBSTEPS {
            cur = rk4_true(w, &cur, a, sub)?;
        }
        if w.spec.sigma_proc > 0.0 {
            for x in cur.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *x += w.spec.sigma_proc * n;
            }
        }
        check_state(&cur, k + 1)?;
        states.push(FlatState::new(cur.clone())?);
    }
    Trajectory::from_states(states, actions.clone())
}

fn check_state(z: &[f64], step: usize) -> Result<()> {
    let mut norm2 = 0.0;
    for &x in z {
        if !x.is_finite() {
            return Err(HwmError::NonFiniteState { step });
        }
        norm2 += x * x;
    }
    if norm2.sqrt() > DIVERGENCE_NORM {
        return Err(HwmError::NonFiniteState { step });
    }
    Ok(())
}

/// How actions are chosen during data generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ActionPolicy {
    Zero,
    /// Independent per-step, per-channel draws from `[−scale, scale)`.
    UniformRandom { scale: f64 },
    /// `amp · sin(freq · t)` on every channel, `t = k · dt`.
    Sinusoid { freq: f64, amp: f64 },
}

impl ActionPolicy {
    fn build(&self, horizon: usize, d_a: usize, dt: f64, rng: &mut ChaCha8Rng) -> Result<ActionSequence> {
        let mut a = Array2::<f64>::zeros((horizon, d_a));
        match self {
            ActionPolicy::Zero => {}
            ActionPolicy::UniformRandom { scale } => {
                if !(*scale >= 0.0 && scale.is_finite()) {
                    return Err(HwmError::InvalidParams(format!(
                        "action scale must be finite and >= 0, got {scale}"
                    )));
                }
                if *scale > 0.0 {
                    for k in 0..horizon {
                        for j in 0..d_a {
                            a[[k, j]] = rng.gen_range(-scale..*scale);
                        }
                    }
                }
            }
            ActionPolicy::Sinusoid { freq, amp } => {
                for k in 0..horizon {
                    let v = amp * (freq * k as f64 * dt).sin();
                    for j in 0..d_a {
                        a[[k, j]] = v;
                    }
                }
            }
        }
        ActionSequence::new(a, dt)
    }
}

/// One recorded trajectory: what the learner sees (observations and
/// actions) plus the true states, which only evaluation code may read.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsTrajectory {
    /// `(horizon + 1) × d_o`.
    pub observations: Array2<f64>,
    pub actions: ActionSequence,
    /// `horizon + 1` true states, for scoring rollouts — never for training.
    pub truth: Vec<FlatState>,
}

/// A batch of trajectories sharing dt and horizon, with per-channel
/// observation statistics computed over every recorded observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: WorldSpec,
    pub seed: u64,
    pub dt: f64,
    pub trajectories: Vec<ObsTrajectory>,
    pub obs_mean: Vec<f64>,
    /// Population standard deviation, floored at 1e-8.
    pub obs_std: Vec<f64>,
}

impl Dataset {
    /// Assembles a dataset from already-recorded trajectories, computing
    /// the channel statistics over exactly these trajectories in a fixed
    /// serial order. Because trajectory draws are index-stable, taking the
    /// first `s` trajectories of a larger dataset through here reproduces
    /// what generating `s` trajectories directly would have produced.
    pub fn from_trajectories(
        spec: WorldSpec,
        seed: u64,
        dt: f64,
        trajectories: Vec<ObsTrajectory>,
    ) -> Result<Self> {
        let Some(first) = trajectories.first() else {
            return Err(HwmError::InvalidParams(
                "dataset needs at least one trajectory".into(),
            ));
        };
        let d_o = first.observations.ncols();
        if trajectories
            .iter()
            .any(|t| t.observations.ncols() != d_o)
        {
            return Err(HwmError::Invalid(
                "trajectories disagree on observation width".into(),
            ));
        }

        let mut mean = vec![0.0; d_o];
        let mut count = 0usize;
        for t in &trajectories {
            for row in t.observations.rows() {
                for (m, v) in mean.iter_mut().zip(row.iter()) {
                    *m += v;
                }
                count += 1;
            }
        }
        for m in mean.iter_mut() {
            *m /= count as f64;
        }
        let mut var = vec![0.0; d_o];
        for t in &trajectories {
            for row in t.observations.rows() {
                for ((s, v), m) in var.iter_mut().zip(row.iter()).zip(&mean) {
                    let d = v - m;
                    *s += d * d;
                }
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|s| (s / count as f64).sqrt().max(1e-8))
            .collect();

        Ok(Dataset {
            spec,
            seed,
            dt,
            trajectories,
            obs_mean: mean,
            obs_std: std,
        })
    }

    /// The first `n` trajectories as their own dataset, statistics
    /// recomputed over the subset.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.trajectories.len() {
            return Err(HwmError::InvalidParams(format!(
                "subset size must lie in 1..={}, got {n}",
                self.trajectories.len()
            )));
        }
        Self::from_trajectories(
            self.spec.clone(),
            self.seed,
            self.dt,
            self.trajectories[..n].to_vec(),
        )
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_mean.len()
    }

    pub fn action_dim(&self) -> usize {
        self.trajectories
            .first()
            .map(|t| t.actions.action_dim())
            .unwrap_or(0)
    }

    pub fn horizon(&self) -> usize {
        self.trajectories.first().map(|t| t.actions.horizon()).unwrap_or(0)
    }
}

/// Generates `n_traj` trajectories of `horizon` steps each. Every random
/// choice flows from `(seed, trajectory index, purpose)`, so trajectories
/// are independent of each other and of evaluation order; generation can
/// fan out across trajectories without changing a single byte.
pub fn generate_dataset(
    w: &World,
    n_traj: usize,
    horizon: usize,
    dt: f64,
    policy: &ActionPolicy,
    seed: u64,
) -> Result<Dataset> {
    if n_traj < 1 {
        return Err(HwmError::InvalidParams("need at least one trajectory".into()));
    }
    if horizon < 2 {
        return Err(HwmError::InvalidParams(format!(
            "horizon must be at least 2, got {horizon}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(HwmError::InvalidParams(format!(
            "sampling interval must be positive and finite, got {dt}"
        )));
    }
    let results: Vec<Result<ObsTrajectory>> = crate::par::map_range(n_traj, |i| {
        let i = i as u64;
        let mut init_rng = rng::seeded(rng::derive2(seed, i, stream::STATE));
        let mut act_rng = rng::seeded(rng::derive2(seed, i, stream::ACTIONS));
        let mut proc_rng = rng::seeded(rng::derive2(seed, i, stream::PROCESS_NOISE));
        let mut obs_rng = rng::seeded(rng::derive2(seed, i, stream::OBS_NOISE));
        let z0 = w.sample_initial(&mut init_rng);
        let actions = policy.build(horizon, w.action_dim, dt, &mut act_rng)?;
        let traj = world_rollout(w, &z0, &actions, &mut proc_rng)?;
        let d_o = w.obs_dim();
        let mut observations = Array2::<f64>::zeros((horizon + 1, d_o));
        for (t, state) in traj.states.iter().enumerate() {
            let o = w.observe(state.as_slice(), &mut obs_rng);
            for (j, v) in o.into_iter().enumerate() {
                observations[[t, j]] = v;
            }
        }
        Ok(ObsTrajectory {
            observations,
            actions,
            truth: traj.states,
        })
    });
    let mut trajectories = Vec::with_capacity(n_traj);
    for r in results {
        trajectories.push(r?);
    }
    Dataset::from_trajectories(w.spec.clone(), seed, dt, trajectories)
}
