//! End-to-end training of encoder, dynamics, and decoder.
//!
//! The objective is open-loop, multi-step prediction in observation space:
//! encode a short window of past observations into a phase state, roll the
//! model forward `H` steps under the recorded actions, decode each
//! predicted state, and penalize squared error against the recorded
//! observations (standardized per channel). On top of that sit
//!
//! * a residual penalty `λ_res · ‖ε(z_t, a_t)‖²`, which keeps the free
//!   correction term small so the structured part carries the dynamics, and
//! * an optional latent-consistency penalty `λ_lat` tying predicted states
//!   to freshly encoded ones.
//!
//! Gradients flow through the *unrolled integrator* — including through
//! `∇H`, which the tape represents as an explicit gradient network — so a
//! single reverse sweep per sample yields exact parameter gradients.
//!
//! Determinism is part of the contract: batches are drawn from a derived
//! stream, per-sample gradients may be computed in parallel but are reduced
//! in sample order, and optimizer updates are serial. Identical inputs give
//! bit-identical checkpoints.

use crate::autodiff::{leaf_mlp, mlp_forward, mlp_scalar_grad, MlpNodes, NodeId, Tape};
use crate::dynamics::{BaselineModel, Integrator, PortHamiltonianModel};
use crate::energy::{Hamiltonian, LearnedEnergy};
use crate::error::HwmError;
use crate::nn::Mlp;
use crate::perception::{Decoder, Encoder, DEFAULT_WINDOW};
use crate::phase::FlatState;
use crate::rng::{self, stream};
use crate::worlds::Dataset;
use crate::Result;
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::time::Instant;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Which dynamics core a trained model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    PortHamiltonian,
    Baseline,
}

/// Architecture and structural choices for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_entities: usize,
    pub entity_dim: usize,
    /// Hidden widths of each energy net (kinetic, potential, pairwise).
    pub energy_hidden: Vec<usize>,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    /// Hidden widths of the dissipation / gain / residual nets.
    pub ext_hidden: Vec<usize>,
    pub use_dissipation: bool,
    pub use_input_gain: bool,
    pub use_residual: bool,
    /// Residual gate γ.
    pub gamma: f64,
    /// Observation-window length fed to the encoder.
    pub window: usize,
    /// Sampling interval the model steps at.
    pub dt: f64,
}

impl ModelConfig {
    /// Desk-scale defaults for a given phase-space layout and interval.
    pub fn new(n_entities: usize, entity_dim: usize, dt: f64) -> Self {
        ModelConfig {
            n_entities,
            entity_dim,
            energy_hidden: vec![32, 32],
            enc_hidden: vec![32],
            dec_hidden: vec![32],
            ext_hidden: vec![16],
            use_dissipation: true,
            use_input_gain: true,
            use_residual: true,
            gamma: 0.1,
            window: DEFAULT_WINDOW,
            dt,
        }
    }

    pub fn state_dim(&self) -> usize {
        2 * self.n_entities * self.entity_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_entities == 0 || self.entity_dim == 0 {
            return Err(HwmError::InvalidParams(
                "need at least one entity of positive dimension".into(),
            ));
        }
        if self.window == 0 {
            return Err(HwmError::InvalidParams("window must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(HwmError::InvalidParams(format!(
                "model interval must be positive and finite, got {}",
                self.dt
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(HwmError::InvalidParams(format!(
                "residual gate must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Optimization schedule. Adaptive moment estimation with bias correction,
/// a global gradient-norm clip, and a fixed seed for batch order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Open-loop rollout length inside the loss.
    pub horizon: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub lambda_res: f64,
    pub lambda_lat: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            horizon: 8,
            batch_size: 32,
            steps: 20_000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            lambda_res: 0.01,
            lambda_lat: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(HwmError::InvalidParams("loss horizon must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(HwmError::InvalidParams("batch size must be >= 1".into()));
        }
        for (name, v) in [
            ("learning rate", self.lr),
            ("clip norm", self.clip_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HwmError::InvalidParams(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("residual weight", self.lambda_res),
            ("latent weight", self.lambda_lat),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(HwmError::InvalidParams(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(HwmError::InvalidParams(
                "moment decay rates must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// The structured model plus its perception ends and the statistics it was
/// trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwmModel {
    pub encoder: Encoder,
    pub dynamics: PortHamiltonianModel,
    pub decoder: Decoder,
    pub obs_mean: Vec<f64>,
    pub obs_std: Vec<f64>,
    pub config: ModelConfig,
}

/// The unstructured competitor with the same perception ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSet {
    pub encoder: Encoder,
    pub dynamics: BaselineModel,
    pub decoder: Decoder,
    pub obs_mean: Vec<f64>,
    pub obs_std: Vec<f64>,
    pub config: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    PortHamiltonian(HwmModel),
    Baseline(BaselineSet),
}

impl HwmModel {
    /// Draws every network from one seeded stream in a fixed order
    /// (encoder; kinetic, potential, pairwise; dissipation, gain,
    /// residual; decoder), so the seed pins the whole initialization.
    pub fn init(
        config: &ModelConfig,
        obs_dim: usize,
        action_dim: usize,
        obs_mean: Vec<f64>,
        obs_std: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let n2 = config.state_dim();
        let d = config.entity_dim;
        let mut r = rng::seeded(rng::derive(seed, stream::INIT));
        let encoder = Encoder::init(config.window, obs_dim, n2, &config.enc_hidden, &mut r)?;
        let k_net = Mlp::init_with_hidden(d, &config.energy_hidden, 1, &mut r);
        let u_net = Mlp::init_with_hidden(d, &config.energy_hidden, 1, &mut r);
        let v_net = if config.n_entities >= 2 {
            Some(Mlp::init_with_hidden(2 * d, &config.energy_hidden, 1, &mut r))
        } else {
            None
        };
        let hamiltonian = Hamiltonian::Learned(LearnedEnergy {
            k_net,
            u_net,
            v_net,
            n_entities: config.n_entities,
            entity_dim: d,
        });
        let r_net = if config.use_dissipation {
            Some(Mlp::init_with_hidden(
                n2,
                &config.ext_hidden,
                n2 * (n2 + 1) / 2,
                &mut r,
            ))
        } else {
            None
        };
        let g_net = if config.use_input_gain && action_dim > 0 {
            Some(Mlp::init_with_hidden(
                n2,
                &config.ext_hidden,
                n2 * action_dim,
                &mut r,
            ))
        } else {
            None
        };
        let eps_net = if config.use_residual {
            Some(Mlp::init_with_hidden(
                n2 + action_dim,
                &config.ext_hidden,
                n2,
                &mut r,
            ))
        } else {
            None
        };
        let dynamics = PortHamiltonianModel::new(
            hamiltonian,
            r_net,
            g_net,
            eps_net,
            config.gamma,
            action_dim,
        )?;
        let decoder = Decoder::init(n2, &config.dec_hidden, obs_dim, &mut r);
        Ok(HwmModel {
            encoder,
            dynamics,
            decoder,
            obs_mean,
            obs_std,
            config: config.clone(),
        })
    }

    /// Parameter count of the dynamics core alone (energy nets plus any
    /// extension nets); the baseline is sized against this number.
    pub fn dynamics_param_count(&self) -> usize {
        let mut c = 0;
        if let Hamiltonian::Learned(l) = &self.dynamics.hamiltonian {
            c += l.k_net.param_count() + l.u_net.param_count();
            if let Some(v) = &l.v_net {
                c += v.param_count();
            }
        }
        for net in [&self.dynamics.r_net, &self.dynamics.g_net, &self.dynamics.eps_net]
            .into_iter()
            .flatten()
        {
            c += net.param_count();
        }
        c
    }
}

impl BaselineSet {
    /// Same perception architecture as the structured model, with the
    /// dynamics replaced by a direct transition net whose parameter count
    /// matches `target_params` within 5%.
    pub fn init(
        config: &ModelConfig,
        obs_dim: usize,
        action_dim: usize,
        target_params: usize,
        obs_mean: Vec<f64>,
        obs_std: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let n2 = config.state_dim();
        let mut r = rng::seeded(rng::derive(seed, stream::INIT));
        let encoder = Encoder::init(config.window, obs_dim, n2, &config.enc_hidden, &mut r)?;
        let dynamics = BaselineModel::matched(n2, action_dim, target_params, 0.05, &mut r)?;
        let decoder = Decoder::init(n2, &config.dec_hidden, obs_dim, &mut r);
        Ok(BaselineSet {
            encoder,
            dynamics,
            decoder,
            obs_mean,
            obs_std,
            config: config.clone(),
        })
    }
}

impl TrainedModel {
    pub fn window(&self) -> usize {
        self.config().window
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            TrainedModel::PortHamiltonian(m) => &m.config,
            TrainedModel::Baseline(b) => &b.config,
        }
    }

    pub fn kind(&self) -> DynamicsKind {
        match self {
            TrainedModel::PortHamiltonian(_) => DynamicsKind::PortHamiltonian,
            TrainedModel::Baseline(_) => DynamicsKind::Baseline,
        }
    }

    fn stats(&self) -> (&[f64], &[f64]) {
        match self {
            TrainedModel::PortHamiltonian(m) => (&m.obs_mean, &m.obs_std),
            TrainedModel::Baseline(b) => (&b.obs_mean, &b.obs_std),
        }
    }

    pub fn normalize(&self, o: &[f64]) -> Vec<f64> {
        let (mean, std) = self.stats();
        o.iter()
            .zip(mean)
            .zip(std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, o: &[f64]) -> Vec<f64> {
        let (mean, std) = self.stats();
        o.iter()
            .zip(mean)
            .zip(std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    /// Encodes a window of *raw* observation rows (oldest first).
    pub fn encode_window(&self, rows: ArrayView2<f64>) -> Result<FlatState> {
        let k = self.window();
        if rows.nrows() != k {
            return Err(HwmError::WindowLengthMismatch {
                expected: k,
                got: rows.nrows(),
            });
        }
        let mut norm = Array2::<f64>::zeros((k, rows.ncols()));
        for (i, row) in rows.rows().into_iter().enumerate() {
            let nr = self.normalize(row.as_slice().expect("contiguous row"));
            for (j, v) in nr.into_iter().enumerate() {
                norm[[i, j]] = v;
            }
        }
        match self {
            TrainedModel::PortHamiltonian(m) => m.encoder.encode(norm.view()),
            TrainedModel::Baseline(b) => b.encoder.encode(norm.view()),
        }
    }

    /// One latent step under the model's own interval.
    pub fn predict_latent(&self, z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        match self {
            TrainedModel::PortHamiltonian(m) => {
                m.dynamics.step(z, a, m.config.dt, Integrator::Rk4)
            }
            TrainedModel::Baseline(b) => b.dynamics.step(z, a),
        }
    }

    /// Decodes a latent state into a raw (de-standardized) observation.
    pub fn decode_raw(&self, z: &[f64]) -> Result<Vec<f64>> {
        let norm = match self {
            TrainedModel::PortHamiltonian(m) => m.decoder.decode(z)?,
            TrainedModel::Baseline(b) => b.decoder.decode(z)?,
        };
        Ok(self.denormalize(&norm))
    }
}

// ---------------------------------------------------------------------------
// Canonical parameter vector
// ---------------------------------------------------------------------------

fn push_mlp(net: &Mlp, out: &mut Vec<f64>) {
    for layer in &net.layers {
        out.extend_from_slice(&layer.w);
        out.extend_from_slice(&layer.b);
    }
}

fn load_mlp(net: &mut Mlp, src: &[f64], cur: &mut usize) {
    for layer in net.layers.iter_mut() {
        let nw = layer.w.len();
        layer.w.copy_from_slice(&src[*cur..*cur + nw]);
        *cur += nw;
        let nb = layer.b.len();
        layer.b.copy_from_slice(&src[*cur..*cur + nb]);
        *cur += nb;
    }
}

/// Nets of a model in canonical order. Parameter vectors, tape leaves, and
/// gradient read-back all follow this order.
fn net_list(model: &TrainedModel) -> Vec<&Mlp> {
    named_net_list(model).into_iter().map(|(_, n)| n).collect()
}

fn net_list_mut(model: &mut TrainedModel) -> Vec<&mut Mlp> {
    let mut nets: Vec<&mut Mlp> = Vec::new();
    match model {
        TrainedModel::PortHamiltonian(m) => {
            nets.push(&mut m.encoder.net);
            if let Hamiltonian::Learned(l) = &mut m.dynamics.hamiltonian {
                nets.push(&mut l.k_net);
                nets.push(&mut l.u_net);
                if let Some(v) = &mut l.v_net {
                    nets.push(v);
                }
            }
            for net in [
                &mut m.dynamics.r_net,
                &mut m.dynamics.g_net,
                &mut m.dynamics.eps_net,
            ]
            .into_iter()
            .flatten()
            {
                nets.push(net);
            }
            nets.push(&mut m.decoder.net);
        }
        TrainedModel::Baseline(b) => {
            nets.push(&mut b.encoder.net);
            nets.push(&mut b.dynamics.net);
            nets.push(&mut b.decoder.net);
        }
    }
    nets
}

/// Nets in canonical order, each with a stable name for serialization.
fn named_net_list(model: &TrainedModel) -> Vec<(&'static str, &Mlp)> {
    let mut nets: Vec<(&'static str, &Mlp)> = Vec::new();
    match model {
        TrainedModel::PortHamiltonian(m) => {
            nets.push(("encoder", &m.encoder.net));
            if let Hamiltonian::Learned(l) = &m.dynamics.hamiltonian {
                nets.push(("kinetic", &l.k_net));
                nets.push(("potential", &l.u_net));
                if let Some(v) = &l.v_net {
                    nets.push(("pairwise", v));
                }
            }
            for (name, net) in [
                ("dissipation", &m.dynamics.r_net),
                ("gain", &m.dynamics.g_net),
                ("residual", &m.dynamics.eps_net),
            ] {
                if let Some(net) = net {
                    nets.push((name, net));
                }
            }
            nets.push(("decoder", &m.decoder.net));
        }
        TrainedModel::Baseline(b) => {
            nets.push(("encoder", &b.encoder.net));
            nets.push(("transition", &b.dynamics.net));
            nets.push(("decoder", &b.decoder.net));
        }
    }
    nets
}

/// Names and shapes of every parameter tensor, in exactly the order
/// [`parameters`] flattens them: per net, per layer, weights `[out × in]`
/// then biases `[out]`. Lets external formats store parameters by name and
/// reload them without trusting element order.
pub fn parameter_layout(model: &TrainedModel) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (name, net) in named_net_list(model) {
        for (i, layer) in net.layers.iter().enumerate() {
            out.push((format!("{name}.{i}.w"), vec![layer.out_dim, layer.in_dim]));
            out.push((format!("{name}.{i}.b"), vec![layer.out_dim]));
        }
    }
    out
}

/// Builds an untrained model exactly as [`train`] would before its first
/// update: same seed handling, same draw order, and for the baseline the
/// same parameter-matching target. Reloading a checkpoint is this plus
/// [`set_parameters`].
pub fn init_model(
    kind: DynamicsKind,
    model_cfg: &ModelConfig,
    obs_dim: usize,
    action_dim: usize,
    obs_mean: Vec<f64>,
    obs_std: Vec<f64>,
    seed: u64,
) -> Result<TrainedModel> {
    Ok(match kind {
        DynamicsKind::PortHamiltonian => TrainedModel::PortHamiltonian(HwmModel::init(
            model_cfg, obs_dim, action_dim, obs_mean, obs_std, seed,
        )?),
        DynamicsKind::Baseline => {
            let target = HwmModel::init(
                model_cfg,
                obs_dim,
                action_dim,
                obs_mean.clone(),
                obs_std.clone(),
                seed,
            )?
            .dynamics_param_count();
            TrainedModel::Baseline(BaselineSet::init(
                model_cfg, obs_dim, action_dim, target, obs_mean, obs_std, seed,
            )?)
        }
    })
}

/// All trainable parameters, flattened in canonical order.
pub fn parameters(model: &TrainedModel) -> Vec<f64> {
    let mut out = Vec::new();
    for net in net_list(model) {
        push_mlp(net, &mut out);
    }
    out
}

/// Writes a flattened parameter vector back into the model.
pub fn set_parameters(model: &mut TrainedModel, theta: &[f64]) {
    let mut cur = 0;
    for net in net_list_mut(model) {
        load_mlp(net, theta, &mut cur);
    }
    debug_assert_eq!(cur, theta.len());
}

// ---------------------------------------------------------------------------
// Tape graphs
// ---------------------------------------------------------------------------

struct HwmNodes {
    enc: MlpNodes,
    k: MlpNodes,
    u: MlpNodes,
    v: Option<MlpNodes>,
    r: Option<MlpNodes>,
    g: Option<MlpNodes>,
    eps: Option<MlpNodes>,
    dec: MlpNodes,
}

struct BaselineNodes {
    enc: MlpNodes,
    net: MlpNodes,
    dec: MlpNodes,
}

enum ModelNodes {
    Hwm(HwmNodes),
    Baseline(BaselineNodes),
}

/// Registers every parameter as a tape leaf, in canonical order.
fn leaf_model(tape: &mut Tape, model: &TrainedModel) -> ModelNodes {
    match model {
        TrainedModel::PortHamiltonian(m) => {
            let enc = leaf_mlp(tape, &m.encoder.net);
            let (k, u, v) = match &m.dynamics.hamiltonian {
                Hamiltonian::Learned(l) => (
                    leaf_mlp(tape, &l.k_net),
                    leaf_mlp(tape, &l.u_net),
                    l.v_net.as_ref().map(|vn| leaf_mlp(tape, vn)),
                ),
                Hamiltonian::Analytic(_) => {
                    unreachable!("training requires a learned energy")
                }
            };
            let r = m.dynamics.r_net.as_ref().map(|n| leaf_mlp(tape, n));
            let g = m.dynamics.g_net.as_ref().map(|n| leaf_mlp(tape, n));
            let eps = m.dynamics.eps_net.as_ref().map(|n| leaf_mlp(tape, n));
            let dec = leaf_mlp(tape, &m.decoder.net);
            ModelNodes::Hwm(HwmNodes {
                enc,
                k,
                u,
                v,
                r,
                g,
                eps,
                dec,
            })
        }
        TrainedModel::Baseline(b) => ModelNodes::Baseline(BaselineNodes {
            enc: leaf_mlp(tape, &b.encoder.net),
            net: leaf_mlp(tape, &b.dynamics.net),
            dec: leaf_mlp(tape, &b.decoder.net),
        }),
    }
}

fn read_mlp_grads(tape: &Tape, nodes: &MlpNodes, out: &mut Vec<f64>) {
    for (w, b) in nodes.ws.iter().zip(&nodes.bs) {
        out.extend_from_slice(tape.grad(*w));
        out.extend_from_slice(tape.grad(*b));
    }
}

fn read_grads(tape: &Tape, nodes: &ModelNodes, out: &mut Vec<f64>) {
    match nodes {
        ModelNodes::Hwm(h) => {
            read_mlp_grads(tape, &h.enc, out);
            read_mlp_grads(tape, &h.k, out);
            read_mlp_grads(tape, &h.u, out);
            if let Some(v) = &h.v {
                read_mlp_grads(tape, v, out);
            }
            for part in [&h.r, &h.g, &h.eps].into_iter().flatten() {
                read_mlp_grads(tape, part, out);
            }
            read_mlp_grads(tape, &h.dec, out);
        }
        ModelNodes::Baseline(b) => {
            read_mlp_grads(tape, &b.enc, out);
            read_mlp_grads(tape, &b.net, out);
            read_mlp_grads(tape, &b.dec, out);
        }
    }
}

/// `∇H` as tape nodes: per-entity kinetic and potential gradients plus the
/// symmetrized pairwise contributions, concatenated `[∂q; ∂p]`.
fn tape_grad_h(tape: &mut Tape, h: &HwmNodes, z: NodeId, n: usize, d: usize) -> NodeId {
    let q: Vec<NodeId> = (0..n).map(|i| tape.slice(z, i * d, d)).collect();
    let p: Vec<NodeId> = (0..n).map(|i| tape.slice(z, (n + i) * d, d)).collect();
    let mut gq: Vec<NodeId> = q
        .iter()
        .map(|&qi| mlp_scalar_grad(tape, &h.u, qi).1)
        .collect();
    let gp: Vec<NodeId> = p
        .iter()
        .map(|&pi| mlp_scalar_grad(tape, &h.k, pi).1)
        .collect();
    if let Some(v) = &h.v {
        for i in 0..n {
            for j in (i + 1)..n {
                let in_ij = tape.concat(&[q[i], q[j]]);
                let (_, g_ij) = mlp_scalar_grad(tape, v, in_ij);
                let in_ji = tape.concat(&[q[j], q[i]]);
                let (_, g_ji) = mlp_scalar_grad(tape, v, in_ji);
                // Entity i owns the first half of ∇V(qᵢ,qⱼ) and the second
                // half of ∇V(qⱼ,qᵢ); entity j the mirror image.
                let a1 = tape.slice(g_ij, 0, d);
                let a2 = tape.slice(g_ji, d, d);
                let si = tape.add(a1, a2);
                let si = tape.scale(si, 0.5);
                gq[i] = tape.add(gq[i], si);
                let b1 = tape.slice(g_ij, d, d);
                let b2 = tape.slice(g_ji, 0, d);
                let sj = tape.add(b1, b2);
                let sj = tape.scale(sj, 0.5);
                gq[j] = tape.add(gq[j], sj);
            }
        }
    }
    let mut parts = gq;
    parts.extend(gp);
    tape.concat(&parts)
}

struct FieldMeta {
    n: usize,
    d: usize,
    action_dim: usize,
    gamma: f64,
}

/// The full right-hand side `(J − R)∇H + G a + ε` as tape nodes.
fn tape_field(
    tape: &mut Tape,
    h: &HwmNodes,
    meta: &FieldMeta,
    z: NodeId,
    a: Option<NodeId>,
) -> NodeId {
    let n2 = 2 * meta.n * meta.d;
    let g = tape_grad_h(tape, h, z, meta.n, meta.d);
    let mut f = tape.j_apply(g);
    if let Some(rn) = &h.r {
        let packed = mlp_forward(tape, rn, z);
        let l = tape.tri_softplus_diag(packed, n2);
        let ltg = tape.mat_t_vec(l, g, n2, n2);
        let rg = tape.matvec(l, ltg, n2, n2);
        f = tape.sub(f, rg);
    }
    if let (Some(gn), Some(a)) = (&h.g, a) {
        if meta.action_dim > 0 {
            let gflat = mlp_forward(tape, gn, z);
            let ga = tape.matvec(gflat, a, n2, meta.action_dim);
            f = tape.add(f, ga);
        }
    }
    if meta.gamma > 0.0 {
        if let (Some(en), Some(a)) = (&h.eps, a) {
            let input = tape.concat(&[z, a]);
            let raw = mlp_forward(tape, en, input);
            let eps = tape.scale(raw, meta.gamma);
            f = tape.add(f, eps);
        } else if let (Some(en), None) = (&h.eps, a) {
            let raw = mlp_forward(tape, en, z);
            let eps = tape.scale(raw, meta.gamma);
            f = tape.add(f, eps);
        }
    }
    f
}

/// One RK4 step as tape nodes, associating sums exactly like the plain
/// integrator.
fn tape_rk4(
    tape: &mut Tape,
    h: &HwmNodes,
    meta: &FieldMeta,
    z: NodeId,
    a: Option<NodeId>,
    dt: f64,
) -> NodeId {
    let k1 = tape_field(tape, h, meta, z, a);
    let z2 = tape.add_scaled(z, k1, 0.5 * dt);
    let k2 = tape_field(tape, h, meta, z2, a);
    let z3 = tape.add_scaled(z, k2, 0.5 * dt);
    let k3 = tape_field(tape, h, meta, z3, a);
    let z4 = tape.add_scaled(z, k3, dt);
    let k4 = tape_field(tape, h, meta, z4, a);
    let s = tape.add_scaled(k1, k2, 2.0);
    let s = tape.add_scaled(s, k3, 2.0);
    let s = tape.add(s, k4);
    tape.add_scaled(z, s, dt / 6.0)
}

/// Loss components of one sample, as tape values.
struct SampleLoss {
    total: NodeId,
    prediction: NodeId,
    residual: NodeId,
    latent: NodeId,
}

/// Builds the whole per-sample graph: encode, roll `horizon` steps, decode,
/// square against targets; plus the residual and latent penalties.
#[allow(clippy::too_many_arguments)]
fn build_sample(
    tape: &mut Tape,
    model: &TrainedModel,
    nodes: &ModelNodes,
    obs: &Array2<f64>,
    actions: Option<&Array2<f64>>,
    t0: usize,
    cfg: &TrainConfig,
) -> SampleLoss {
    let mc = model.config();
    let k = mc.window;
    let horizon = cfg.horizon;
    let norm_row = |model: &TrainedModel, t: usize| -> Vec<f64> {
        model.normalize(obs.row(t).as_slice().expect("contiguous row"))
    };
    let window_leaf = |tape: &mut Tape, model: &TrainedModel, end: usize| -> NodeId {
        let mut flat = Vec::with_capacity(k * obs.ncols());
        for t in end + 1 - k..=end {
            flat.extend(norm_row(model, t));
        }
        tape.leaf(&flat)
    };

    let win0 = window_leaf(tape, model, t0);
    let (enc_nodes, dec_nodes) = match nodes {
        ModelNodes::Hwm(h) => (&h.enc, &h.dec),
        ModelNodes::Baseline(b) => (&b.enc, &b.dec),
    };
    let mut z = mlp_forward(tape, enc_nodes, win0);

    let action_leaf = |tape: &mut Tape, t: usize| -> Option<NodeId> {
        actions.map(|a| tape.leaf(a.row(t).as_slice().expect("contiguous row")))
    };

    // Residual penalty at the encoded state under the first action.
    let residual = match nodes {
        ModelNodes::Hwm(h) if mc.gamma > 0.0 && h.eps.is_some() => {
            let a0 = action_leaf(tape, t0);
            let en = h.eps.as_ref().unwrap();
            let input = match a0 {
                Some(a) => tape.concat(&[z, a]),
                None => z,
            };
            let raw = mlp_forward(tape, en, input);
            let eps = tape.scale(raw, mc.gamma);
            tape.sum_squares(eps)
        }
        _ => tape.scalar(0.0),
    };

    let meta = FieldMeta {
        n: mc.n_entities,
        d: mc.entity_dim,
        action_dim: actions.map(|a| a.ncols()).unwrap_or(0),
        gamma: mc.gamma,
    };

    let mut pred_terms: Vec<NodeId> = Vec::with_capacity(horizon);
    let mut lat_terms: Vec<NodeId> = Vec::with_capacity(horizon);
    for hstep in 1..=horizon {
        let a = action_leaf(tape, t0 + hstep - 1);
        z = match nodes {
            ModelNodes::Hwm(hn) => tape_rk4(tape, hn, &meta, z, a, mc.dt),
            ModelNodes::Baseline(bn) => {
                let input = match a {
                    Some(a) => tape.concat(&[z, a]),
                    None => z,
                };
                mlp_forward(tape, &bn.net, input)
            }
        };
        let decoded = mlp_forward(tape, dec_nodes, z);
        let target = {
            let t = norm_row(model, t0 + hstep);
            tape.leaf(&t)
        };
        let diff = tape.sub(decoded, target);
        pred_terms.push(tape.sum_squares(diff));
        if cfg.lambda_lat > 0.0 {
            let win = window_leaf(tape, model, t0 + hstep);
            let z_enc = mlp_forward(tape, enc_nodes, win);
            let ldiff = tape.sub(z, z_enc);
            lat_terms.push(tape.sum_squares(ldiff));
        }
    }
    let mut pred = pred_terms[0];
    for &t in &pred_terms[1..] {
        pred = tape.add(pred, t);
    }
    let prediction = tape.scale(pred, 1.0 / horizon as f64);
    let latent = if lat_terms.is_empty() {
        tape.scalar(0.0)
    } else {
        let mut l = lat_terms[0];
        for &t in &lat_terms[1..] {
            l = tape.add(l, t);
        }
        tape.scale(l, 1.0 / horizon as f64)
    };
    let total = tape.add_scaled(prediction, residual, cfg.lambda_res);
    let total = tape.add_scaled(total, latent, cfg.lambda_lat);
    SampleLoss {
        total,
        prediction,
        residual,
        latent,
    }
}

thread_local! {
    static TAPE: RefCell<Tape> = RefCell::new(Tape::new());
}

/// Scalar loss components plus their weighted combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub prediction: f64,
    pub residual: f64,
    pub latent: f64,
    pub total: f64,
}

/// Mean loss over a set of samples `(trajectory index, anchor time)` plus
/// the gradient of the mean total w.r.t. every parameter (canonical order).
/// `step` only labels any non-finite-loss error. Samples fan out across
/// threads when the parallel feature is active; the reduction runs in
/// sample order either way, so results are bit-identical.
pub fn batch_objective(
    model: &TrainedModel,
    dataset: &Dataset,
    samples: &[(usize, usize)],
    cfg: &TrainConfig,
    step: usize,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let per_sample: Vec<(LossBreakdown, Vec<f64>)> =
        crate::par::map_collect(samples, |&(ti, t0)| {
            compute_sample(model, dataset, ti, t0, cfg)
        });
    reduce_batch(per_sample, samples.len(), step)
}

fn compute_sample(
    model: &TrainedModel,
    dataset: &Dataset,
    ti: usize,
    t0: usize,
    cfg: &TrainConfig,
) -> (LossBreakdown, Vec<f64>) {
    TAPE.with(|cell| {
        let mut tape = cell.borrow_mut();
        tape.reset();
        let nodes = leaf_model(&mut tape, model);
        let traj = &dataset.trajectories[ti];
        let actions = if traj.actions.action_dim() > 0 {
            Some(traj.actions.as_array())
        } else {
            None
        };
        let loss = build_sample(
            &mut tape,
            model,
            &nodes,
            &traj.observations,
            actions,
            t0,
            cfg,
        );
        tape.backward(loss.total);
        let mut grads = Vec::new();
        read_grads(&tape, &nodes, &mut grads);
        (
            LossBreakdown {
                prediction: tape.value(loss.prediction)[0],
                residual: tape.value(loss.residual)[0],
                latent: tape.value(loss.latent)[0],
                total: tape.value(loss.total)[0],
            },
            grads,
        )
    })
}

fn reduce_batch(
    per_sample: Vec<(LossBreakdown, Vec<f64>)>,
    batch: usize,
    step: usize,
) -> Result<(LossBreakdown, Vec<f64>)> {
    for (b, (l, _)) in per_sample.iter().enumerate() {
        if !l.total.is_finite() {
            return Err(HwmError::NonFiniteLoss {
                step,
                batch_index: b,
            });
        }
    }
    let inv = 1.0 / batch as f64;
    let mut acc = LossBreakdown {
        prediction: 0.0,
        residual: 0.0,
        latent: 0.0,
        total: 0.0,
    };
    let mut grad = vec![0.0; per_sample[0].1.len()];
    for (l, g) in &per_sample {
        acc.prediction += l.prediction;
        acc.residual += l.residual;
        acc.latent += l.latent;
        acc.total += l.total;
        for (gi, si) in grad.iter_mut().zip(g) {
            *gi += si;
        }
    }
    acc.prediction *= inv;
    acc.residual *= inv;
    acc.latent *= inv;
    acc.total *= inv;
    for gi in grad.iter_mut() {
        *gi *= inv;
    }
    Ok((acc, grad))
}

/// Mean squared residual-field magnitude over encoded anchor states — the
/// quantity the λ_res term penalizes, measured on the plain path.
pub fn residual_penalty(model: &TrainedModel, dataset: &Dataset, samples: &[(usize, usize)]) -> Result<f64> {
    let m = match model {
        TrainedModel::PortHamiltonian(m) => m,
        TrainedModel::Baseline(_) => return Ok(0.0),
    };
    let k = m.config.window;
    let mut acc = 0.0;
    for &(ti, t0) in samples {
        let traj = &dataset.trajectories[ti];
        let window = traj.observations.slice(ndarray::s![t0 + 1 - k..=t0, ..]);
        let z = model.encode_window(window)?;
        let a: Vec<f64> = if traj.actions.action_dim() > 0 {
            traj.actions.row(t0).to_vec()
        } else {
            Vec::new()
        };
        let eps = m.dynamics.residual_field(z.as_slice(), &a)?;
        acc += eps.iter().map(|e| e * e).sum::<f64>();
    }
    Ok(acc / samples.len() as f64)
}

/// Per-step loss record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub prediction: f64,
    pub residual: f64,
    pub latent: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<LossRecord>,
    pub wall_clock_secs: f64,
}

/// A trained model with everything needed to reproduce or reload it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: TrainedModel,
    pub train_config: TrainConfig,
    /// Loss components at the last optimization step; absent for a 0-step run.
    pub final_losses: Option<LossBreakdown>,
    pub train_seed: u64,
    pub dataset_seed: u64,
}

/// Draws `batch` anchor pairs (trajectory, time) uniformly; the anchor
/// range leaves room for the window behind and the horizon ahead.
fn sample_batch(
    rng: &mut rand_chacha::ChaCha8Rng,
    n_traj: usize,
    t_lo: usize,
    t_hi: usize,
    batch: usize,
) -> Vec<(usize, usize)> {
    (0..batch)
        .map(|_| {
            let ti = rng.gen_range(0..n_traj);
            let t0 = rng.gen_range(t_lo..=t_hi);
            (ti, t0)
        })
        .collect()
}

/// Trains a model of the given kind from scratch. Deterministic in
/// `(model_cfg, train_cfg, dataset)`: the seed fixes initialization and
/// batch order, gradients reduce in sample order, updates are serial.
pub fn train(
    kind: DynamicsKind,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    dataset: &Dataset,
) -> Result<(Checkpoint, TrainingLog)> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    let needed = model_cfg.window + train_cfg.horizon;
    if dataset.horizon() < needed {
        return Err(HwmError::DatasetTooShort {
            needed,
            got: dataset.horizon(),
        });
    }
    let obs_dim = dataset.obs_dim();
    let action_dim = dataset.action_dim();
    let mut model = init_model(
        kind,
        model_cfg,
        obs_dim,
        action_dim,
        dataset.obs_mean.clone(),
        dataset.obs_std.clone(),
        train_cfg.seed,
    )?;

    let start = Instant::now();
    let mut theta = parameters(&model);
    let mut m1 = vec![0.0; theta.len()];
    let mut m2 = vec![0.0; theta.len()];
    let mut batch_rng = rng::seeded(rng::derive(train_cfg.seed, stream::BATCH));
    let n_traj = dataset.trajectories.len();
    let t_lo = model_cfg.window - 1;
    let t_hi = dataset.horizon() - train_cfg.horizon;
    let mut records = Vec::with_capacity(train_cfg.steps);

    for step in 0..train_cfg.steps {
        let samples = sample_batch(&mut batch_rng, n_traj, t_lo, t_hi, train_cfg.batch_size);
        let (losses, mut grad) = batch_objective(&model, dataset, &samples, train_cfg, step)?;

        // Global-norm clip before the moment updates.
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > train_cfg.clip_norm {
            let s = train_cfg.clip_norm / norm;
            for g in grad.iter_mut() {
                *g *= s;
            }
        }
        let t = (step + 1) as i32;
        let bc1 = 1.0 - train_cfg.beta1.powi(t);
        let bc2 = 1.0 - train_cfg.beta2.powi(t);
        for i in 0..theta.len() {
            m1[i] = train_cfg.beta1 * m1[i] + (1.0 - train_cfg.beta1) * grad[i];
            m2[i] = train_cfg.beta2 * m2[i] + (1.0 - train_cfg.beta2) * grad[i] * grad[i];
            let mhat = m1[i] / bc1;
            let vhat = m2[i] / bc2;
            theta[i] -= train_cfg.lr * mhat / (vhat.sqrt() + train_cfg.adam_eps);
        }
        set_parameters(&mut model, &theta);
        records.push(LossRecord {
            step,
            prediction: losses.prediction,
            residual: losses.residual,
            latent: losses.latent,
            total: losses.total,
        });
    }

    let final_losses = records.last().map(|r| LossBreakdown {
        prediction: r.prediction,
        residual: r.residual,
        latent: r.latent,
        total: r.total,
    });
    let log = TrainingLog {
        records,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        model,
        train_config: train_cfg.clone(),
        final_losses,
        train_seed: train_cfg.seed,
        dataset_seed: dataset.seed,
    };
    Ok((checkpoint, log))
}

/// Open-loop prediction error at selected horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutErrors {
    pub horizons: Vec<usize>,
    /// Mean over trajectories of the squared observation error at each
    /// horizon (raw observation space).
    pub mean: Vec<f64>,
    /// `[n_traj × |horizons|]`; diverged rollouts score infinity from the
    /// first bad step onward.
    pub per_traj: Array2<f64>,
}

/// Rolls the model open-loop from each trajectory's first full window and
/// scores squared error against the recorded raw observations at exactly
/// the requested horizons.
pub fn evaluate_rollout_error(
    model: &TrainedModel,
    dataset: &Dataset,
    horizons: &[usize],
) -> Result<RolloutErrors> {
    if horizons.is_empty() {
        return Err(HwmError::InvalidParams("need at least one horizon".into()));
    }
    let max_h = *horizons.iter().max().unwrap();
    let k = model.window();
    if dataset.horizon() + 1 < k + max_h {
        return Err(HwmError::DatasetTooShort {
            needed: k + max_h - 1,
            got: dataset.horizon(),
        });
    }
    let n_traj = dataset.trajectories.len();
    let rows: Vec<Vec<f64>> = crate::par::map_range(n_traj, |ti| {
        let traj = &dataset.trajectories[ti];
        let t0 = k - 1;
        let window = traj.observations.slice(ndarray::s![0..k, ..]);
        let mut errs = vec![f64::INFINITY; horizons.len()];
        let Ok(z0) = model.encode_window(window) else {
            return errs;
        };
        let mut z = z0.as_slice().to_vec();
        let mut diverged = false;
        for h in 1..=max_h {
            if !diverged {
                let a: Vec<f64> = if traj.actions.action_dim() > 0 {
                    traj.actions.row(t0 + h - 1).to_vec()
                } else {
                    Vec::new()
                };
                match model.predict_latent(&z, &a) {
                    Ok(next) if next.iter().all(|v| v.is_finite()) => z = next,
                    _ => diverged = true,
                }
            }
            if let Some(slot) = horizons.iter().position(|&hh| hh == h) {
                if !diverged {
                    if let Ok(pred) = model.decode_raw(&z) {
                        let truth = traj.observations.row(t0 + h);
                        let err: f64 = pred
                            .iter()
                            .zip(truth.iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        errs[slot] = err;
                    }
                }
            }
        }
        errs
    });
    let mut per_traj = Array2::<f64>::zeros((n_traj, horizons.len()));
    for (ti, row) in rows.iter().enumerate() {
        for (hi, v) in row.iter().enumerate() {
            per_traj[[ti, hi]] = *v;
        }
    }
    let mean: Vec<f64> = (0..horizons.len())
        .map(|hi| (0..n_traj).map(|ti| per_traj[[ti, hi]]).sum::<f64>() / n_traj as f64)
        .collect();
    Ok(RolloutErrors {
        horizons: horizons.to_vec(),
        mean,
        per_traj,
    })
}
