//! The continuous-time model and its discrete-time steppers.
//!
//! The vector field is
//!
//! ```text
//!     f(z, a) = (J − R(z)) ∇H(z) + G(z) a + ε(z, a)
//! ```
//!
//! * `R(z) = L(z) L(z)ᵀ` with `L` lower-triangular and a softplus-positive
//!   diagonal, so `R ⪰ 0` holds by construction — with `a = 0` and the
//!   residual off, `dH/dt = −∇Hᵀ R ∇H ≤ 0` and energy can only leak.
//! * `G(z)` maps actions into phase space.
//! * `ε(z, a)` is a free correction scaled by a small gate `γ`; it's the
//!   escape hatch for dynamics outside the port-Hamiltonian form, and
//!   training penalizes its magnitude so structure stays in charge.
//!
//! Four steppers with different contracts:
//!
//! * `leapfrog` — kick-drift-kick; symplectic; only valid when the field is
//!   the conservative separable part alone (R, G·a, ε all inactive).
//! * `rk4` — fourth order, works for any field; the training default.
//! * `implicit_midpoint` — fixed-point iterated, symmetric; preserves
//!   quadratic invariants exactly (up to the iteration tolerance).
//! * `strang_split` — half-step of the non-conservative remainder, full
//!   leapfrog kick-drift-kick of the conservative core, half-step again.
//!   Collapses to plain leapfrog bit-for-bit when the extensions are off.

use crate::energy::Hamiltonian;
use crate::error::HwmError;
use crate::linalg;
use crate::nn::Mlp;
use crate::phase::{j_apply, ActionSequence, FlatState, Trajectory};
use crate::Result;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Abort threshold for rollouts: once ‖z‖₂ exceeds this the trajectory is
/// declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Fixed-point tolerance for the implicit midpoint solve (∞-norm).
pub const MIDPOINT_TOL: f64 = 1e-12;

/// Iteration cap for the implicit midpoint solve.
pub const MIDPOINT_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Leapfrog,
    Rk4,
    ImplicitMidpoint,
    StrangSplit,
}

/// Structured transition model. Every part except the energy is optional;
/// a bare `H` gives the conservative system `ż = J ∇H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortHamiltonianModel {
    pub hamiltonian: Hamiltonian,
    /// `z → packed lower-triangular factor` of R, length `2n(2n+1)/2`.
    pub r_net: Option<Mlp>,
    /// `z → vec(G)`, row-major `[2n × d_a]`.
    pub g_net: Option<Mlp>,
    /// `[z; a] → ε` before gating.
    pub eps_net: Option<Mlp>,
    /// Residual gate; the emitted correction is `γ · eps_net([z; a])`.
    pub gamma: f64,
    pub action_dim: usize,
}

impl PortHamiltonianModel {
    /// Conservative system `ż = J ∇H`.
    pub fn conservative(hamiltonian: Hamiltonian) -> Self {
        PortHamiltonianModel {
            hamiltonian,
            r_net: None,
            g_net: None,
            eps_net: None,
            gamma: 0.0,
            action_dim: 0,
        }
    }

    /// Full constructor with dimension validation.
    pub fn new(
        hamiltonian: Hamiltonian,
        r_net: Option<Mlp>,
        g_net: Option<Mlp>,
        eps_net: Option<Mlp>,
        gamma: f64,
        action_dim: usize,
    ) -> Result<Self> {
        let dim = hamiltonian.dim();
        let packed = dim * (dim + 1) / 2;
        if let Some(r) = &r_net {
            if r.in_dim() != dim || r.out_dim() != packed {
                return Err(HwmError::InvalidParams(format!(
                    "R factor net must map {dim} -> {packed}, got {} -> {}",
                    r.in_dim(),
                    r.out_dim()
                )));
            }
        }
        if let Some(g) = &g_net {
            if action_dim == 0 {
                return Err(HwmError::InvalidParams(
                    "input gain net given but action_dim = 0".into(),
                ));
            }
            if g.in_dim() != dim || g.out_dim() != dim * action_dim {
                return Err(HwmError::InvalidParams(format!(
                    "input gain net must map {dim} -> {}, got {} -> {}",
                    dim * action_dim,
                    g.in_dim(),
                    g.out_dim()
                )));
            }
        }
        if let Some(e) = &eps_net {
            if e.in_dim() != dim + action_dim || e.out_dim() != dim {
                return Err(HwmError::InvalidParams(format!(
                    "residual net must map {} -> {dim}, got {} -> {}",
                    dim + action_dim,
                    e.in_dim(),
                    e.out_dim()
                )));
            }
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(HwmError::InvalidParams(format!(
                "residual gate must be finite and >= 0, got {gamma}"
            )));
        }
        Ok(PortHamiltonianModel {
            hamiltonian,
            r_net,
            g_net,
            eps_net,
            gamma,
            action_dim,
        })
    }

    /// Phase dimension 2·N·d.
    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    fn check_za(&self, z: &[f64], a: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(HwmError::DimensionMismatch {
                context: "state".into(),
                expected: self.dim(),
                got: z.len(),
            });
        }
        if a.len() != self.action_dim {
            return Err(HwmError::DimensionMismatch {
                context: "action".into(),
                expected: self.action_dim,
                got: a.len(),
            });
        }
        Ok(())
    }

    /// Dense lower-triangular factor L(z) with softplus diagonal, or `None`
    /// when no dissipation is modelled.
    fn tri_factor(&self, z: &[f64]) -> Option<Vec<f64>> {
        let r = self.r_net.as_ref()?;
        let n = self.dim();
        let packed = r.forward(z);
        let mut l = vec![0.0; n * n];
        let mut pk = 0;
        for i in 0..n {
            for j in 0..=i {
                let raw = packed[pk];
                l[i * n + j] = if i == j {
                    raw.max(0.0) + (-raw.abs()).exp().ln_1p() // softplus
                } else {
                    raw
                };
                pk += 1;
            }
        }
        Some(l)
    }

    /// `R(z) = L Lᵀ ⪰ 0`; the zero matrix when no dissipation is modelled.
    pub fn dissipation_matrix(&self, z: &[f64]) -> Result<Array2<f64>> {
        self.check_za(z, &vec![0.0; self.action_dim])?;
        let n = self.dim();
        let mut r = Array2::<f64>::zeros((n, n));
        if let Some(l) = self.tri_factor(z) {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..=i.min(j) {
                        acc += l[i * n + k] * l[j * n + k];
                    }
                    r[[i, j]] = acc;
                }
            }
        }
        Ok(r)
    }

    /// Input gain `G(z)` as `[2n × d_a]`; zero-column matrix when actions
    /// don't exist, zero matrix when no gain is modelled.
    pub fn control_gain(&self, z: &[f64]) -> Result<Array2<f64>> {
        self.check_za(z, &vec![0.0; self.action_dim])?;
        let n = self.dim();
        let mut g = Array2::<f64>::zeros((n, self.action_dim));
        if let Some(net) = &self.g_net {
            let flat = net.forward(z);
            for i in 0..n {
                for j in 0..self.action_dim {
                    g[[i, j]] = flat[i * self.action_dim + j];
                }
            }
        }
        Ok(g)
    }

    /// Gated residual `γ · eps_net([z; a])`; exactly zero when the gate is
    /// closed or the net absent.
    pub fn residual_field(&self, z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check_za(z, a)?;
        if self.gamma == 0.0 || self.eps_net.is_none() {
            return Ok(vec![0.0; self.dim()]);
        }
        let net = self.eps_net.as_ref().unwrap();
        let mut input = Vec::with_capacity(z.len() + a.len());
        input.extend_from_slice(z);
        input.extend_from_slice(a);
        let mut eps = net.forward(&input);
        for e in eps.iter_mut() {
            *e *= self.gamma;
        }
        Ok(eps)
    }

    /// `(J − R)∇H`, the part leapfrog may not touch beyond `J∇H`. Public
    /// so evaluation code can weigh the structured field against the
    /// residual correction.
    pub fn structured_part(&self, z: &[f64]) -> Result<Vec<f64>> {
        let grad = self.hamiltonian.grad_flat(z)?;
        let mut f = j_apply(&grad);
        if let Some(l) = self.tri_factor(z) {
            let n = self.dim();
            // R ∇H = L (Lᵀ ∇H) without forming R.
            let lt_g = linalg::mat_t_vec(&l, &grad, n, n);
            let r_g = linalg::matvec(&l, &lt_g, n, n);
            for (fi, ri) in f.iter_mut().zip(&r_g) {
                *fi -= ri;
            }
        }
        Ok(f)
    }

    /// Everything except `J∇H`: `−R∇H + G a + ε`. The splitting stepper
    /// integrates this part separately.
    fn nonconservative_part(&self, z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut f = vec![0.0; n];
        if let Some(l) = self.tri_factor(z) {
            let grad = self.hamiltonian.grad_flat(z)?;
            let lt_g = linalg::mat_t_vec(&l, &grad, n, n);
            let r_g = linalg::matvec(&l, &lt_g, n, n);
            for (fi, ri) in f.iter_mut().zip(&r_g) {
                *fi -= ri;
            }
        }
        if let Some(net) = &self.g_net {
            if !a.is_empty() {
                let flat = net.forward(z);
                let ga = linalg::matvec(&flat, a, n, self.action_dim);
                for (fi, gi) in f.iter_mut().zip(&ga) {
                    *fi += gi;
                }
            }
        }
        if self.gamma != 0.0 {
            if let Some(_) = &self.eps_net {
                let eps = self.residual_field(z, a)?;
                for (fi, ei) in f.iter_mut().zip(&eps) {
                    *fi += ei;
                }
            }
        }
        Ok(f)
    }

    /// Full right-hand side `f(z, a)`.
    pub fn vector_field(&self, z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check_za(z, a)?;
        let mut f = self.structured_part(z)?;
        if let Some(net) = &self.g_net {
            if !a.is_empty() {
                let n = self.dim();
                let flat = net.forward(z);
                let ga = linalg::matvec(&flat, a, n, self.action_dim);
                for (fi, gi) in f.iter_mut().zip(&ga) {
                    *fi += gi;
                }
            }
        }
        if self.gamma != 0.0 && self.eps_net.is_some() {
            let eps = self.residual_field(z, a)?;
            for (fi, ei) in f.iter_mut().zip(&eps) {
                *fi += ei;
            }
        }
        Ok(f)
    }

    /// True when, for this action, the field reduces to `J ∇H`.
    pub fn is_conservative_for(&self, a: &[f64]) -> bool {
        let r_off = self.r_net.is_none();
        let g_off = self.g_net.is_none() || a.iter().all(|&x| x == 0.0);
        let e_off = self.eps_net.is_none() || self.gamma == 0.0;
        r_off && g_off && e_off
    }

    /// One discrete step of size `dt`. Negative `dt` integrates backward
    /// in time — for the symmetric methods (leapfrog, implicit midpoint)
    /// that is the exact inverse of the forward step.
    pub fn step(&self, z: &[f64], a: &[f64], dt: f64, method: Integrator) -> Result<Vec<f64>> {
        self.check_za(z, a)?;
        if dt == 0.0 || !dt.is_finite() {
            return Err(HwmError::InvalidParams(format!(
                "step size must be finite and nonzero, got {dt}"
            )));
        }
        match method {
            Integrator::Leapfrog => {
                if !self.is_conservative_for(a) {
                    return Err(HwmError::LeapfrogOnNonSeparable);
                }
                Ok(self.leapfrog_core(z, dt)?)
            }
            Integrator::Rk4 => self.rk4_step(z, a, dt),
            Integrator::ImplicitMidpoint => self.midpoint_step(z, a, dt),
            Integrator::StrangSplit => {
                // Half-step the remainder, leapfrog the core, half-step again.
                let half = 0.5 * dt;
                let f_nc = self.nonconservative_part(z, a)?;
                let mut z1: Vec<f64> = z.iter().zip(&f_nc).map(|(zi, fi)| zi + half * fi).collect();
                z1 = self.leapfrog_core(&z1, dt)?;
                let f_nc = self.nonconservative_part(&z1, a)?;
                for (zi, fi) in z1.iter_mut().zip(&f_nc) {
                    *zi += half * fi;
                }
                Ok(z1)
            }
        }
    }

    /// Kick-drift-kick on the conservative separable part, e.g. for
    /// `H = p²/2 + q²/2`, `z = (1, 0)`, `dt = 0.1`:
    /// `p_half = −0.05`, `q' = 0.995`, `p' = −0.09975`.
    fn leapfrog_core(&self, z: &[f64], dt: f64) -> Result<Vec<f64>> {
        let n = z.len() / 2;
        let mut out = z.to_vec();
        // Kick: p ← p − dt/2 · ∂H/∂q(q).
        let g = self.hamiltonian.grad_flat(&out)?;
        for i in 0..n {
            out[n + i] -= 0.5 * dt * g[i];
        }
        // Drift: q ← q + dt · ∂H/∂p(p_half).
        let g = self.hamiltonian.grad_flat(&out)?;
        for i in 0..n {
            out[i] += dt * g[n + i];
        }
        // Kick: p ← p − dt/2 · ∂H/∂q(q').
        let g = self.hamiltonian.grad_flat(&out)?;
        for i in 0..n {
            out[n + i] -= 0.5 * dt * g[i];
        }
        Ok(out)
    }

    fn rk4_step(&self, z: &[f64], a: &[f64], dt: f64) -> Result<Vec<f64>> {
        let k1 = self.vector_field(z, a)?;
        let z2: Vec<f64> = z.iter().zip(&k1).map(|(zi, ki)| zi + 0.5 * dt * ki).collect();
        let k2 = self.vector_field(&z2, a)?;
        let z3: Vec<f64> = z.iter().zip(&k2).map(|(zi, ki)| zi + 0.5 * dt * ki).collect();
        let k3 = self.vector_field(&z3, a)?;
        let z4: Vec<f64> = z.iter().zip(&k3).map(|(zi, ki)| zi + dt * ki).collect();
        let k4 = self.vector_field(&z4, a)?;
        Ok(z
            .iter()
            .enumerate()
            .map(|(i, zi)| zi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect())
    }

    fn midpoint_step(&self, z: &[f64], a: &[f64], dt: f64) -> Result<Vec<f64>> {
        // Solve y = z + dt f((z+y)/2, a) by fixed point, seeded with Euler.
        let f0 = self.vector_field(z, a)?;
        let mut y: Vec<f64> = z.iter().zip(&f0).map(|(zi, fi)| zi + dt * fi).collect();
        let mut residual = f64::INFINITY;
        for _ in 0..MIDPOINT_MAX_ITERS {
            let mid: Vec<f64> = z.iter().zip(&y).map(|(zi, yi)| 0.5 * (zi + yi)).collect();
            let f = self.vector_field(&mid, a)?;
            let mut delta = 0.0f64;
            for i in 0..y.len() {
                let ynew = z[i] + dt * f[i];
                delta = delta.max((ynew - y[i]).abs());
                y[i] = ynew;
            }
            residual = delta;
            if residual <= MIDPOINT_TOL {
                return Ok(y);
            }
        }
        Err(HwmError::MidpointNoConvergence {
            max_iters: MIDPOINT_MAX_ITERS,
            residual,
        })
    }

    /// Integrates an action sequence, recording every state. Aborts with
    /// the first bad step index if the state leaves the trust region
    /// (‖z‖₂ > [`DIVERGENCE_NORM`]) or stops being finite.
    pub fn rollout(
        &self,
        z0: &FlatState,
        actions: &ActionSequence,
        method: Integrator,
    ) -> Result<Trajectory> {
        if actions.action_dim() != self.action_dim {
            return Err(HwmError::DimensionMismatch {
                context: "rollout actions".into(),
                expected: self.action_dim,
                got: actions.action_dim(),
            });
        }
        let dt = actions.dt();
        let mut states = Vec::with_capacity(actions.horizon() + 1);
        check_state(z0.as_slice(), 0)?;
        states.push(z0.clone());
        let mut cur = z0.as_slice().to_vec();
        for k in 0..actions.horizon() {
            cur = self.step(&cur, actions.row(k), dt, method)?;
            check_state(&cur, k + 1)?;
            states.push(FlatState::new(cur.clone())?);
        }
        Trajectory::from_states(states, actions.clone())
    }
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

/// Unstructured competitor: one net mapping `[z; a]` directly to the next
/// state. Same interface shape as the structured model so evaluation code
/// treats them uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub net: Mlp,
    pub state_dim: usize,
    pub action_dim: usize,
}

impl BaselineModel {
    pub fn new(net: Mlp, state_dim: usize, action_dim: usize) -> Result<Self> {
        if net.in_dim() != state_dim + action_dim || net.out_dim() != state_dim {
            return Err(HwmError::InvalidParams(format!(
                "baseline net must map {} -> {state_dim}, got {} -> {}",
                state_dim + action_dim,
                net.in_dim(),
                net.out_dim()
            )));
        }
        Ok(BaselineModel {
            net,
            state_dim,
            action_dim,
        })
    }

    /// Builds a baseline whose parameter count matches `target_params`
    /// within `tol_frac` by scanning the hidden width of a two-hidden-layer
    /// net. Fails if no width lands inside the tolerance.
    pub fn matched(
        state_dim: usize,
        action_dim: usize,
        target_params: usize,
        tol_frac: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        let ind = state_dim + action_dim;
        let count = |w: usize| (ind + 1) * w + (w + 1) * w + (w + 1) * state_dim;
        let mut best_w = 1;
        let mut best_diff = usize::MAX;
        for w in 1..=2048 {
            let diff = count(w).abs_diff(target_params);
            if diff < best_diff {
                best_diff = diff;
                best_w = w;
            }
        }
        let achieved = count(best_w);
        let rel = best_diff as f64 / target_params as f64;
        if rel > tol_frac {
            return Err(HwmError::InvalidParams(format!(
                "cannot match {target_params} parameters within {tol_frac:.1}%: closest width {best_w} gives {achieved}"
            )));
        }
        let net = Mlp::init(&[ind, best_w, best_w, state_dim], rng);
        BaselineModel::new(net, state_dim, action_dim)
    }

    /// Discrete transition `z' = f([z; a])`.
    pub fn step(&self, z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.state_dim {
            return Err(HwmError::DimensionMismatch {
                context: "baseline state".into(),
                expected: self.state_dim,
                got: z.len(),
            });
        }
        if a.len() != self.action_dim {
            return Err(HwmError::DimensionMismatch {
                context: "baseline action".into(),
                expected: self.action_dim,
                got: a.len(),
            });
        }
        let mut input = Vec::with_capacity(z.len() + a.len());
        input.extend_from_slice(z);
        input.extend_from_slice(a);
        Ok(self.net.forward(&input))
    }

    /// Iterated transition with the same divergence guard as the
    /// structured rollout.
    pub fn rollout(&self, z0: &FlatState, actions: &ActionSequence) -> Result<Trajectory> {
        if actions.action_dim() != self.action_dim {
            return Err(HwmError::DimensionMismatch {
                context: "baseline rollout actions".into(),
                expected: self.action_dim,
                got: actions.action_dim(),
            });
        }
        let mut states = Vec::with_capacity(actions.horizon() + 1);
        check_state(z0.as_slice(), 0)?;
        states.push(z0.clone());
        let mut cur = z0.as_slice().to_vec();
        for k in 0..actions.horizon() {
            cur = self.step(&cur, actions.row(k))?;
            check_state(&cur, k + 1)?;
            states.push(FlatState::new(cur.clone())?);
        }
        Trajectory::from_states(states, actions.clone())
    }
}
