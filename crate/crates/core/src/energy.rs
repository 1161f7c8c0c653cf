//! Energy functions over phase space and their exact gradients.
//!
//! Two families share one interface:
//!
//! * **Analytic** closed forms (harmonic oscillator, pendulum, spring chain,
//!   softened two-body, free particle) with hand-derived gradients — these
//!   cross-check the learned path and drive the reference worlds.
//! * **Learned** energies decomposed per entity,
//!   `H = Σᵢ K(pᵢ) + Σᵢ U(qᵢ) + Σ_{i<j} ½(V(qᵢ,qⱼ) + V(qⱼ,qᵢ))`,
//!   with all entities sharing the same K/U/V networks. The pairwise term is
//!   symmetrized so entity order cannot leak into the energy.
//!
//! Both forms are separable (`H = T(p) + W(q)`): kinetic terms read only
//! momenta, potential terms only positions. The splitting integrator relies
//! on this.
//!
//! Gradients of learned energies are exact reverse-mode sweeps through the
//! networks ([`crate::nn::Mlp::input_gradient`]), not finite differences;
//! [`finite_diff_grad`] exists as an independent check, never as the
//! implementation.

use crate::error::HwmError;
use crate::nn::Mlp;
use crate::phase::{flatten, unflatten, FlatState, PhaseState};
use crate::{rng, Result};
use serde::{Deserialize, Serialize};

/// Softening length for the two-body potential, keeps the force finite
/// through close encounters.
pub const TWO_BODY_SOFTENING: f64 = 1e-2;

/// Closed-form energy families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticKind {
    /// `H = p²/(2m) + k q²/2`, one entity in 1-D.
    HarmonicOscillator { k: f64, m: f64 },
    /// `H = p²/(2 m l²) − m g l cos q`, one entity in 1-D.
    Pendulum { m: f64, l: f64, g: f64 },
    /// `N` unit masses on a line joined by springs:
    /// `H = Σ pᵢ²/(2m) + Σ k/2 (qᵢ₊₁ − qᵢ − rest_len)²`.
    SpringChain {
        n: usize,
        k: f64,
        m: f64,
        rest_len: f64,
    },
    /// Two planar bodies with softened gravity:
    /// `H = |p₁|²/(2m₁) + |p₂|²/(2m₂) − g m₁ m₂ / √(|q₁−q₂|² + s²)`.
    TwoBody { m1: f64, m2: f64, g: f64 },
    /// `H = p²/(2m)`: no potential at all (double integrator's energy).
    FreeParticle { m: f64 },
}

impl AnalyticKind {
    /// (entities, per-entity dimension) implied by the family.
    pub fn layout(&self) -> (usize, usize) {
        match self {
            AnalyticKind::HarmonicOscillator { .. }
            | AnalyticKind::Pendulum { .. }
            | AnalyticKind::FreeParticle { .. } => (1, 1),
            AnalyticKind::SpringChain { n, .. } => (*n, 1),
            AnalyticKind::TwoBody { .. } => (2, 2),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(HwmError::InvalidParams(format!(
                "{what} must be positive and finite, got {v}"
            )))
        };
        match *self {
            AnalyticKind::HarmonicOscillator { k, m } => {
                if !(k > 0.0 && k.is_finite()) {
                    return bad("oscillator stiffness k", k);
                }
                if !(m > 0.0 && m.is_finite()) {
                    return bad("oscillator mass m", m);
                }
            }
            AnalyticKind::Pendulum { m, l, g } => {
                if !(m > 0.0 && m.is_finite()) {
                    return bad("pendulum mass m", m);
                }
                if !(l > 0.0 && l.is_finite()) {
                    return bad("pendulum length l", l);
                }
                if !(g > 0.0 && g.is_finite()) {
                    return bad("pendulum gravity g", g);
                }
            }
            AnalyticKind::SpringChain { n, k, m, rest_len } => {
                if n < 2 {
                    return Err(HwmError::InvalidParams(format!(
                        "spring chain needs at least 2 masses, got {n}"
                    )));
                }
                if !(k > 0.0 && k.is_finite()) {
                    return bad("spring stiffness k", k);
                }
                if !(m > 0.0 && m.is_finite()) {
                    return bad("chain mass m", m);
                }
                if !rest_len.is_finite() {
                    return Err(HwmError::InvalidParams(format!(
                        "rest length must be finite, got {rest_len}"
                    )));
                }
            }
            AnalyticKind::TwoBody { m1, m2, g } => {
                if !(m1 > 0.0 && m1.is_finite()) {
                    return bad("two-body mass m1", m1);
                }
                if !(m2 > 0.0 && m2.is_finite()) {
                    return bad("two-body mass m2", m2);
                }
                if !(g > 0.0 && g.is_finite()) {
                    return bad("gravitational constant g", g);
                }
            }
            AnalyticKind::FreeParticle { m } => {
                if !(m > 0.0 && m.is_finite()) {
                    return bad("free-particle mass m", m);
                }
            }
        }
        Ok(())
    }
}

/// Construction recipe for an energy function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HamiltonianSpec {
    Analytic { spec: AnalyticKind },
    Learned { spec: LearnedEnergySpec },
}

/// Architecture of a learned, entity-decomposed energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedEnergySpec {
    pub n_entities: usize,
    pub entity_dim: usize,
    /// Hidden widths of each of K, U, V (tanh layers; output is linear).
    pub hidden: Vec<usize>,
}

impl Default for LearnedEnergySpec {
    fn default() -> Self {
        LearnedEnergySpec {
            n_entities: 1,
            entity_dim: 1,
            hidden: vec![64, 64],
        }
    }
}

/// Learned energy: shared per-entity kinetic and potential nets plus an
/// optional pairwise interaction net (absent when there is only one entity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedEnergy {
    pub k_net: Mlp,
    pub u_net: Mlp,
    pub v_net: Option<Mlp>,
    pub n_entities: usize,
    pub entity_dim: usize,
}

/// An energy function with exact gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Hamiltonian {
    Analytic(AnalyticKind),
    Learned(LearnedEnergy),
}

/// Builds an energy function. For learned specs the seed pins every weight;
/// networks are drawn in the fixed order K, U, V.
pub fn make_hamiltonian(spec: &HamiltonianSpec, seed: u64) -> Result<Hamiltonian> {
    match spec {
        HamiltonianSpec::Analytic { spec } => {
            spec.validate()?;
            Ok(Hamiltonian::Analytic(spec.clone()))
        }
        HamiltonianSpec::Learned { spec } => {
            if spec.n_entities == 0 || spec.entity_dim == 0 {
                return Err(HwmError::InvalidParams(format!(
                    "learned energy needs n_entities >= 1 and entity_dim >= 1, got {}×{}",
                    spec.n_entities, spec.entity_dim
                )));
            }
            let d = spec.entity_dim;
            let mut r = rng::seeded(rng::derive(seed, rng::stream::INIT));
            let k_net = Mlp::init_with_hidden(d, &spec.hidden, 1, &mut r);
            let u_net = Mlp::init_with_hidden(d, &spec.hidden, 1, &mut r);
            let v_net = if spec.n_entities >= 2 {
                Some(Mlp::init_with_hidden(2 * d, &spec.hidden, 1, &mut r))
            } else {
                None
            };
            Ok(Hamiltonian::Learned(LearnedEnergy {
                k_net,
                u_net,
                v_net,
                n_entities: spec.n_entities,
                entity_dim: d,
            }))
        }
    }
}

impl Hamiltonian {
    pub fn n_entities(&self) -> usize {
        match self {
            Hamiltonian::Analytic(k) => k.layout().0,
            Hamiltonian::Learned(l) => l.n_entities,
        }
    }

    pub fn entity_dim(&self) -> usize {
        match self {
            Hamiltonian::Analytic(k) => k.layout().1,
            Hamiltonian::Learned(l) => l.entity_dim,
        }
    }

    /// Full phase dimension 2·N·d.
    pub fn dim(&self) -> usize {
        2 * self.n_entities() * self.entity_dim()
    }

    fn check_dims(&self, s: &PhaseState) -> Result<()> {
        if s.n_entities() != self.n_entities() || s.entity_dim() != self.entity_dim() {
            return Err(HwmError::ShapeMismatch {
                context: "Hamiltonian state".into(),
                expected: vec![self.n_entities(), self.entity_dim()],
                got: vec![s.n_entities(), s.entity_dim()],
            });
        }
        Ok(())
    }

    /// Scalar energy of a state.
    pub fn eval(&self, s: &PhaseState) -> Result<f64> {
        self.check_dims(s)?;
        match self {
            Hamiltonian::Analytic(kind) => Ok(eval_analytic(kind, s)),
            Hamiltonian::Learned(l) => Ok(eval_learned(l, s)),
        }
    }

    /// Scalar energy of a flat `[q; p]` state.
    pub fn eval_flat(&self, z: &[f64]) -> Result<f64> {
        let zs = FlatState::new(z.to_vec())?;
        let s = unflatten(&zs, self.n_entities(), self.entity_dim())?;
        self.eval(&s)
    }

    /// Exact gradient `[∂H/∂q; ∂H/∂p]` in flat layout.
    pub fn grad_flat(&self, z: &[f64]) -> Result<Vec<f64>> {
        let zs = FlatState::new(z.to_vec())?;
        let s = unflatten(&zs, self.n_entities(), self.entity_dim())?;
        self.grad(&s)
    }

    /// Exact gradient for a structured state, returned flat.
    pub fn grad(&self, s: &PhaseState) -> Result<Vec<f64>> {
        self.check_dims(s)?;
        match self {
            Hamiltonian::Analytic(kind) => Ok(grad_analytic(kind, s)),
            Hamiltonian::Learned(l) => Ok(grad_learned(l, s)),
        }
    }
}

fn eval_analytic(kind: &AnalyticKind, s: &PhaseState) -> f64 {
    match *kind {
        AnalyticKind::HarmonicOscillator { k, m } => {
            let q = s.q()[[0, 0]];
            let p = s.p()[[0, 0]];
            p * p / (2.0 * m) + 0.5 * k * q * q
        }
        AnalyticKind::Pendulum { m, l, g } => {
            let q = s.q()[[0, 0]];
            let p = s.p()[[0, 0]];
            p * p / (2.0 * m * l * l) - m * g * l * q.cos()
        }
        AnalyticKind::SpringChain {
            n, k, m, rest_len, ..
        } => {
            let mut h = 0.0;
            for i in 0..n {
                let p = s.p()[[i, 0]];
                h += p * p / (2.0 * m);
            }
            for i in 0..n - 1 {
                let ext = s.q()[[i + 1, 0]] - s.q()[[i, 0]] - rest_len;
                h += 0.5 * k * ext * ext;
            }
            h
        }
        AnalyticKind::TwoBody { m1, m2, g } => {
            let p1 = s.p_entity(0);
            let p2 = s.p_entity(1);
            let q1 = s.q_entity(0);
            let q2 = s.q_entity(1);
            let t1 = (p1[0] * p1[0] + p1[1] * p1[1]) / (2.0 * m1);
            let t2 = (p2[0] * p2[0] + p2[1] * p2[1]) / (2.0 * m2);
            let dx = q1[0] - q2[0];
            let dy = q1[1] - q2[1];
            let r2 = dx * dx + dy * dy + TWO_BODY_SOFTENING * TWO_BODY_SOFTENING;
            t1 + t2 - g * m1 * m2 / r2.sqrt()
        }
        AnalyticKind::FreeParticle { m } => {
            let p = s.p()[[0, 0]];
            p * p / (2.0 * m)
        }
    }
}

fn grad_analytic(kind: &AnalyticKind, s: &PhaseState) -> Vec<f64> {
    let (n, d) = (s.n_entities(), s.entity_dim());
    let half = n * d;
    let mut g = vec![0.0; 2 * half];
    match *kind {
        AnalyticKind::HarmonicOscillator { k, m } => {
            g[0] = k * s.q()[[0, 0]];
            g[1] = s.p()[[0, 0]] / m;
        }
        AnalyticKind::Pendulum { m, l, g: grav } => {
            g[0] = m * grav * l * s.q()[[0, 0]].sin();
            g[1] = s.p()[[0, 0]] / (m * l * l);
        }
        AnalyticKind::SpringChain {
            n: nm,
            k,
            m,
            rest_len,
        } => {
            for i in 0..nm {
                g[half + i] = s.p()[[i, 0]] / m;
            }
            for i in 0..nm - 1 {
                let ext = s.q()[[i + 1, 0]] - s.q()[[i, 0]] - rest_len;
                g[i] -= k * ext;
                g[i + 1] += k * ext;
            }
        }
        AnalyticKind::TwoBody { m1, m2, g: grav } => {
            let q1 = s.q_entity(0);
            let q2 = s.q_entity(1);
            let dx = q1[0] - q2[0];
            let dy = q1[1] - q2[1];
            let r2 = dx * dx + dy * dy + TWO_BODY_SOFTENING * TWO_BODY_SOFTENING;
            let coef = grav * m1 * m2 / (r2 * r2.sqrt());
            g[0] = coef * dx;
            g[1] = coef * dy;
            g[2] = -coef * dx;
            g[3] = -coef * dy;
            g[half] = s.p()[[0, 0]] / m1;
            g[half + 1] = s.p()[[0, 1]] / m1;
            g[half + 2] = s.p()[[1, 0]] / m2;
            g[half + 3] = s.p()[[1, 1]] / m2;
        }
        AnalyticKind::FreeParticle { m } => {
            g[1] = s.p()[[0, 0]] / m;
        }
    }
    g
}

fn eval_learned(l: &LearnedEnergy, s: &PhaseState) -> f64 {
    let n = l.n_entities;
    let mut h = 0.0;
    for i in 0..n {
        h += l.k_net.forward(s.p_entity(i))[0];
        h += l.u_net.forward(s.q_entity(i))[0];
    }
    if let Some(v) = &l.v_net {
        let d = l.entity_dim;
        let mut pair = vec![0.0; 2 * d];
        for i in 0..n {
            for j in (i + 1)..n {
                pair[..d].copy_from_slice(s.q_entity(i));
                pair[d..].copy_from_slice(s.q_entity(j));
                let vij = v.forward(&pair)[0];
                pair[..d].copy_from_slice(s.q_entity(j));
                pair[d..].copy_from_slice(s.q_entity(i));
                let vji = v.forward(&pair)[0];
                h += 0.5 * (vij + vji);
            }
        }
    }
    h
}

fn grad_learned(l: &LearnedEnergy, s: &PhaseState) -> Vec<f64> {
    let n = l.n_entities;
    let d = l.entity_dim;
    let half = n * d;
    let mut g = vec![0.0; 2 * half];
    for i in 0..n {
        let kt = l.k_net.forward_trace(s.p_entity(i));
        let gk = l.k_net.input_gradient(&kt);
        g[half + i * d..half + (i + 1) * d].copy_from_slice(&gk);
        let ut = l.u_net.forward_trace(s.q_entity(i));
        let gu = l.u_net.input_gradient(&ut);
        g[i * d..(i + 1) * d].copy_from_slice(&gu);
    }
    if let Some(v) = &l.v_net {
        let mut pair = vec![0.0; 2 * d];
        for i in 0..n {
            for j in (i + 1)..n {
                // ½ V(qᵢ, qⱼ): first half of the input gradient belongs to
                // entity i, second half to entity j.
                pair[..d].copy_from_slice(s.q_entity(i));
                pair[d..].copy_from_slice(s.q_entity(j));
                let tr = v.forward_trace(&pair);
                let gi = v.input_gradient(&tr);
                for k in 0..d {
                    g[i * d + k] += 0.5 * gi[k];
                    g[j * d + k] += 0.5 * gi[d + k];
                }
                // ½ V(qⱼ, qᵢ): halves swap roles.
                pair[..d].copy_from_slice(s.q_entity(j));
                pair[d..].copy_from_slice(s.q_entity(i));
                let tr = v.forward_trace(&pair);
                let gj = v.input_gradient(&tr);
                for k in 0..d {
                    g[j * d + k] += 0.5 * gj[k];
                    g[i * d + k] += 0.5 * gj[d + k];
                }
            }
        }
    }
    g
}

/// Central-difference gradient, an implementation-independent oracle for
/// [`Hamiltonian::grad`]. `eps = 1e-5` balances truncation against rounding
/// for O(1) states.
pub fn finite_diff_grad(h: &Hamiltonian, s: &PhaseState, eps: f64) -> Result<Vec<f64>> {
    let z = flatten(s);
    let mut zv = z.as_slice().to_vec();
    let mut g = vec![0.0; zv.len()];
    for i in 0..zv.len() {
        let orig = zv[i];
        zv[i] = orig + eps;
        let hp = h.eval_flat(&zv)?;
        zv[i] = orig - eps;
        let hm = h.eval_flat(&zv)?;
        zv[i] = orig;
        g[i] = (hp - hm) / (2.0 * eps);
    }
    Ok(g)
}
