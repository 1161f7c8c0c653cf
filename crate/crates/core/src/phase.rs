//! Phase-space containers and the canonical symplectic structure.
//!
//! A state is `N` entities with `d`-dimensional generalized positions and
//! momenta. The flat layout is `[vec(q); vec(p)]`, entity-major within each
//! block, so for entity `i` and coordinate `k`:
//!
//! ```text
//!     z[i*d + k]          = q[i][k]
//!     z[N*d + i*d + k]    = p[i][k]
//! ```
//!
//! With that ordering the canonical structure matrix is the block form
//! `J = [[0, I], [-I, 0]]`, and `J · [q; p] = [p; -q]`.

use crate::error::HwmError;
use crate::Result;
use ndarray::Array2;

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Positions and momenta as `[N_entities × d]` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    q: Array2<f64>,
    p: Array2<f64>,
}

impl PhaseState {
    /// Builds a state, rejecting shape mismatches and non-finite entries.
    pub fn new(q: Array2<f64>, p: Array2<f64>) -> Result<Self> {
        if q.shape() != p.shape() {
            return Err(HwmError::ShapeMismatch {
                context: "PhaseState q vs p".into(),
                expected: q.shape().to_vec(),
                got: p.shape().to_vec(),
            });
        }
        let finite = q.iter().chain(p.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(HwmError::NonFinite {
                context: "PhaseState".into(),
            });
        }
        Ok(Self { q, p })
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn p(&self) -> &Array2<f64> {
        &self.p
    }

    pub fn n_entities(&self) -> usize {
        self.q.nrows()
    }

    pub fn entity_dim(&self) -> usize {
        self.q.ncols()
    }

    /// Total phase dimension `2·N·d`.
    pub fn dim(&self) -> usize {
        2 * self.q.len()
    }

    /// Position row of entity `i` as a contiguous slice.
    pub fn q_entity(&self, i: usize) -> &[f64] {
        self.q.row(i).to_slice().expect("row-major layout")
    }

    /// Momentum row of entity `i` as a contiguous slice.
    pub fn p_entity(&self, i: usize) -> &[f64] {
        self.p.row(i).to_slice().expect("row-major layout")
    }
}

/// Flat `[q; p]` vector. Invariants: even length, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatState(Vec<f64>);

impl FlatState {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.len() % 2 != 0 {
            return Err(HwmError::OddStateLength { len: v.len() });
        }
        if !all_finite(&v) {
            return Err(HwmError::NonFinite {
                context: "FlatState".into(),
            });
        }
        Ok(Self(v))
    }

    /// Length of the full vector (2·N·d).
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// The position block (first half).
    pub fn q_block(&self) -> &[f64] {
        &self.0[..self.0.len() / 2]
    }

    /// The momentum block (second half).
    pub fn p_block(&self) -> &[f64] {
        &self.0[self.0.len() / 2..]
    }
}

/// `J v` for a flat `[q; p]` vector: returns `[v_p; -v_q]`.
pub fn j_apply(v: &[f64]) -> Vec<f64> {
    debug_assert!(v.len() % 2 == 0);
    let n = v.len() / 2;
    let mut out = Vec::with_capacity(v.len());
    out.extend_from_slice(&v[n..]);
    out.extend(v[..n].iter().map(|x| -x));
    out
}

/// Canonical structure matrix `J = [[0, I], [-I, 0]]` of size `2n × 2n`,
/// where `n` is the number of (q, p) pairs.
pub fn symplectic_matrix(n_pairs: usize) -> Array2<f64> {
    let n = n_pairs;
    let mut j = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        j[[i, n + i]] = 1.0;
        j[[n + i, i]] = -1.0;
    }
    j
}

/// `[vec(q); vec(p)]`, entity-major.
pub fn flatten(s: &PhaseState) -> FlatState {
    let mut v = Vec::with_capacity(s.dim());
    v.extend(s.q().iter());
    v.extend(s.p().iter());
    FlatState(v)
}

/// Inverse of [`flatten`]; fails if the length is not `2·n·d`.
pub fn unflatten(z: &FlatState, n_entities: usize, entity_dim: usize) -> Result<PhaseState> {
    let need = 2 * n_entities * entity_dim;
    if z.len() != need {
        return Err(HwmError::DimensionMismatch {
            context: format!("unflatten to {n_entities}×{entity_dim}"),
            expected: need,
            got: z.len(),
        });
    }
    let half = need / 2;
    let q = Array2::from_shape_vec((n_entities, entity_dim), z.0[..half].to_vec())
        .expect("length checked");
    let p = Array2::from_shape_vec((n_entities, entity_dim), z.0[half..].to_vec())
        .expect("length checked");
    PhaseState::new(q, p)
}

/// An `[H × d_a]` action sequence with its sampling interval. `H = 0`
/// (no actions, e.g. a bare initial state) is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSequence {
    a: Array2<f64>,
    dt: f64,
}

impl ActionSequence {
    pub fn new(a: Array2<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(HwmError::InvalidParams(format!(
                "action sequence dt must be positive and finite, got {dt}"
            )));
        }
        if !a.iter().all(|x| x.is_finite()) {
            return Err(HwmError::NonFinite {
                context: "ActionSequence".into(),
            });
        }
        Ok(Self { a, dt })
    }

    /// Zero-filled sequence, the "no control" case.
    pub fn zeros(horizon: usize, action_dim: usize, dt: f64) -> Result<Self> {
        Self::new(Array2::zeros((horizon, action_dim)), dt)
    }

    pub fn horizon(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.a
    }

    /// Action at step `k` as a contiguous slice.
    pub fn row(&self, k: usize) -> &[f64] {
        self.a.row(k).to_slice().expect("row-major layout")
    }
}

/// States visited by an integrator plus the actions that produced them.
///
/// `states.len() == actions.horizon() + 1`, `times[k] == k·dt` up to float
/// rounding. The spacing check scales with `|t|` because `(k+1)·dt − k·dt`
/// can differ from `dt` by an ulp of `t` itself once `k` is large.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<FlatState>,
    pub actions: ActionSequence,
    pub times: Vec<f64>,
}

impl Trajectory {
    pub fn new(states: Vec<FlatState>, actions: ActionSequence, times: Vec<f64>) -> Result<Self> {
        if states.len() != actions.horizon() + 1 {
            return Err(HwmError::DimensionMismatch {
                context: "Trajectory states vs actions".into(),
                expected: actions.horizon() + 1,
                got: states.len(),
            });
        }
        if times.len() != states.len() {
            return Err(HwmError::DimensionMismatch {
                context: "Trajectory times vs states".into(),
                expected: states.len(),
                got: times.len(),
            });
        }
        let dt = actions.dt();
        for k in 0..times.len().saturating_sub(1) {
            let gap = times[k + 1] - times[k];
            let tol = 1e-12 * times[k + 1].abs().max(1.0);
            if (gap - dt).abs() > tol {
                return Err(HwmError::InvalidParams(format!(
                    "trajectory times not uniformly spaced at step {k}: gap {gap}, dt {dt}"
                )));
            }
        }
        let dim = states.first().map(|s| s.len());
        if let Some(d) = dim {
            if states.iter().any(|s| s.len() != d) {
                return Err(HwmError::Invalid(
                    "trajectory states have inconsistent dimensions".into(),
                ));
            }
        }
        Ok(Self {
            states,
            actions,
            times,
        })
    }

    /// Builds the time axis `k·dt` automatically.
    pub fn from_states(states: Vec<FlatState>, actions: ActionSequence) -> Result<Self> {
        let dt = actions.dt();
        let times = (0..states.len()).map(|k| k as f64 * dt).collect();
        Self::new(states, actions, times)
    }

    pub fn horizon(&self) -> usize {
        self.actions.horizon()
    }

    pub fn final_state(&self) -> &FlatState {
        self.states.last().expect("trajectory has >= 1 state")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn symplectic_matrix_hand_values() {
        let j = symplectic_matrix(1);
        assert_eq!(j, array![[0.0, 1.0], [-1.0, 0.0]]);
    }

    #[test]
    fn j_squares_to_minus_identity() {
        for n in 1..=4 {
            let j = symplectic_matrix(n);
            let jj = j.dot(&j);
            for r in 0..2 * n {
                for c in 0..2 * n {
                    let want = if r == c { -1.0 } else { 0.0 };
                    assert_eq!(jj[[r, c]], want, "J² entry ({r},{c}) for n={n}");
                }
            }
            // J is orthogonal: Jᵀ J = I.
            let jtj = j.t().dot(&j);
            for r in 0..2 * n {
                for c in 0..2 * n {
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert_eq!(jtj[[r, c]], want, "JᵀJ entry ({r},{c}) for n={n}");
                }
            }
        }
    }

    #[test]
    fn j_apply_matches_matrix() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let jv = j_apply(&v);
        assert_eq!(jv, vec![4.0, 5.0, 6.0, -1.0, -2.0, -3.0]);
    }

    #[test]
    fn flatten_layout_is_entity_major() {
        let s = PhaseState::new(
            array![[1.0, 2.0], [3.0, 4.0]],
            array![[5.0, 6.0], [7.0, 8.0]],
        )
        .unwrap();
        let z = flatten(&s);
        assert_eq!(z.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(z.q_block(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(z.p_block(), &[5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(PhaseState::new(array![[1.0]], array![[1.0, 2.0]]).is_err());
        assert!(PhaseState::new(array![[f64::NAN]], array![[0.0]]).is_err());
        assert!(FlatState::new(vec![1.0, 2.0, 3.0]).is_err());
        assert!(FlatState::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(ActionSequence::new(Array2::zeros((3, 1)), 0.0).is_err());
        assert!(ActionSequence::new(Array2::zeros((3, 1)), -0.1).is_err());
    }

    #[test]
    fn empty_action_sequence_gives_single_state_trajectory() {
        let z0 = FlatState::new(vec![1.0, -1.0]).unwrap();
        let acts = ActionSequence::zeros(0, 0, 0.1).unwrap();
        let traj = Trajectory::from_states(vec![z0.clone()], acts).unwrap();
        assert_eq!(traj.horizon(), 0);
        assert_eq!(traj.final_state(), &z0);
        assert_eq!(traj.times, vec![0.0]);
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let z = FlatState::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(unflatten(&z, 2, 2).is_err());
        assert!(unflatten(&z, 1, 1).is_err());
        assert!(unflatten(&z, 1, 2).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn flatten_unflatten_round_trips(
            n in 1usize..4,
            d in 1usize..4,
            raw in proptest::collection::vec(-1e6f64..1e6, 32),
        ) {
            let take = 2 * n * d;
            prop_assume!(raw.len() >= take);
            let vals = &raw[..take];
            let q = Array2::from_shape_vec((n, d), vals[..take / 2].to_vec()).unwrap();
            let p = Array2::from_shape_vec((n, d), vals[take / 2..].to_vec()).unwrap();
            let s = PhaseState::new(q, p).unwrap();
            let z = flatten(&s);
            let s2 = unflatten(&z, n, d).unwrap();
            prop_assert_eq!(&s, &s2);
            // And through the matrix: J·z == j_apply(z).
            let j = symplectic_matrix(n * d);
            let zv = ndarray::Array1::from(z.as_slice().to_vec());
            let jz = j.dot(&zv);
            let fast = j_apply(z.as_slice());
            for (a, b) in jz.iter().zip(&fast) {
                prop_assert_eq!(a, b);
            }
        }
    }
}
