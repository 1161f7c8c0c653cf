//! Error type shared by every module in the crate.

use thiserror::Error;

/// All failure modes of model construction, integration, training and
/// planning. Numerical blow-ups carry the index where they were first
/// detected so long pipelines can report *where* things went wrong.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HwmError {
    /// Two array arguments that must agree in shape do not.
    #[error("shape mismatch: {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    /// A constructor was handed NaN or infinity.
    #[error("non-finite entry in {context}")]
    NonFinite { context: String },

    /// A flat phase vector must have even length (equal q and p blocks).
    #[error("flat state length {len} is odd; expected [q; p] with equal blocks")]
    OddStateLength { len: usize },

    /// A parameter value outside its admissible range (non-positive mass,
    /// negative stiffness, zero dt, ...).
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    /// State/action dimension does not match what the model was built for.
    #[error("dimension mismatch: {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    /// Leapfrog was requested on a field with active dissipation, input
    /// gain, or residual. The splitting is only valid for the conservative
    /// separable part.
    #[error("leapfrog requires a conservative separable field (R, G·a and the residual must all be inactive)")]
    LeapfrogOnNonSeparable,

    /// The implicit-midpoint fixed-point iteration failed to reach
    /// tolerance within the iteration cap.
    #[error("implicit midpoint did not converge within {max_iters} iterations (residual {residual:.3e})")]
    MidpointNoConvergence { max_iters: usize, residual: f64 },

    /// Integration produced NaN/Inf or left the trust region.
    #[error("state diverged at step {step}")]
    NonFiniteState { step: usize },

    /// The training loss became non-finite for a particular batch element.
    #[error("non-finite loss at training step {step}, batch index {batch_index}")]
    NonFiniteLoss { step: usize, batch_index: usize },

    /// A dataset is too short to cut even one training window.
    #[error("dataset too short: need horizon >= {needed} steps, trajectories have {got}")]
    DatasetTooShort { needed: usize, got: usize },

    /// The encoder was handed a window of the wrong length.
    #[error("encoder window has {got} rows, expected {expected}")]
    WindowLengthMismatch { expected: usize, got: usize },

    /// A planner was asked to select from zero candidates.
    #[error("candidate set is empty")]
    EmptyCandidateSet,

    /// Catch-all for contract violations with a human-readable message.
    #[error("{0}")]
    Invalid(String),
}
