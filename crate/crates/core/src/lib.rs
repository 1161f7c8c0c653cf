//! Desk-scale world models with Hamiltonian structure.
//!
//! The crate models a dynamical system in a latent phase space `z = [q; p]`
//! and learns an energy function + port-Hamiltonian vector field
//!
//! ```text
//!     dz/dt = (J - R(z)) ∇H(z) + G(z) a + ε(z, a)
//! ```
//!
//! where `J` is the canonical symplectic matrix, `R ⪰ 0` is a learned
//! dissipation, `G` a learned input gain, and `ε` a small gated residual.
//! Around that core live analytic reference systems, symplectic and
//! Runge-Kutta integrators, an observation encoder/decoder, a deterministic
//! trainer, shooting/CEM planners with receding-horizon control, and
//! structure diagnostics (energy drift, symplecticity, reversibility).
//!
//! Everything is seeded and reductions are order-fixed, so any pipeline run
//! twice with the same inputs produces bit-identical numbers — with or
//! without the `parallel` feature.

pub mod autodiff;
pub mod diagnostics;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod learning;
pub mod linalg;
pub mod nn;
pub mod par;
pub mod perception;
pub mod phase;
pub mod planning;
pub mod rng;
pub mod worlds;

pub use error::HwmError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, HwmError>;
