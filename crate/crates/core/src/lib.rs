//! Simulation lab for mean-field multi-agent systems in which every agent
//! carries a spatial position together with a probability measure over a
//! finite label space.
//!
//! The crate provides:
//!
//! * [`measures`] — discrete measures on finite metric label spaces and on the
//!   product state space, with total-variation and bounded-Lipschitz norms and
//!   exact Wasserstein-1 distances;
//! * [`fields`] — pluggable velocity fields and label-measure drift operators,
//!   plus numeric probes for their Lipschitz/growth/positivity constants;
//! * [`particle`] — the N-agent time stepper (Euler–Maruyama positions,
//!   simplex-preserving exponential label relaxation) and a fixed-path Picard
//!   iteration solver;
//! * [`spiking`] — the integrate-and-fire variant with threshold resets and an
//!   optional heterogeneous label-noise channel;
//! * [`experiments`] — the verification harness: weak-form residuals,
//!   mean-field self-convergence, Wasserstein stability bounds, moment
//!   envelopes, Picard decay reports.

pub mod experiments;
pub mod fields;
pub mod measures;
pub mod particle;
pub mod rng;
pub mod spiking;
pub mod transport;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller violated a documented precondition.
    #[error("usage error: {0}")]
    Usage(String),
    /// A value failed its type invariant by more than the tolerated drift.
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// A run configuration is inconsistent with the active field.
    #[error("configuration error: {0}")]
    Config(String),
    /// Internal solver failure that valid inputs should never trigger.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
