//! Numerical capacity-distortion trade-offs for state-dependent discrete
//! memoryless channels.
//!
//! A transmitter communicates over a channel `P(z|x,s)` whose i.i.d. state `s`
//! the receiver must also estimate within a distortion budget. The transmitter
//! may see side information about the state (strictly causally, causally, or
//! non-causally) and may receive feedback. The achievable rate at a given
//! distortion is the value of a simplex-constrained optimization problem over
//! a handful of conditional distributions; this crate solves it with a
//! proximal block coordinate ascent whose stopping criterion is a certified
//! upper bound on the objective.
//!
//! Module map:
//!
//! * [`prob`] — finite-alphabet probability vectors, stochastic kernels, dense
//!   joint tensors, and information measures (all logs in nats).
//! * [`channel`] — channel instances, the Shannon-strategy expansion that
//!   removes the encoder as an optimization variable, and builders that
//!   discretize the Gaussian example models onto finite alphabets.
//! * [`solver`] — the point-to-point solver: block updates, the upper bound
//!   `B`, the certified stopping rule, and trade-off curve sweeps.
//! * [`bc`] — degraded broadcast channels: degradedness check, weighted
//!   sum-rate solver, region sweeps, and the two-receiver sensing special
//!   case.
//! * [`oracle`] — independent brute-force and closed-form verifiers
//!   (Blahut-Arimoto, exhaustive estimators, stationarity certificates). These
//!   share no code with the solvers on purpose.

pub mod bc;
pub mod channel;
pub mod oracle;
pub mod prob;
pub mod rng;
pub mod solver;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("alphabet or tensor too large: {0} cells exceeds limit {1}")]
    TooLarge(usize, usize),
    #[error("strategy table explosion: |X|^|S_T| = {0} exceeds cap {1}")]
    StrategyExplosion(usize, usize),
    #[error("channel is not in the required mode: {0}")]
    ModeViolation(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Dense-tensor size guard. `CDTRADE_MAX_TENSOR` overrides the default of 1e7
/// cells.
pub fn max_tensor_cells() -> usize {
    static LIMIT: std::sync::OnceLock<usize> = std::sync::OnceLock::new();
    *LIMIT.get_or_init(|| {
        std::env::var("CDTRADE_MAX_TENSOR")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(10_000_000)
    })
}
