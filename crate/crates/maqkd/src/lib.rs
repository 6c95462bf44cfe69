//! Secret-key-rate simulation for decoy-state memory-assisted QKD (MA-QKD)
//! and a reference no-memory MDI-QKD system.
//!
//! The library models a symmetric link in which Alice and Bob send
//! phase-randomised weak coherent pulses to a middle node. In the
//! memory-assisted system the middle node teleports each arriving state into
//! a quantum memory via a heralding side measurement and performs the central
//! Bell-state measurement once both memories are loaded; in the reference
//! MDI-QKD system the central measurement acts on the incoming pulses
//! directly. Key rates are computed in two regimes:
//!
//! * **asymptotic** — closed-form gains and error rates with perfect
//!   single-photon estimates ([`rates`]);
//! * **finite key** — nominal observed counts ([`counts`]) fed through a
//!   Chernoff-bound + linear-program decoy-state estimation chain
//!   ([`finite_key`]).
//!
//! Source intensities and their selection probabilities are optimized per
//! distance with a derivative-free search ([`optimizer`]), and distance
//! sweeps with crossover detection are provided by [`sweep`]. Every closed
//! form used by the rate chain can be cross-checked against a round-level
//! Monte-Carlo simulation ([`oracle`]).
//!
//! With the default `parallel` feature, Monte-Carlo trials and sweep points
//! run on a rayon thread pool; results are bitwise independent of the thread
//! count because all randomness is derived from counter-based per-trial
//! streams ([`rng`]).

pub mod counts;
pub mod exec;
pub mod finite_key;
pub mod loading;
pub mod numerics;
pub mod optimizer;
pub mod oracle;
pub mod rates;
pub mod rng;
pub mod sweep;
pub mod system;



/// Errors produced by the simulation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A parameter set violated a declared invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// An iterative numerical procedure failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A parsing problem in a counts CSV or configuration input.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Key-rate evaluation summary shared by the asymptotic and finite-key
/// pipelines. `rate_bps` is clamped at zero; diagnostics keep enough
/// information to explain a zero rate.
#[derive(Debug, Clone, Default)]
pub struct KeyRateResult {
    /// Secret key rate in bits per second (clamped at 0).
    pub rate_bps: f64,
    /// Signed, unclamped rate in bits per second.
    pub rate_signed_bps: f64,
    /// Secret key length in bits for the finite-key regime.
    pub key_bits: Option<f64>,
    /// Probability per round of a sifted key bit (both users chose the
    /// signal intensity), including selection probabilities.
    pub q_z: f64,
    /// Bit error rate of the sifted key.
    pub e_z: f64,
    /// Phase-error rate: the asymptotic value, or its finite-key upper
    /// bound. `None` when it could not be bounded.
    pub e_ph: Option<f64>,
    /// Finite-key lower bound on single-photon counts in the sifted key.
    pub m11z_l: Option<f64>,
    /// Reason for a degenerate result, when any.
    pub note: Option<String>,
}

mod simplex;
