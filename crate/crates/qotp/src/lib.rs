//! Simulation of a quantum-one-time-pad secure direct communication protocol.
//!
//! The protocol transmits a secret message directly over a quantum channel,
//! without first distilling a shared key. It runs in two phases:
//!
//! 1. **Batch check.** Bob prepares a batch of single photons, each drawn
//!    uniformly from four polarization states, and sends them to Alice. Alice
//!    measures a random subset in random bases and announces positions, bases
//!    and results; Bob compares against his preparation records and aborts if
//!    the matched-basis error rate is too high.
//! 2. **Message coding.** Only after the batch is deemed
//!    secure does Alice encode message bits onto the surviving photons with
//!    one of two unitaries (identity for 0, a bit-flip that acts in both
//!    measuring bases for 1) and return them. Bob measures each photon in the
//!    basis he prepared it in and reads the message off directly. A second
//!    random-check round guards the return trip.
//!
//! The crate models single qubits as density matrices ([`qstate`]), photon
//! transmission through ideal, depolarizing and lossy channels ([`channel`]),
//! eavesdropping strategies including intercept-resend and an
//! unambiguous-state-discrimination "opaque" attack ([`adversary`]), the full
//! two-party session as a replayable state machine ([`protocol`]), and Monte
//! Carlo ensembles with detection statistics and information-leakage bounds
//! ([`analysis`]).
//!
//! Every source of randomness is an explicit stream of `u64` draws, so any
//! session can be replayed bit-for-bit from its transcript.
//!
//! # Example
//!
//! ```
//! use qotp::protocol::{replay_transcript, run_session, ReplayVerdict, SessionConfig, SessionStatus};
//!
//! let config = SessionConfig {
//!     n: 256,
//!     message: vec![true, false, true, true],
//!     ..SessionConfig::default()
//! };
//! let outcome = run_session(&config)?;
//! assert_eq!(outcome.status, SessionStatus::Completed);
//! assert_eq!(outcome.decoded_message.unwrap(), vec![Some(true), Some(false), Some(true), Some(true)]);
//!
//! // The transcript records every draw and replays byte for byte.
//! let text = outcome.transcript.to_text();
//! assert_eq!(replay_transcript(&text)?, ReplayVerdict::Identical);
//! # Ok::<(), qotp::Error>(())
//! ```

pub mod adversary;
pub mod analysis;
pub mod channel;
pub mod mat2;
pub mod protocol;
pub mod qstate;
pub mod rng;

use thiserror::Error as ThisError;

/// Errors produced by simulator configuration, validation and replay.
#[derive(Debug, Clone, PartialEq, ThisError)]
pub enum Error {
    /// A density matrix failed the Hermiticity / unit-trace / positivity checks.
    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    /// An ensemble's probabilities are out of range or do not sum to one.
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    /// A channel model carries an out-of-range parameter or a malformed chain.
    #[error("invalid channel model: {0}")]
    InvalidChannel(String),

    /// An attack strategy carries an out-of-range parameter.
    #[error("invalid attack strategy: {0}")]
    InvalidAttack(String),

    /// Matched-basis error rates are undefined for channels with loss stages.
    #[error("channel has a loss stage; matched-basis error rate is undefined")]
    LossyErrorRate,

    /// A configuration field failed validation.
    #[error("configuration error: {field}: {reason}")]
    Config { field: String, reason: String },

    /// The message does not fit the batch after checks and expected losses.
    #[error("configuration error: message: {required} bits required but only {available} positions available")]
    Capacity { required: usize, available: usize },

    /// An eavesdropping check produced no matched-basis comparisons.
    #[error("inconclusive eavesdropping check: no matched-basis comparisons")]
    InconclusiveCheck,

    /// A transcript file could not be parsed.
    #[error("transcript parse error at line {line}: {reason}")]
    TranscriptParse { line: usize, reason: String },
}

pub use adversary::{AttackStrategy, BasisPolicy, Eve, EveAction, EveMemory, UsdLabel, UsdPovm};
pub use channel::{ChannelModel, TransmitResult};
pub use mat2::Mat2;
pub use protocol::{
    run_session, PhotonRecord, SessionConfig, SessionOutcome, SessionStatus, StateSet,
};
pub use qstate::{Basis, EncodingOp, Ensemble, QubitState};
pub use rng::{derive_seed, DrawSource, SessionRng};
