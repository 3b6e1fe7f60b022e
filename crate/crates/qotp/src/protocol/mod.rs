//! The two-phase session state machine: batch preparation, the eavesdropping
//! check, the abort decision, message encoding, the return trip, and decoding.
//!
//! A session is strictly sequential and fully determined by its
//! [`SessionConfig`] (including the seed), so re-running a configuration
//! reproduces the identical [`SessionTranscript`] byte for byte. Party logic
//! is isolated by construction: the `alice_*` operations only ever see what
//! arrived at Alice's side plus public announcements, the `bob_*` operations
//! only Bob's preparation records plus public announcements, and Eve's memory
//! is threaded through the harness alone.

pub mod transcript;

pub use transcript::{
    replay_transcript, Event, Phase1Verdict, Phase2Verdict, ReplayVerdict, SessionTranscript,
};

use crate::adversary::{AttackStrategy, Eve};
use crate::channel::{ChannelModel, TransmitResult};
use crate::qstate::{Basis, EncodingOp, Ensemble, QubitState};
use crate::rng::{unit_f64, DrawSource, SessionRng, Tap};
use crate::Error;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Bob's private record of one prepared photon: the quantum one-time-pad
/// entry for that position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhotonRecord {
    pub position: usize,
    pub basis: Basis,
    pub bit: bool,
}

impl PhotonRecord {
    pub fn state(&self) -> QubitState {
        QubitState::prepare(self.basis, self.bit)
    }
}

/// The preparation alphabet Bob draws from.
///
/// `FourState` uses all four polarization eigenstates; `TwoStateCai` mimics
/// the two-state variant that only ever sends `|H>` and `|u>`, the choice
/// that opens the door to the opaque attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSet {
    FourState,
    TwoStateCai,
}

impl StateSet {
    pub fn arity(self) -> u64 {
        match self {
            StateSet::FourState => 4,
            StateSet::TwoStateCai => 2,
        }
    }

    /// The `index`-th preparation; only the low bits of `index` are used, so
    /// a uniform draw maps to a uniform preparation without bias.
    pub fn preparation(self, index: u64) -> (Basis, bool) {
        match self {
            StateSet::FourState => match index & 3 {
                0 => (Basis::Plus, false),
                1 => (Basis::Plus, true),
                2 => (Basis::Cross, false),
                _ => (Basis::Cross, true),
            },
            StateSet::TwoStateCai => {
                if index & 1 == 0 {
                    (Basis::Plus, false)
                } else {
                    (Basis::Cross, false)
                }
            }
        }
    }

    /// The equiprobable preparation ensemble, for entropy bookkeeping.
    pub fn ensemble(self) -> Ensemble {
        let p = 1.0 / self.arity() as f64;
        let entries = (0..self.arity())
            .map(|i| {
                let (basis, bit) = self.preparation(i);
                (p, QubitState::prepare(basis, bit))
            })
            .collect();
        Ensemble::new(entries).expect("uniform ensemble is valid")
    }
}

impl fmt::Display for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSet::FourState => write!(f, "four"),
            StateSet::TwoStateCai => write!(f, "cai2"),
        }
    }
}

impl std::str::FromStr for StateSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "four" => Ok(StateSet::FourState),
            "cai2" => Ok(StateSet::TwoStateCai),
            other => Err(Error::Config {
                field: "state_set".into(),
                reason: format!("expected 'four' or 'cai2', got '{other}'"),
            }),
        }
    }
}

/// The batch bookkeeping sets: everything that arrived (`a`), the sampled
/// check subset (`s`), and the messaging remainder `b = a - s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPartition {
    a: BTreeSet<usize>,
    s: BTreeSet<usize>,
    b: BTreeSet<usize>,
}

impl BatchPartition {
    pub fn new(a: BTreeSet<usize>, s: BTreeSet<usize>) -> Result<Self, Error> {
        if !s.is_subset(&a) {
            return Err(Error::Config {
                field: "s_positions".into(),
                reason: "check subset is not contained in the delivered set".into(),
            });
        }
        let b = a.difference(&s).copied().collect();
        Ok(Self { a, s, b })
    }

    pub fn a_positions(&self) -> &BTreeSet<usize> {
        &self.a
    }

    pub fn s_positions(&self) -> &BTreeSet<usize> {
        &self.s
    }

    pub fn b_positions(&self) -> &BTreeSet<usize> {
        &self.b
    }
}

/// One entry of Alice's phase-1 announcement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckEntry {
    pub position: usize,
    pub basis: Basis,
    pub result: bool,
}

/// Alice's public phase-1 announcement: which photons never arrived, and the
/// basis and outcome of every sampled measurement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckAnnouncement {
    pub entries: Vec<CheckEntry>,
    pub lost_positions: BTreeSet<usize>,
}

/// Matched-basis comparison statistics from Bob's side of the check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub rate: f64,
    pub compared: u64,
    pub errors: u64,
}

/// Continue/abort verdict from an error-rate comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Abort,
}

/// Full configuration of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub n: usize,
    pub check_fraction_phase1: f64,
    pub check_fraction_phase2: f64,
    pub error_threshold: f64,
    pub state_set: StateSet,
    pub message: Vec<bool>,
    pub forward_channel: ChannelModel,
    pub backward_channel: ChannelModel,
    pub forward_attack: AttackStrategy,
    pub backward_attack: AttackStrategy,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n: 4096,
            check_fraction_phase1: 0.5,
            check_fraction_phase2: 0.1,
            error_threshold: 0.05,
            state_set: StateSet::FourState,
            message: Vec::new(),
            forward_channel: ChannelModel::Ideal,
            backward_channel: ChannelModel::Ideal,
            forward_attack: AttackStrategy::None,
            backward_attack: AttackStrategy::None,
            seed: 42,
        }
    }
}

impl SessionConfig {
    /// Validates every field and the message-capacity rule; all errors name
    /// the offending field.
    pub fn validate(&self) -> Result<(), Error> {
        if self.n == 0 {
            return Err(Error::Config {
                field: "n".into(),
                reason: "batch size must be at least 1".into(),
            });
        }
        for (field, value) in [
            ("check_frac1", self.check_fraction_phase1),
            ("check_frac2", self.check_fraction_phase2),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::Config {
                    field: field.into(),
                    reason: format!("{value} outside the open interval (0,1)"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.error_threshold) {
            return Err(Error::Config {
                field: "threshold".into(),
                reason: format!("{} outside [0,1]", self.error_threshold),
            });
        }
        self.forward_channel.validate()?;
        self.backward_channel.validate()?;
        self.forward_attack.validate()?;
        self.backward_attack.validate()?;
        let capacity = self.expected_capacity();
        if self.message.len() > capacity {
            return Err(Error::Capacity { required: self.message.len(), available: capacity });
        }
        Ok(())
    }

    /// Expected message capacity: `(1 - f1)(1 - f2) n` scaled by the forward
    /// channel's expected loss survival. Randomness can still under-deliver;
    /// that surfaces as a capacity error at encode time.
    pub fn expected_capacity(&self) -> usize {
        let survival = loss_survival(&self.forward_channel);
        ((1.0 - self.check_fraction_phase1)
            * (1.0 - self.check_fraction_phase2)
            * self.n as f64
            * survival)
            .floor() as usize
    }

    /// Canonical single-line form embedded in transcripts and reports.
    pub fn to_line(&self) -> String {
        format!(
            "n={} check_frac1={} check_frac2={} threshold={} state_set={} message={} \
             forward_channel={} backward_channel={} forward_attack={} backward_attack={} seed={}",
            self.n,
            self.check_fraction_phase1,
            self.check_fraction_phase2,
            self.error_threshold,
            self.state_set,
            bits_to_string(&self.message),
            self.forward_channel,
            self.backward_channel,
            self.forward_attack,
            self.backward_attack,
            self.seed,
        )
    }

    /// Parses the canonical line form.
    pub fn parse_line(line: &str) -> Result<Self, Error> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for token in line.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| Error::Config {
                field: "config".into(),
                reason: format!("malformed token '{token}'"),
            })?;
            fields.insert(key, value);
        }
        let get = |key: &str| {
            fields.get(key).copied().ok_or_else(|| Error::Config {
                field: key.into(),
                reason: "missing from config line".into(),
            })
        };
        let parse_num = |key: &str, value: &str| -> Result<f64, Error> {
            value.parse().map_err(|_| Error::Config {
                field: key.into(),
                reason: format!("not a number: '{value}'"),
            })
        };
        let config = Self {
            n: get("n")?
                .parse()
                .map_err(|_| Error::Config { field: "n".into(), reason: "not a count".into() })?,
            check_fraction_phase1: parse_num("check_frac1", get("check_frac1")?)?,
            check_fraction_phase2: parse_num("check_frac2", get("check_frac2")?)?,
            error_threshold: parse_num("threshold", get("threshold")?)?,
            state_set: get("state_set")?.parse()?,
            message: bits_from_string(get("message")?)?,
            forward_channel: get("forward_channel")?.parse()?,
            backward_channel: get("backward_channel")?.parse()?,
            forward_attack: get("forward_attack")?.parse()?,
            backward_attack: get("backward_attack")?.parse()?,
            seed: get("seed")?.parse().map_err(|_| Error::Config {
                field: "seed".into(),
                reason: "not a 64-bit value".into(),
            })?,
        };
        Ok(config)
    }
}

/// Probability that a photon survives every loss stage of a channel.
fn loss_survival(model: &ChannelModel) -> f64 {
    match model {
        ChannelModel::Ideal | ChannelModel::Depolarizing(_) => 1.0,
        ChannelModel::Lossy(eta) => 1.0 - eta,
        ChannelModel::Composite(stages) => stages.iter().map(loss_survival).product(),
    }
}

pub(crate) fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

pub(crate) fn bits_from_string(s: &str) -> Result<Vec<bool>, Error> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Config {
                field: "message".into(),
                reason: format!("invalid bit character '{other}'"),
            }),
        })
        .collect()
}

/// Terminal disposition of one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Completed,
    AbortedPhase1,
    AbortedPhase2,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionStatus::Completed => write!(f, "completed"),
            SessionStatus::AbortedPhase1 => write!(f, "aborted_phase1"),
            SessionStatus::AbortedPhase2 => write!(f, "aborted_phase2"),
        }
    }
}

impl std::str::FromStr for SessionStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "completed" => Ok(SessionStatus::Completed),
            "aborted_phase1" => Ok(SessionStatus::AbortedPhase1),
            "aborted_phase2" => Ok(SessionStatus::AbortedPhase2),
            other => Err(Error::Config {
                field: "status".into(),
                reason: format!("unknown status '{other}'"),
            }),
        }
    }
}

/// Result of one full session.
///
/// `phase1_error_rate` is `NaN` when the check produced no matched-basis
/// comparison (the session then aborts conservatively). `decoded_message` is
/// present exactly when the session completed; lost message positions decode
/// to `None` (erasures).
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub status: SessionStatus,
    pub phase1_error_rate: f64,
    pub phase2_error_rate: Option<f64>,
    pub decoded_message: Option<Vec<Option<bool>>>,
    pub transcript: SessionTranscript,
}

/// Draws one uniform preparation from the state set.
pub fn draw_preparation(state_set: StateSet, draws: &mut dyn DrawSource) -> (Basis, bool) {
    state_set.preparation(draws.draw())
}

/// Bob's batch preparation: `n` records drawn uniformly and independently,
/// with the matching pure states.
pub fn bob_prepare_batch(
    n: usize,
    state_set: StateSet,
    draws: &mut dyn DrawSource,
) -> Result<(Vec<PhotonRecord>, Vec<QubitState>), Error> {
    if n == 0 {
        return Err(Error::Config {
            field: "n".into(),
            reason: "batch size must be at least 1".into(),
        });
    }
    let mut records = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for position in 0..n {
        let (basis, bit) = draw_preparation(state_set, draws);
        records.push(PhotonRecord { position, basis, bit });
        states.push(QubitState::prepare(basis, bit));
    }
    Ok((records, states))
}

/// Alice's check sample: a uniform subset (without replacement) of the
/// delivered positions of size `round(fraction * delivered)`, at least one.
pub fn alice_sample_check(
    delivered: &[usize],
    fraction: f64,
    draws: &mut dyn DrawSource,
) -> Result<BTreeSet<usize>, Error> {
    if delivered.is_empty() {
        return Err(Error::InconclusiveCheck);
    }
    let size = ((fraction * delivered.len() as f64).round() as usize).max(1).min(delivered.len());
    let mut pool: Vec<usize> = delivered.to_vec();
    // Partial Fisher-Yates: one draw per selected element.
    for i in 0..size {
        let j = i + (draws.draw() % (pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    Ok(pool.into_iter().take(size).collect())
}

/// One check measurement: a uniform basis choice followed by a Born-rule
/// measurement. Consumes exactly two draws.
pub fn alice_check_one(photon: &QubitState, draws: &mut dyn DrawSource) -> (Basis, bool) {
    let basis = if draws.draw() & 1 == 0 { Basis::Plus } else { Basis::Cross };
    let (bit, _) = photon.measure(basis, unit_f64(draws.draw()));
    (basis, bit)
}

/// Measures every sampled position and assembles the public announcement.
pub fn alice_measure_checks(
    s_positions: &BTreeSet<usize>,
    photons: &BTreeMap<usize, QubitState>,
    lost_positions: &BTreeSet<usize>,
    draws: &mut dyn DrawSource,
) -> Result<CheckAnnouncement, Error> {
    if s_positions.is_empty() {
        return Err(Error::InconclusiveCheck);
    }
    let mut entries = Vec::with_capacity(s_positions.len());
    for &position in s_positions {
        let photon = photons.get(&position).ok_or_else(|| Error::Config {
            field: "s_positions".into(),
            reason: format!("position {position} was never delivered"),
        })?;
        let (basis, result) = alice_check_one(photon, draws);
        entries.push(CheckEntry { position, basis, result });
    }
    Ok(CheckAnnouncement { entries, lost_positions: lost_positions.clone() })
}

/// Bob's error estimate over the announcement: only matched-basis samples
/// carry error information, mismatched ones are discarded.
pub fn bob_estimate_error(
    announcement: &CheckAnnouncement,
    records: &[PhotonRecord],
) -> Result<ErrorEstimate, Error> {
    let mut compared = 0u64;
    let mut errors = 0u64;
    for entry in &announcement.entries {
        let record = records.get(entry.position).ok_or_else(|| Error::Config {
            field: "announcement".into(),
            reason: format!("no preparation record for position {}", entry.position),
        })?;
        if record.basis == entry.basis {
            compared += 1;
            if record.bit != entry.result {
                errors += 1;
            }
        }
    }
    if compared == 0 {
        return Err(Error::InconclusiveCheck);
    }
    Ok(ErrorEstimate { rate: errors as f64 / compared as f64, compared, errors })
}

/// Continue exactly when the observed rate does not exceed the threshold
/// (boundary inclusive).
pub fn decide_continue(error_rate: f64, threshold: f64) -> Decision {
    if error_rate <= threshold {
        Decision::Continue
    } else {
        Decision::Abort
    }
}

/// Alice's phase-2 plan: which B positions carry random check bits, which
/// carry message bits (in ascending position order), and the encoding applied
/// to every B position (leftovers get the identity).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeLayout {
    pub check_bits: Vec<(usize, bool)>,
    pub message_positions: Vec<usize>,
    pub operations: BTreeMap<usize, EncodingOp>,
}

/// Selects phase-2 check instances, lays the message into the remaining
/// positions in ascending order, and encodes every B photon.
pub fn alice_encode(
    b_positions: &BTreeSet<usize>,
    photons: &BTreeMap<usize, QubitState>,
    message: &[bool],
    check_fraction: f64,
    draws: &mut dyn DrawSource,
) -> Result<(BTreeMap<usize, QubitState>, EncodeLayout), Error> {
    let b_len = b_positions.len();
    let check_count = ((check_fraction * b_len as f64).round() as usize).max(1).min(b_len);
    let required = message.len() + check_count;
    if required > b_len {
        return Err(Error::Capacity { required, available: b_len });
    }
    let mut pool: Vec<usize> = b_positions.iter().copied().collect();
    for i in 0..check_count {
        let j = i + (draws.draw() % (pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut check_positions: Vec<usize> = pool[..check_count].to_vec();
    check_positions.sort_unstable();
    let check_bits: Vec<(usize, bool)> =
        check_positions.iter().map(|&p| (p, draws.draw() & 1 == 1)).collect();

    let check_set: BTreeSet<usize> = check_positions.iter().copied().collect();
    let message_positions: Vec<usize> = b_positions
        .iter()
        .copied()
        .filter(|p| !check_set.contains(p))
        .take(message.len())
        .collect();

    let mut operations = BTreeMap::new();
    for &(position, bit) in &check_bits {
        operations.insert(position, EncodingOp::for_bit(bit));
    }
    for (i, &position) in message_positions.iter().enumerate() {
        operations.insert(position, EncodingOp::for_bit(message[i]));
    }
    for &position in b_positions {
        operations.entry(position).or_insert(EncodingOp::Identity);
    }

    let mut encoded = BTreeMap::new();
    for &position in b_positions {
        let photon = photons.get(&position).ok_or_else(|| Error::Config {
            field: "b_positions".into(),
            reason: format!("position {position} has no stored photon"),
        })?;
        encoded.insert(position, operations[&position].apply(photon));
    }
    let layout = EncodeLayout { check_bits, message_positions, operations };
    Ok((encoded, layout))
}

/// Decodes one returned photon: measure in the preparation basis; the message
/// bit is the XOR of prepared and measured bits. Consumes one draw.
pub fn bob_decode_one(
    record: &PhotonRecord,
    photon: &QubitState,
    draws: &mut dyn DrawSource,
) -> (bool, bool) {
    let (measured, _) = photon.measure(record.basis, unit_f64(draws.draw()));
    (measured, record.bit ^ measured)
}

/// Decodes every returned photon in ascending position order.
pub fn bob_decode(
    returned: &BTreeMap<usize, QubitState>,
    records: &[PhotonRecord],
    draws: &mut dyn DrawSource,
) -> Result<BTreeMap<usize, (bool, bool)>, Error> {
    let mut decoded = BTreeMap::new();
    for (&position, photon) in returned {
        let record = records.get(position).ok_or_else(|| Error::Config {
            field: "returned".into(),
            reason: format!("no preparation record for position {position}"),
        })?;
        decoded.insert(position, bob_decode_one(record, photon, draws));
    }
    Ok(decoded)
}

/// Phase-2 verification over the non-lost check instances.
pub fn verify_phase2(
    check_bits: &[(usize, bool)],
    decoded: &BTreeMap<usize, (bool, bool)>,
    threshold: f64,
) -> Result<(ErrorEstimate, Decision), Error> {
    let mut compared = 0u64;
    let mut errors = 0u64;
    for &(position, expected) in check_bits {
        if let Some(&(_, bit)) = decoded.get(&position) {
            compared += 1;
            if bit != expected {
                errors += 1;
            }
        }
    }
    if compared == 0 {
        return Err(Error::InconclusiveCheck);
    }
    let estimate = ErrorEstimate { rate: errors as f64 / compared as f64, compared, errors };
    let decision = decide_continue(estimate.rate, threshold);
    Ok((estimate, decision))
}

/// Runs one full session from a fresh seeded draw stream.
pub fn run_session(config: &SessionConfig) -> Result<SessionOutcome, Error> {
    let mut source = SessionRng::from_seed(config.seed);
    run_session_with_source(config, &mut source)
}

/// Runs one full session, drawing every random decision from `source`.
///
/// This is the replay entry point: feeding back the draws recorded in a
/// transcript regenerates the transcript exactly.
pub fn run_session_with_source(
    config: &SessionConfig,
    source: &mut dyn DrawSource,
) -> Result<SessionOutcome, Error> {
    config.validate()?;
    let mut tap = Tap::new(source);
    let mut events: Vec<Event> = Vec::new();

    // Phase 1: send the batch and check it for eavesdropping.
    let (records, states) = bob_prepare_batch(config.n, config.state_set, &mut tap)?;
    {
        let prep_draws = tap.take();
        debug_assert_eq!(prep_draws.len(), config.n);
        for (record, draw) in records.iter().zip(prep_draws) {
            events.push(Event::Prep {
                position: record.position,
                draws: vec![draw],
                basis: record.basis,
                bit: record.bit,
            });
        }
    }

    let mut forward_eve = Eve::new(config.forward_attack.clone());
    let mut alice_photons: BTreeMap<usize, QubitState> = BTreeMap::new();
    for (position, state) in states.iter().enumerate() {
        let channel_result = config.forward_channel.transmit(state, &mut tap);
        let delivered = channel_result.delivered().is_some();
        events.push(Event::ForwardChannel { position, draws: tap.take(), delivered });
        let Some(after_channel) = channel_result.delivered() else { continue };
        let (eve_result, action) = forward_eve.attack_forward(position, after_channel, &mut tap);
        events.push(Event::ForwardEve { position, draws: tap.take(), action });
        if let TransmitResult::Delivered(photon) = eve_result {
            alice_photons.insert(position, photon);
        }
    }

    let delivered_positions: Vec<usize> = alice_photons.keys().copied().collect();
    events.push(Event::Arrive { positions: delivered_positions.clone() });
    let lost_positions: BTreeSet<usize> =
        (0..config.n).filter(|p| !alice_photons.contains_key(p)).collect();

    let abort_phase1 = |events: Vec<Event>, rate: f64| SessionOutcome {
        status: SessionStatus::AbortedPhase1,
        phase1_error_rate: rate,
        phase2_error_rate: None,
        decoded_message: None,
        transcript: SessionTranscript::new(config.clone(), events),
    };

    if delivered_positions.is_empty() {
        events.push(Event::Phase1 {
            compared: 0,
            errors: 0,
            rate: f64::NAN,
            verdict: Phase1Verdict::AbortInconclusive,
        });
        events.push(Event::Outcome { status: SessionStatus::AbortedPhase1, message: None });
        return Ok(abort_phase1(events, f64::NAN));
    }

    let s_positions =
        alice_sample_check(&delivered_positions, config.check_fraction_phase1, &mut tap)?;
    events.push(Event::Sample {
        draws: tap.take(),
        positions: s_positions.iter().copied().collect(),
    });

    let mut entries = Vec::with_capacity(s_positions.len());
    for &position in &s_positions {
        let (basis, result) = alice_check_one(&alice_photons[&position], &mut tap);
        events.push(Event::AliceCheck { position, draws: tap.take(), basis, result });
        entries.push(CheckEntry { position, basis, result });
    }
    let announcement = CheckAnnouncement { entries, lost_positions: lost_positions.clone() };
    events.push(Event::Announce {
        lost: announcement.lost_positions.iter().copied().collect(),
        entries: announcement.entries.clone(),
    });

    let estimate = match bob_estimate_error(&announcement, &records) {
        Ok(estimate) => estimate,
        Err(Error::InconclusiveCheck) => {
            events.push(Event::Phase1 {
                compared: 0,
                errors: 0,
                rate: f64::NAN,
                verdict: Phase1Verdict::AbortInconclusive,
            });
            events.push(Event::Outcome { status: SessionStatus::AbortedPhase1, message: None });
            return Ok(abort_phase1(events, f64::NAN));
        }
        Err(other) => return Err(other),
    };
    let decision = decide_continue(estimate.rate, config.error_threshold);
    events.push(Event::Phase1 {
        compared: estimate.compared,
        errors: estimate.errors,
        rate: estimate.rate,
        verdict: match decision {
            Decision::Continue => Phase1Verdict::Continue,
            Decision::Abort => Phase1Verdict::Abort,
        },
    });
    if decision == Decision::Abort {
        events.push(Event::Outcome { status: SessionStatus::AbortedPhase1, message: None });
        return Ok(abort_phase1(events, estimate.rate));
    }

    // Phase 2: encode the message and return the batch.
    let partition = BatchPartition::new(alice_photons.keys().copied().collect(), s_positions)?;
    let b_photons: BTreeMap<usize, QubitState> =
        partition.b_positions().iter().map(|&p| (p, alice_photons[&p])).collect();
    let (encoded, layout) = alice_encode(
        partition.b_positions(),
        &b_photons,
        &config.message,
        config.check_fraction_phase2,
        &mut tap,
    )?;
    events.push(Event::Layout {
        draws: tap.take(),
        checks: layout.check_bits.clone(),
        message_positions: layout.message_positions.clone(),
    });
    for (&position, &op) in &layout.operations {
        events.push(Event::Encode { position, op });
    }

    let mut backward_eve = Eve::new(config.backward_attack.clone());
    // Phase-2 guessing needs the forward-leg knowledge.
    backward_eve.memory = forward_eve.memory.clone();
    let mut returned: BTreeMap<usize, QubitState> = BTreeMap::new();
    for (&position, photon) in &encoded {
        let channel_result = config.backward_channel.transmit(photon, &mut tap);
        let delivered = channel_result.delivered().is_some();
        events.push(Event::BackwardChannel { position, draws: tap.take(), delivered });
        let Some(after_channel) = channel_result.delivered() else { continue };
        let (eve_result, action, guess) =
            backward_eve.attack_backward(position, after_channel, &mut tap);
        events.push(Event::BackwardEve { position, draws: tap.take(), action, guess });
        if let TransmitResult::Delivered(photon) = eve_result {
            returned.insert(position, photon);
        }
    }

    let mut decoded: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
    for (&position, photon) in &returned {
        let pair = bob_decode_one(&records[position], photon, &mut tap);
        events.push(Event::Decode { position, draws: tap.take(), measured: pair.0, bit: pair.1 });
        decoded.insert(position, pair);
    }

    events.push(Event::Phase2Announce {
        checks: layout.check_bits.clone(),
        message_positions: layout.message_positions.clone(),
    });

    let (estimate2, decision2) =
        match verify_phase2(&layout.check_bits, &decoded, config.error_threshold) {
            Ok(pair) => pair,
            Err(Error::InconclusiveCheck) => {
                events.push(Event::Phase2 {
                    compared: 0,
                    errors: 0,
                    rate: f64::NAN,
                    verdict: Phase2Verdict::AbortInconclusive,
                });
                events.push(Event::Outcome { status: SessionStatus::AbortedPhase2, message: None });
                return Ok(SessionOutcome {
                    status: SessionStatus::AbortedPhase2,
                    phase1_error_rate: estimate.rate,
                    phase2_error_rate: Some(f64::NAN),
                    decoded_message: None,
                    transcript: SessionTranscript::new(config.clone(), events),
                });
            }
            Err(other) => return Err(other),
        };
    events.push(Event::Phase2 {
        compared: estimate2.compared,
        errors: estimate2.errors,
        rate: estimate2.rate,
        verdict: match decision2 {
            Decision::Continue => Phase2Verdict::Accept,
            Decision::Abort => Phase2Verdict::Abort,
        },
    });
    if decision2 == Decision::Abort {
        events.push(Event::Outcome { status: SessionStatus::AbortedPhase2, message: None });
        return Ok(SessionOutcome {
            status: SessionStatus::AbortedPhase2,
            phase1_error_rate: estimate.rate,
            phase2_error_rate: Some(estimate2.rate),
            decoded_message: None,
            transcript: SessionTranscript::new(config.clone(), events),
        });
    }

    let decoded_message: Vec<Option<bool>> =
        layout.message_positions.iter().map(|p| decoded.get(p).map(|&(_, bit)| bit)).collect();
    events.push(Event::Outcome {
        status: SessionStatus::Completed,
        message: Some(decoded_message.clone()),
    });
    Ok(SessionOutcome {
        status: SessionStatus::Completed,
        phase1_error_rate: estimate.rate,
        phase2_error_rate: Some(estimate2.rate),
        decoded_message: Some(decoded_message),
        transcript: SessionTranscript::new(config.clone(), events),
    })
}

#[cfg(test)]
mod tests;
