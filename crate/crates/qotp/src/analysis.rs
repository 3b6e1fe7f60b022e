//! Monte Carlo ensembles and aggregate statistics: empirical error and abort
//! rates, Eve's measured information gain, and the theoretical reference
//! values they are compared against.
//!
//! Per-trial summaries are plain counters, so aggregation is a commutative
//! merge and any execution order (sequential or a parallel worker pool)
//! produces the identical report. Trial `i` of an ensemble runs with seed
//! `derive_seed(master_seed, i)`.

use crate::protocol::{run_session, Event, SessionConfig, SessionOutcome, SessionStatus, StateSet};
use crate::rng::derive_seed;
use crate::Error;
use std::collections::{BTreeMap, BTreeSet};

/// 97.5th percentile of the standard normal, for 95% Wilson intervals.
const Z95: f64 = 1.959963984540054;

/// Per-comparison detection probability of a full intercept-resend attack:
/// the photon is disturbed with probability 1/2 and then misreads with
/// probability 1/2.
pub const INTERCEPT_RESEND_DETECTION_Q: f64 = 0.25;

/// A pooled binomial proportion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub count: u64,
    pub total: u64,
}

impl Proportion {
    pub fn new(count: u64, total: u64) -> Self {
        Self { count, total }
    }

    /// Point estimate; `NaN` when no observations were pooled.
    pub fn estimate(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.count as f64 / self.total as f64
        }
    }

    /// 95% Wilson score interval, well behaved at proportions near 0 and 1.
    pub fn wilson95(&self) -> Option<(f64, f64)> {
        if self.total == 0 {
            return None;
        }
        let n = self.total as f64;
        let p = self.count as f64 / n;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Some(((center - half).max(0.0), (center + half).min(1.0)))
    }
}

/// Counter summary of one session, derived entirely from its transcript and
/// configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSummary {
    pub trial_index: u64,
    pub seed: u64,
    pub status: SessionStatus,
    pub prepared: u64,
    pub delivered_forward: u64,
    pub phase1_compared: u64,
    pub phase1_errors: u64,
    pub phase2_compared: u64,
    pub phase2_errors: u64,
    pub message_bits: u64,
    pub decoded_bits: u64,
    pub message_bit_errors: u64,
    pub erasures: u64,
    pub eve_forward_acted: u64,
    pub eve_conclusive: u64,
    pub eve_inconclusive: u64,
    pub eve_blocked: u64,
    /// Joint counts over message positions: `[truth][eve output]` with eve
    /// output 0, 1, or 2 for abstain.
    pub eve_joint: [[u64; 3]; 2],
    pub eve_conclusive_guesses: u64,
    pub eve_conclusive_correct: u64,
    pub ordering_ok: bool,
}

impl TrialSummary {
    pub fn from_outcome(
        trial_index: u64,
        seed: u64,
        config: &SessionConfig,
        outcome: &SessionOutcome,
    ) -> Self {
        let mut delivered_forward = 0u64;
        let mut phase1 = (0u64, 0u64);
        let mut phase2 = (0u64, 0u64);
        let mut eve_forward_acted = 0u64;
        let mut eve_conclusive = 0u64;
        let mut eve_inconclusive = 0u64;
        let mut eve_blocked = 0u64;
        let mut conclusive_positions: BTreeSet<usize> = BTreeSet::new();
        let mut guesses: BTreeMap<usize, bool> = BTreeMap::new();
        let mut message_positions: Vec<usize> = Vec::new();

        for event in outcome.transcript.events() {
            match event {
                Event::Arrive { positions } => delivered_forward = positions.len() as u64,
                Event::ForwardEve { position, action, .. } => {
                    use crate::adversary::EveAction::*;
                    match action {
                        Passed => {}
                        Measured { .. } => eve_forward_acted += 1,
                        Conclusive { .. } => {
                            eve_forward_acted += 1;
                            eve_conclusive += 1;
                            conclusive_positions.insert(*position);
                        }
                        Inconclusive => {
                            eve_forward_acted += 1;
                            eve_inconclusive += 1;
                        }
                        Blocked => {
                            eve_forward_acted += 1;
                            eve_blocked += 1;
                        }
                    }
                }
                Event::Phase1 { compared, errors, .. } => phase1 = (*compared, *errors),
                Event::Phase2 { compared, errors, .. } => phase2 = (*compared, *errors),
                Event::Phase2Announce { message_positions: positions, .. } => {
                    message_positions = positions.clone();
                }
                Event::BackwardEve { position, guess: Some(g), .. } => {
                    guesses.insert(*position, *g);
                }
                _ => {}
            }
        }

        let mut decoded_bits = 0u64;
        let mut message_bit_errors = 0u64;
        let mut erasures = 0u64;
        if let Some(decoded) = &outcome.decoded_message {
            for (sent, received) in config.message.iter().zip(decoded) {
                match received {
                    Some(bit) => {
                        decoded_bits += 1;
                        if bit != sent {
                            message_bit_errors += 1;
                        }
                    }
                    None => erasures += 1,
                }
            }
        }

        let mut eve_joint = [[0u64; 3]; 2];
        let mut eve_conclusive_guesses = 0u64;
        let mut eve_conclusive_correct = 0u64;
        for (i, position) in message_positions.iter().enumerate() {
            let truth = config.message[i] as usize;
            match guesses.get(position) {
                Some(&guess) => {
                    eve_joint[truth][guess as usize] += 1;
                    if conclusive_positions.contains(position) {
                        eve_conclusive_guesses += 1;
                        if guess as usize == truth {
                            eve_conclusive_correct += 1;
                        }
                    }
                }
                None => eve_joint[truth][2] += 1,
            }
        }

        Self {
            trial_index,
            seed,
            status: outcome.status,
            prepared: config.n as u64,
            delivered_forward,
            phase1_compared: phase1.0,
            phase1_errors: phase1.1,
            phase2_compared: phase2.0,
            phase2_errors: phase2.1,
            message_bits: config.message.len() as u64,
            decoded_bits,
            message_bit_errors,
            erasures,
            eve_forward_acted,
            eve_conclusive,
            eve_inconclusive,
            eve_blocked,
            eve_joint,
            eve_conclusive_guesses,
            eve_conclusive_correct,
            ordering_ok: outcome.transcript.ordering_ok(),
        }
    }

    pub fn eve_guesses(&self) -> u64 {
        self.eve_joint[0][0] + self.eve_joint[0][1] + self.eve_joint[1][0] + self.eve_joint[1][1]
    }

    pub fn eve_correct(&self) -> u64 {
        self.eve_joint[0][0] + self.eve_joint[1][1]
    }
}

/// The outcome of a Monte Carlo run: one summary per trial, in trial order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialEnsemble {
    pub config: SessionConfig,
    pub trial_count: u64,
    pub summaries: Vec<TrialSummary>,
}

fn run_one_trial<F>(
    config: &SessionConfig,
    trial_index: u64,
    observer: &F,
) -> Result<TrialSummary, Error>
where
    F: Fn(u64, &SessionOutcome) -> Result<(), Error> + Sync,
{
    let mut trial_config = config.clone();
    trial_config.seed = derive_seed(config.seed, trial_index);
    let outcome = run_session(&trial_config)?;
    observer(trial_index, &outcome)?;
    Ok(TrialSummary::from_outcome(trial_index, trial_config.seed, &trial_config, &outcome))
}

/// Runs `trials` independent sessions sequentially, regardless of features.
pub fn run_ensemble_sequential<F>(
    config: &SessionConfig,
    trials: u64,
    observer: F,
) -> Result<TrialEnsemble, Error>
where
    F: Fn(u64, &SessionOutcome) -> Result<(), Error> + Sync,
{
    validate_ensemble_args(config, trials)?;
    let summaries =
        (0..trials).map(|i| run_one_trial(config, i, &observer)).collect::<Result<Vec<_>, _>>()?;
    Ok(TrialEnsemble { config: config.clone(), trial_count: trials, summaries })
}

/// Runs `trials` independent sessions, fanning out to a worker pool when the
/// `parallel` feature is enabled. The worker count only affects wall-clock
/// time: summaries are collected in trial order and every trial's seed is a
/// pure function of the master seed and trial index.
///
/// The observer runs once per trial (from worker threads when parallel) and
/// can persist transcripts; trials are otherwise summarized and dropped.
pub fn run_ensemble_with<F>(
    config: &SessionConfig,
    trials: u64,
    workers: Option<usize>,
    observer: F,
) -> Result<TrialEnsemble, Error>
where
    F: Fn(u64, &SessionOutcome) -> Result<(), Error> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        validate_ensemble_args(config, trials)?;
        let collect = || {
            (0..trials)
                .into_par_iter()
                .map(|i| run_one_trial(config, i, &observer))
                .collect::<Result<Vec<_>, _>>()
        };
        let summaries = match workers {
            Some(w) if w > 0 => {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().map_err(|e| {
                    Error::Config { field: "workers".into(), reason: e.to_string() }
                })?;
                pool.install(collect)?
            }
            _ => collect()?,
        };
        Ok(TrialEnsemble { config: config.clone(), trial_count: trials, summaries })
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        run_ensemble_sequential(config, trials, observer)
    }
}

/// Runs an ensemble with default workers and no per-trial observer.
pub fn run_ensemble(config: &SessionConfig, trials: u64) -> Result<TrialEnsemble, Error> {
    run_ensemble_with(config, trials, None, |_, _| Ok(()))
}

fn validate_ensemble_args(config: &SessionConfig, trials: u64) -> Result<(), Error> {
    if trials == 0 {
        return Err(Error::Config { field: "trials".into(), reason: "must be at least 1".into() });
    }
    config.validate()
}

/// Plug-in mutual information, in bits, between the true encoded bit and
/// Eve's three-valued output (0, 1, abstain), from pooled joint counts.
/// Abstentions form a genuine third symbol so leakage is measured per
/// transmitted bit, not per guessed bit.
pub fn empirical_mutual_information(joint: &[[u64; 3]; 2]) -> f64 {
    let total: u64 = joint.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let mut truth_marginal = [0.0f64; 2];
    let mut output_marginal = [0.0f64; 3];
    for t in 0..2 {
        for g in 0..3 {
            let p = joint[t][g] as f64 / n;
            truth_marginal[t] += p;
            output_marginal[g] += p;
        }
    }
    let mut mi = 0.0;
    for t in 0..2 {
        for g in 0..3 {
            let p = joint[t][g] as f64 / n;
            if p > 0.0 {
                mi += p * (p / (truth_marginal[t] * output_marginal[g])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Closed-form detection curve: probability that at least one of `m`
/// independent comparisons fires, each with detection probability `q`.
pub fn detection_curve(m_values: &[u32], q: f64) -> Vec<(u32, f64)> {
    assert!((0.0..=1.0).contains(&q), "detection probability {q} outside [0,1]");
    m_values.iter().map(|&m| (m, 1.0 - (1.0 - q).powi(m as i32))).collect()
}

/// Spec-level reference values for a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalBlock {
    pub state_set: StateSet,
    /// `H(B)`: Shannon entropy of Bob's preparation distribution.
    pub source_entropy_bits: f64,
    /// Holevo ceiling on what any eavesdropper can learn per photon about
    /// which state Bob prepared.
    pub holevo_chi_bits: f64,
    /// Matched-basis error rate of the forward channel, when defined.
    pub phase1_reference_error_rate: Option<f64>,
    /// Matched-basis error rate of the forward and backward channels
    /// composed, when defined.
    pub phase2_reference_error_rate: Option<f64>,
    pub detection_q: f64,
    pub detection_curve: Vec<(u32, f64)>,
}

/// Computes the theoretical block for a configuration with the detection
/// curve evaluated at `m = 1..=max_m`.
///
/// Panics if the Holevo quantity exceeded the source entropy, which no valid
/// ensemble can produce; for the four-state set the inequality is strict.
pub fn theoretical_references_with_curve(config: &SessionConfig, max_m: u32) -> TheoreticalBlock {
    let ensemble = config.state_set.ensemble();
    let holevo_chi_bits = ensemble.holevo_bound();
    let source_entropy_bits = ensemble.source_entropy();
    assert!(
        holevo_chi_bits <= source_entropy_bits + 1e-9,
        "Holevo bound {holevo_chi_bits} exceeds source entropy {source_entropy_bits}"
    );
    if config.state_set == StateSet::FourState {
        assert!(holevo_chi_bits < source_entropy_bits);
    }
    let phase1_reference_error_rate = config.forward_channel.matched_basis_error_rate().ok();
    let round_trip = crate::channel::ChannelModel::Composite(vec![
        config.forward_channel.clone(),
        config.backward_channel.clone(),
    ])
    .normalized();
    let phase2_reference_error_rate =
        round_trip.ok().and_then(|c| c.matched_basis_error_rate().ok());
    let ms: Vec<u32> = (1..=max_m).collect();
    TheoreticalBlock {
        state_set: config.state_set,
        source_entropy_bits,
        holevo_chi_bits,
        phase1_reference_error_rate,
        phase2_reference_error_rate,
        detection_q: INTERCEPT_RESEND_DETECTION_Q,
        detection_curve: detection_curve(&ms, INTERCEPT_RESEND_DETECTION_Q),
    }
}

/// Theoretical block with the default detection curve (`m` up to 8).
pub fn theoretical_references(config: &SessionConfig) -> TheoreticalBlock {
    theoretical_references_with_curve(config, 8)
}

/// Aggregated report over an ensemble: pooled empirical statistics next to
/// their theoretical references.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub master_seed: u64,
    pub trials: u64,
    pub config_line: String,
    pub completed: u64,
    pub aborted_phase1: u64,
    pub aborted_phase2: u64,
    pub abort_rate_phase1: Proportion,
    pub abort_rate_phase2: Proportion,
    pub phase1_error: Proportion,
    pub phase2_error: Proportion,
    pub message_bit_error: Proportion,
    pub erasure: Proportion,
    pub eve_accuracy: Proportion,
    pub eve_conclusive_accuracy: Proportion,
    pub eve_guesses_per_message_bit: f64,
    pub empirical_mi: f64,
    pub eve_joint: [[u64; 3]; 2],
    pub ordering_ok: bool,
    pub theoretical: TheoreticalBlock,
}

impl RunReport {
    /// Pure aggregation: the same ensemble always yields the same report.
    pub fn from_ensemble(ensemble: &TrialEnsemble) -> Self {
        let mut completed = 0u64;
        let mut aborted_phase1 = 0u64;
        let mut aborted_phase2 = 0u64;
        let mut p1 = (0u64, 0u64);
        let mut p2 = (0u64, 0u64);
        let mut message_bits = 0u64;
        let mut decoded_bits = 0u64;
        let mut message_bit_errors = 0u64;
        let mut erasures = 0u64;
        let mut joint = [[0u64; 3]; 2];
        let mut conclusive_guesses = 0u64;
        let mut conclusive_correct = 0u64;
        let mut ordering_ok = true;
        for s in &ensemble.summaries {
            match s.status {
                SessionStatus::Completed => completed += 1,
                SessionStatus::AbortedPhase1 => aborted_phase1 += 1,
                SessionStatus::AbortedPhase2 => aborted_phase2 += 1,
            }
            p1.0 += s.phase1_compared;
            p1.1 += s.phase1_errors;
            p2.0 += s.phase2_compared;
            p2.1 += s.phase2_errors;
            message_bits += s.message_bits;
            decoded_bits += s.decoded_bits;
            message_bit_errors += s.message_bit_errors;
            erasures += s.erasures;
            for (acc_row, row) in joint.iter_mut().zip(&s.eve_joint) {
                for (acc, v) in acc_row.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            conclusive_guesses += s.eve_conclusive_guesses;
            conclusive_correct += s.eve_conclusive_correct;
            ordering_ok &= s.ordering_ok;
        }
        let guesses = joint[0][0] + joint[0][1] + joint[1][0] + joint[1][1];
        let correct = joint[0][0] + joint[1][1];
        Self {
            master_seed: ensemble.config.seed,
            trials: ensemble.trial_count,
            config_line: ensemble.config.to_line(),
            completed,
            aborted_phase1,
            aborted_phase2,
            abort_rate_phase1: Proportion::new(aborted_phase1, ensemble.trial_count),
            abort_rate_phase2: Proportion::new(aborted_phase2, ensemble.trial_count),
            phase1_error: Proportion::new(p1.1, p1.0),
            phase2_error: Proportion::new(p2.1, p2.0),
            message_bit_error: Proportion::new(message_bit_errors, decoded_bits),
            erasure: Proportion::new(erasures, decoded_bits + erasures),
            eve_accuracy: Proportion::new(correct, guesses),
            eve_conclusive_accuracy: Proportion::new(conclusive_correct, conclusive_guesses),
            eve_guesses_per_message_bit: if message_bits == 0 {
                f64::NAN
            } else {
                guesses as f64 / message_bits as f64
            },
            empirical_mi: empirical_mutual_information(&joint),
            eve_joint: joint,
            ordering_ok,
            theoretical: theoretical_references(&ensemble.config),
        }
    }
}
