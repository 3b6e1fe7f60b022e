//! Randomized invariant checks over states, channels, attacks and the batch
//! set algebra.

use num_complex::Complex64;
use proptest::prelude::*;
use qotp::adversary::{AttackStrategy, BasisPolicy, Eve};
use qotp::channel::ChannelModel;
use qotp::mat2::Mat2;
use qotp::protocol::BatchPartition;
use qotp::qstate::{Basis, EncodingOp, Ensemble, QubitState};
use qotp::rng::{DrawSource, SessionRng};
use std::collections::BTreeSet;

const TOL: f64 = 1e-12;

/// Arbitrary qubit states via Bloch vectors of norm at most one.
fn qubit_state() -> impl Strategy<Value = QubitState> {
    (-1.0f64..=1.0, -1.0f64..=1.0, -1.0f64..=1.0).prop_map(|(x, y, z)| {
        let norm = (x * x + y * y + z * z).sqrt();
        let (x, y, z) = if norm > 1.0 { (x / norm, y / norm, z / norm) } else { (x, y, z) };
        let rho = Mat2::new([
            [Complex64::new((1.0 + z) / 2.0, 0.0), Complex64::new(x / 2.0, -y / 2.0)],
            [Complex64::new(x / 2.0, y / 2.0), Complex64::new((1.0 - z) / 2.0, 0.0)],
        ]);
        QubitState::from_matrix(rho).expect("Bloch ball point is a valid state")
    })
}

fn basis() -> impl Strategy<Value = Basis> {
    prop_oneof![Just(Basis::Plus), Just(Basis::Cross)]
}

fn channel_stage() -> impl Strategy<Value = ChannelModel> {
    prop_oneof![
        Just(ChannelModel::Ideal),
        (0.0f64..=1.0).prop_map(ChannelModel::Depolarizing),
        (0.0f64..=1.0).prop_map(ChannelModel::Lossy),
    ]
}

fn channel_model() -> impl Strategy<Value = ChannelModel> {
    prop::collection::vec(channel_stage(), 1..=3).prop_map(|stages| {
        if stages.len() == 1 {
            stages.into_iter().next().unwrap()
        } else {
            ChannelModel::Composite(stages)
        }
    })
}

fn attack_strategy() -> impl Strategy<Value = AttackStrategy> {
    let policy = prop_oneof![
        Just(BasisPolicy::Random),
        Just(BasisPolicy::FixedPlus),
        Just(BasisPolicy::FixedCross)
    ];
    prop_oneof![
        Just(AttackStrategy::None),
        (policy, 0.0f64..=1.0)
            .prop_map(|(policy, fraction)| AttackStrategy::InterceptResend { policy, fraction }),
        (any::<bool>(), 0.0f64..=1.0).prop_map(|(block_inconclusive, fraction)| {
            AttackStrategy::OpaqueUsd { block_inconclusive, fraction }
        }),
    ]
}

fn ensemble() -> impl Strategy<Value = Ensemble> {
    prop::collection::vec((1.0f64..100.0, qubit_state()), 1..=5).prop_map(|raw| {
        let total: f64 = raw.iter().map(|(w, _)| w).sum();
        Ensemble::new(raw.into_iter().map(|(w, s)| (w / total, s)).collect())
            .expect("normalized weights form a valid ensemble")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn flip_applied_twice_is_identity_on_states(state in qubit_state()) {
        let twice = EncodingOp::Flip.apply(&EncodingOp::Flip.apply(&state));
        prop_assert!(twice.matrix().approx_eq(state.matrix(), TOL));
    }

    #[test]
    fn born_probabilities_are_normalized(state in qubit_state(), basis in basis()) {
        let p0 = state.born_probability(basis, false);
        let p1 = state.born_probability(basis, true);
        prop_assert!((p0 + p1 - 1.0).abs() <= TOL);
        prop_assert!((0.0..=1.0).contains(&p0));
    }

    #[test]
    fn channels_preserve_density_matrix_invariants(
        state in qubit_state(),
        model in channel_model(),
        seed in any::<u64>(),
    ) {
        let mut rng = SessionRng::from_seed(seed);
        if let Some(delivered) = model.transmit(&state, &mut rng).delivered() {
            prop_assert!(QubitState::from_matrix(*delivered.matrix()).is_ok());
        }
    }

    #[test]
    fn attacks_preserve_density_matrix_invariants(
        state in qubit_state(),
        strategy in attack_strategy(),
        seed in any::<u64>(),
    ) {
        let mut rng = SessionRng::from_seed(seed);
        let mut eve = Eve::new(strategy);
        let (forward, _) = eve.attack_forward(0, &state, &mut rng);
        if let Some(delivered) = forward.delivered() {
            prop_assert!(QubitState::from_matrix(*delivered.matrix()).is_ok());
            let (backward, _, _) = eve.attack_backward(0, delivered, &mut rng);
            if let Some(returned) = backward.delivered() {
                prop_assert!(QubitState::from_matrix(*returned.matrix()).is_ok());
            }
        }
    }

    #[test]
    fn partition_is_exact_set_difference(
        a_raw in prop::collection::btree_set(0usize..512, 1..128),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..64),
    ) {
        let a: BTreeSet<usize> = a_raw;
        let a_list: Vec<usize> = a.iter().copied().collect();
        let s: BTreeSet<usize> = picks.iter().map(|idx| a_list[idx.index(a_list.len())]).collect();
        let partition = BatchPartition::new(a.clone(), s.clone()).unwrap();
        let expected: BTreeSet<usize> = a.difference(&s).copied().collect();
        prop_assert_eq!(partition.b_positions(), &expected);
        prop_assert!(partition.b_positions().is_disjoint(partition.s_positions()));
        let union: BTreeSet<usize> =
            partition.b_positions().union(partition.s_positions()).copied().collect();
        prop_assert_eq!(&union, partition.a_positions());
    }

    #[test]
    fn holevo_never_exceeds_source_entropy(e in ensemble()) {
        prop_assert!(e.holevo_bound() <= e.source_entropy() + 1e-9);
        prop_assert!(e.holevo_bound() >= -1e-9);
    }

    #[test]
    fn global_phase_never_changes_the_state(
        re0 in -1.0f64..=1.0,
        im0 in -1.0f64..=1.0,
        re1 in -1.0f64..=1.0,
        im1 in -1.0f64..=1.0,
        phase in 0.0f64..std::f64::consts::TAU,
    ) {
        let norm = (re0 * re0 + im0 * im0 + re1 * re1 + im1 * im1).sqrt();
        prop_assume!(norm > 1e-3);
        let amps = [
            Complex64::new(re0 / norm, im0 / norm),
            Complex64::new(re1 / norm, im1 / norm),
        ];
        let rot = Complex64::new(phase.cos(), phase.sin());
        let plain = QubitState::from_ket(amps).unwrap();
        let rotated = QubitState::from_ket([rot * amps[0], rot * amps[1]]).unwrap();
        prop_assert!(plain.matrix().approx_eq(rotated.matrix(), 1e-12));
        for b in [Basis::Plus, Basis::Cross] {
            prop_assert!(
                (plain.born_probability(b, false) - rotated.born_probability(b, false)).abs()
                    <= 1e-12
            );
        }
    }

    #[test]
    fn entropy_equals_binary_entropy_of_the_smaller_eigenvalue(state in qubit_state()) {
        // Independent scalar route: the smaller eigenvalue from the quadratic
        // formula on trace and determinant, then plain binary entropy.
        let m = state.matrix();
        let t = m.trace().re;
        let d = m.det().re;
        let lo = (t - (t * t - 4.0 * d).max(0.0).sqrt()) / 2.0;
        let h = if lo <= 0.0 || lo >= 1.0 {
            0.0
        } else {
            -lo * lo.log2() - (1.0 - lo) * (1.0 - lo).log2()
        };
        prop_assert!((state.von_neumann_entropy() - h).abs() <= 1e-9);
    }

    #[test]
    fn noiseless_sessions_always_deliver_exactly(
        seed in any::<u64>(),
        len in 0usize..24,
        pattern in any::<u64>(),
    ) {
        let message: Vec<bool> = (0..len).map(|i| pattern >> (i % 64) & 1 == 1).collect();
        let config = qotp::protocol::SessionConfig {
            n: 64,
            message: message.clone(),
            seed,
            ..qotp::protocol::SessionConfig::default()
        };
        let outcome = qotp::protocol::run_session(&config).unwrap();
        prop_assert_eq!(outcome.status, qotp::protocol::SessionStatus::Completed);
        prop_assert_eq!(outcome.phase1_error_rate, 0.0);
        prop_assert_eq!(outcome.phase2_error_rate, Some(0.0));
        let decoded = outcome.decoded_message.unwrap();
        prop_assert!(decoded.iter().all(|b| b.is_some()));
        let decoded: Vec<bool> = decoded.into_iter().flatten().collect();
        prop_assert_eq!(decoded, message);
    }

    #[test]
    fn eve_act_draw_consumption_is_strategy_independent(
        state in qubit_state(),
        strategy in attack_strategy(),
        seed in any::<u64>(),
    ) {
        // Whatever the strategy, at least the per-photon decision draw is
        // consumed, and the passive strategy consumes exactly that.
        struct Counter<S>(S, u64);
        impl<S: DrawSource> DrawSource for Counter<S> {
            fn draw(&mut self) -> u64 {
                self.1 += 1;
                self.0.draw()
            }
        }
        let mut counter = Counter(SessionRng::from_seed(seed), 0);
        let mut eve = Eve::new(strategy.clone());
        eve.attack_forward(0, &state, &mut counter);
        prop_assert!(counter.1 >= 1);
        if strategy.is_none() {
            prop_assert_eq!(counter.1, 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    /// Replay never panics on corrupted input, and any single-byte mutation
    /// of a derived field is detected as a parse error or divergence.
    ///
    /// Mutations inside `draws=[...]` spans or the config line rewrite the
    /// recorded *inputs*; replay re-derives everything from those inputs, so
    /// such a mutation may legitimately yield a different but self-consistent
    /// transcript that replays clean. Everything else on an event line is
    /// computed and must not be silently alterable.
    #[test]
    fn replay_survives_single_byte_corruption(
        offset in any::<prop::sample::Index>(),
        replacement in 0x20u8..0x7f,
    ) {
        use qotp::protocol::{replay_transcript, run_session, ReplayVerdict, SessionConfig};
        // One fixed small session; the strategy varies the corruption.
        let config = SessionConfig {
            n: 24,
            message: vec![true, false, true],
            forward_channel: ChannelModel::Lossy(0.1),
            seed: 77,
            ..SessionConfig::default()
        };
        let text = run_session(&config).unwrap().transcript.to_text();
        let mut bytes = text.clone().into_bytes();
        let at = offset.index(bytes.len());
        prop_assume!(bytes[at] != replacement && bytes[at] != b'\n');

        // Locate the mutated line and whether the byte lies in an input span.
        let mut line_start = 0usize;
        let mut line_index = 0usize;
        for (i, b) in bytes.iter().enumerate().take(at) {
            if *b == b'\n' {
                line_start = i + 1;
                line_index += 1;
            }
        }
        let line_end = bytes[line_start..]
            .iter()
            .position(|b| *b == b'\n')
            .map_or(bytes.len(), |p| line_start + p);
        let line = std::str::from_utf8(&bytes[line_start..line_end]).unwrap().to_string();
        let within_line = at - line_start;
        let in_draws_span = line.find("draws=[").is_some_and(|start| {
            let close = line[start..].find(']').map_or(line.len(), |p| start + p);
            within_line >= start + 6 && within_line <= close
        });
        let input_mutation = line_index == 1 || in_draws_span;

        bytes[at] = replacement;
        if let Ok(mutated) = String::from_utf8(bytes) {
            match replay_transcript(&mutated) {
                Ok(ReplayVerdict::Identical) => prop_assert!(
                    input_mutation,
                    "derived-field mutation at byte {at} (line {line_index}) went undetected"
                ),
                Ok(ReplayVerdict::Divergent { line }) => prop_assert!(line >= 1),
                Err(qotp::Error::TranscriptParse { line, .. }) => prop_assert!(line >= 1),
                Err(_) => {} // e.g. a corrupted config value failing validation
            }
        }
    }
}

#[test]
fn encoding_matrices_are_unitary() {
    for op in [EncodingOp::Identity, EncodingOp::Flip] {
        let m = op.matrix();
        assert!((m.adjoint() * m).approx_eq(&Mat2::identity(), TOL));
    }
}

#[test]
fn flip_exchanges_the_bit_in_both_bases() {
    for basis in [Basis::Plus, Basis::Cross] {
        for bit in [false, true] {
            let flipped = EncodingOp::Flip.apply(&QubitState::prepare(basis, bit));
            let expected = QubitState::prepare(basis, !bit);
            assert!(flipped.matrix().approx_eq(expected.matrix(), TOL));
        }
    }
}
