use super::*;
use crate::adversary::BasisPolicy;
use crate::rng::RecordedDraws;

fn ideal_config(n: usize, message: Vec<bool>, seed: u64) -> SessionConfig {
    SessionConfig { n, message, seed, ..SessionConfig::default() }
}

#[test]
fn preparation_is_reproducible_and_matches_records() {
    let mut a = SessionRng::from_seed(5);
    let mut b = SessionRng::from_seed(5);
    let (records_a, states_a) = bob_prepare_batch(4, StateSet::FourState, &mut a).unwrap();
    let (records_b, _) = bob_prepare_batch(4, StateSet::FourState, &mut b).unwrap();
    assert_eq!(records_a, records_b);
    for (record, state) in records_a.iter().zip(&states_a) {
        assert_eq!(&record.state(), state);
    }
    let positions: Vec<usize> = records_a.iter().map(|r| r.position).collect();
    assert_eq!(positions, vec![0, 1, 2, 3]);
}

#[test]
fn preparation_is_uniform_over_the_four_states() {
    let mut rng = SessionRng::from_seed(123);
    let n = 100_000;
    let (records, _) = bob_prepare_batch(n, StateSet::FourState, &mut rng).unwrap();
    let mut counts = [0u32; 4];
    for r in &records {
        let idx = match (r.basis, r.bit) {
            (Basis::Plus, false) => 0,
            (Basis::Plus, true) => 1,
            (Basis::Cross, false) => 2,
            (Basis::Cross, true) => 3,
        };
        counts[idx] += 1;
    }
    let sigma = (0.25 * 0.75 / n as f64).sqrt();
    for count in counts {
        let freq = count as f64 / n as f64;
        assert!((freq - 0.25).abs() < 4.0 * sigma, "frequency {freq}");
    }
}

#[test]
fn two_state_mode_only_prepares_h_and_u() {
    let mut rng = SessionRng::from_seed(9);
    let (records, _) = bob_prepare_batch(1_000, StateSet::TwoStateCai, &mut rng).unwrap();
    for r in records {
        assert!(!r.bit, "two-state mode only carries bit 0");
    }
}

#[test]
fn empty_batch_is_a_configuration_error() {
    let mut rng = SessionRng::from_seed(0);
    match bob_prepare_batch(0, StateSet::FourState, &mut rng) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "n"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn sample_size_follows_round_with_minimum_one() {
    let delivered: Vec<usize> = (0..10).collect();
    let mut rng = SessionRng::from_seed(3);
    let sample = alice_sample_check(&delivered, 0.5, &mut rng).unwrap();
    assert_eq!(sample.len(), 5);
    assert!(sample.iter().all(|p| delivered.contains(p)));

    let single = vec![17usize];
    let mut rng = SessionRng::from_seed(3);
    let sample = alice_sample_check(&single, 0.01, &mut rng).unwrap();
    assert_eq!(sample.into_iter().collect::<Vec<_>>(), vec![17]);

    let mut rng = SessionRng::from_seed(3);
    assert!(alice_sample_check(&[], 0.5, &mut rng).is_err());
}

#[test]
fn check_measurement_of_eigenstate_announces_the_bit() {
    // Even draw selects the Plus basis; |H> then reads 0 for any variate.
    let h = QubitState::prepare(Basis::Plus, false);
    let mut draws = RecordedDraws::new([2, 77]);
    let (basis, result) = alice_check_one(&h, &mut draws);
    assert_eq!(basis, Basis::Plus);
    assert!(!result);
}

#[test]
fn check_measurement_in_other_basis_is_balanced() {
    let h = QubitState::prepare(Basis::Plus, false);
    let mut rng = SessionRng::from_seed(50);
    let mut cross_ones = 0u32;
    let mut cross_total = 0u32;
    for _ in 0..20_000 {
        let (basis, result) = alice_check_one(&h, &mut rng);
        if basis == Basis::Cross {
            cross_total += 1;
            cross_ones += result as u32;
        }
    }
    let freq = cross_ones as f64 / cross_total as f64;
    let sigma = (0.25 / cross_total as f64).sqrt();
    assert!((freq - 0.5).abs() < 4.0 * sigma, "frequency {freq}");
}

#[test]
fn measure_checks_requires_nonempty_sample_and_delivery() {
    let photons: BTreeMap<usize, QubitState> =
        [(0, QubitState::prepare(Basis::Plus, false))].into();
    let mut rng = SessionRng::from_seed(1);
    assert!(matches!(
        alice_measure_checks(&BTreeSet::new(), &photons, &BTreeSet::new(), &mut rng),
        Err(Error::InconclusiveCheck)
    ));
    let missing: BTreeSet<usize> = [9].into();
    assert!(alice_measure_checks(&missing, &photons, &BTreeSet::new(), &mut rng).is_err());
}

#[test]
fn error_estimate_discards_mismatched_bases() {
    let records = vec![
        PhotonRecord { position: 0, basis: Basis::Plus, bit: false },
        PhotonRecord { position: 1, basis: Basis::Cross, bit: true },
        PhotonRecord { position: 2, basis: Basis::Plus, bit: true },
    ];
    let announcement = CheckAnnouncement {
        entries: vec![
            CheckEntry { position: 0, basis: Basis::Plus, result: false },
            CheckEntry { position: 1, basis: Basis::Plus, result: false },
            CheckEntry { position: 2, basis: Basis::Plus, result: false },
        ],
        lost_positions: BTreeSet::new(),
    };
    let estimate = bob_estimate_error(&announcement, &records).unwrap();
    // Position 1 is discarded; position 2 disagrees.
    assert_eq!(estimate.compared, 2);
    assert_eq!(estimate.errors, 1);
    assert!((estimate.rate - 0.5).abs() < 1e-15);
}

#[test]
fn all_mismatched_checks_are_inconclusive() {
    let records = vec![PhotonRecord { position: 0, basis: Basis::Plus, bit: false }];
    let announcement = CheckAnnouncement {
        entries: vec![CheckEntry { position: 0, basis: Basis::Cross, result: true }],
        lost_positions: BTreeSet::new(),
    };
    assert!(matches!(bob_estimate_error(&announcement, &records), Err(Error::InconclusiveCheck)));
}

#[test]
fn decision_threshold_is_boundary_inclusive() {
    assert_eq!(decide_continue(0.0, 0.05), Decision::Continue);
    assert_eq!(decide_continue(0.25, 0.05), Decision::Abort);
    assert_eq!(decide_continue(0.05, 0.05), Decision::Continue);
}

#[test]
fn encode_flips_check_and_message_bits() {
    let b: BTreeSet<usize> = (0..8).collect();
    let photons: BTreeMap<usize, QubitState> =
        b.iter().map(|&p| (p, QubitState::prepare(Basis::Cross, false))).collect();
    let message = vec![true, false, true, true];
    let mut rng = SessionRng::from_seed(21);
    let (encoded, layout) = alice_encode(&b, &photons, &message, 0.5, &mut rng).unwrap();
    assert_eq!(layout.check_bits.len(), 4);
    assert_eq!(layout.message_positions.len(), 4);
    // Message positions ascend and avoid check positions.
    let check_set: BTreeSet<usize> = layout.check_bits.iter().map(|&(p, _)| p).collect();
    let mut sorted = layout.message_positions.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, layout.message_positions);
    assert!(layout.message_positions.iter().all(|p| !check_set.contains(p)));
    // Bit 1 turns |u> into |d>, bit 0 leaves it.
    for (i, &p) in layout.message_positions.iter().enumerate() {
        let expected = QubitState::prepare(Basis::Cross, message[i]);
        assert_eq!(encoded[&p], expected, "message bit {i}");
    }
    for &(p, bit) in &layout.check_bits {
        assert_eq!(encoded[&p], QubitState::prepare(Basis::Cross, bit));
    }
}

#[test]
fn encode_rejects_capacity_shortfall() {
    let b: BTreeSet<usize> = (0..8).collect();
    let photons: BTreeMap<usize, QubitState> =
        b.iter().map(|&p| (p, QubitState::prepare(Basis::Plus, false))).collect();
    let message = vec![true; 8];
    let mut rng = SessionRng::from_seed(2);
    match alice_encode(&b, &photons, &message, 0.5, &mut rng) {
        Err(Error::Capacity { required, available }) => {
            assert_eq!(required, 12);
            assert_eq!(available, 8);
        }
        other => panic!("expected capacity error, got {other:?}"),
    }
}

#[test]
fn decode_xors_prepared_and_measured_bits() {
    let record = PhotonRecord { position: 0, basis: Basis::Cross, bit: false };
    let returned = QubitState::prepare(Basis::Cross, true); // |u> flipped to |d>
    let mut draws = RecordedDraws::new([0]);
    let (measured, bit) = bob_decode_one(&record, &returned, &mut draws);
    assert!(measured);
    assert!(bit);

    let record = PhotonRecord { position: 1, basis: Basis::Plus, bit: true };
    let unchanged = QubitState::prepare(Basis::Plus, true);
    let mut draws = RecordedDraws::new([0]);
    let (measured, bit) = bob_decode_one(&record, &unchanged, &mut draws);
    assert!(measured);
    assert!(!bit);
}

#[test]
fn decode_flip_probability_through_noise_matches_channel_rate() {
    let record = PhotonRecord { position: 0, basis: Basis::Plus, bit: false };
    let channel = ChannelModel::Depolarizing(0.2);
    let mut rng = SessionRng::from_seed(31);
    let trials = 100_000;
    let mut flips = 0u32;
    for _ in 0..trials {
        let sent = record.state();
        let noisy = channel.transmit(&sent, &mut rng);
        let (_, bit) = bob_decode_one(&record, noisy.delivered().unwrap(), &mut rng);
        flips += bit as u32;
    }
    let rate = flips as f64 / trials as f64;
    let sigma = (0.1 * 0.9 / trials as f64).sqrt();
    assert!((rate - 0.1).abs() < 4.0 * sigma, "flip rate {rate}");
}

#[test]
fn phase2_verification_counts_only_returned_checks() {
    let checks = vec![(3usize, true), (5, false), (9, true)];
    let mut decoded: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
    decoded.insert(3, (true, true));
    decoded.insert(5, (false, true)); // wrong
                                      // position 9 lost
    let (estimate, decision) = verify_phase2(&checks, &decoded, 0.05).unwrap();
    assert_eq!(estimate.compared, 2);
    assert_eq!(estimate.errors, 1);
    assert_eq!(decision, Decision::Abort);

    let (_, accept) = verify_phase2(&[(3, true)], &decoded, 0.05).unwrap();
    assert_eq!(accept, Decision::Continue);

    assert!(matches!(verify_phase2(&[(9, true)], &decoded, 0.05), Err(Error::InconclusiveCheck)));
}

#[test]
fn noiseless_session_delivers_the_message_exactly() {
    let message = vec![true, false, true, true, false, false, true, false];
    let config = ideal_config(64, message.clone(), 11);
    let outcome = run_session(&config).unwrap();
    assert_eq!(outcome.status, SessionStatus::Completed);
    assert_eq!(outcome.phase1_error_rate, 0.0);
    assert_eq!(outcome.phase2_error_rate, Some(0.0));
    let decoded: Vec<bool> = outcome.decoded_message.unwrap().into_iter().flatten().collect();
    assert_eq!(decoded, message);
}

#[test]
fn full_intercept_resend_aborts_in_phase_one() {
    for seed in 0..5 {
        let config = SessionConfig {
            n: 1024,
            message: vec![true; 64],
            forward_attack: AttackStrategy::InterceptResend {
                policy: BasisPolicy::Random,
                fraction: 1.0,
            },
            seed,
            ..SessionConfig::default()
        };
        let outcome = run_session(&config).unwrap();
        assert_eq!(outcome.status, SessionStatus::AbortedPhase1, "seed {seed}");
        assert!(outcome.decoded_message.is_none());
        assert!(outcome.phase1_error_rate > 0.05);
        // No encoding activity may precede the (absent) continue verdict.
        assert!(outcome.transcript.ordering_ok());
        assert!(!outcome
            .transcript
            .events()
            .iter()
            .any(|e| matches!(e, Event::Encode { .. } | Event::Layout { .. })));
    }
}

#[test]
fn identical_configs_produce_byte_identical_transcripts() {
    let config = SessionConfig {
        n: 128,
        message: vec![true, false, true],
        forward_channel: ChannelModel::Lossy(0.2),
        backward_channel: ChannelModel::Depolarizing(0.05),
        seed: 77,
        ..SessionConfig::default()
    };
    let a = run_session(&config).unwrap();
    let b = run_session(&config).unwrap();
    assert_eq!(a.transcript.to_text(), b.transcript.to_text());
}

#[test]
fn batch_partition_enforces_set_algebra() {
    let a: BTreeSet<usize> = (0..10).collect();
    let s: BTreeSet<usize> = [1, 3, 5].into();
    let partition = BatchPartition::new(a.clone(), s.clone()).unwrap();
    let expected_b: BTreeSet<usize> = a.difference(&s).copied().collect();
    assert_eq!(partition.b_positions(), &expected_b);
    assert!(partition.s_positions().is_subset(partition.a_positions()));

    let outside: BTreeSet<usize> = [99].into();
    assert!(BatchPartition::new(a, outside).is_err());
}

#[test]
fn backward_loss_becomes_an_erasure() {
    let config = SessionConfig {
        n: 64,
        message: vec![true; 8],
        backward_channel: ChannelModel::Lossy(0.3),
        seed: 4,
        ..SessionConfig::default()
    };
    let outcome = run_session(&config).unwrap();
    assert_eq!(outcome.status, SessionStatus::Completed);
    let decoded = outcome.decoded_message.unwrap();
    assert_eq!(decoded.len(), 8);
    let erasures = decoded.iter().filter(|b| b.is_none()).count();
    let correct =
        decoded.iter().zip(&config.message).filter(|(d, m)| d.as_ref() == Some(m)).count();
    assert_eq!(correct + erasures, 8, "non-erased bits decode correctly on a lossless-noise path");
}

#[test]
fn config_line_round_trips() {
    let config = SessionConfig {
        n: 512,
        check_fraction_phase1: 0.25,
        check_fraction_phase2: 0.125,
        error_threshold: 0.0625,
        state_set: StateSet::TwoStateCai,
        message: vec![true, false, false, true],
        forward_channel: ChannelModel::Composite(vec![
            ChannelModel::Depolarizing(0.1),
            ChannelModel::Lossy(0.05),
        ]),
        backward_channel: ChannelModel::Ideal,
        forward_attack: AttackStrategy::OpaqueUsd { block_inconclusive: true, fraction: 1.0 },
        backward_attack: AttackStrategy::InterceptResend {
            policy: BasisPolicy::FixedCross,
            fraction: 0.5,
        },
        seed: 987654321,
    };
    let line = config.to_line();
    let parsed = SessionConfig::parse_line(&line).unwrap();
    assert_eq!(parsed, config);
    assert_eq!(parsed.to_line(), line);
}

#[test]
fn config_validation_names_offending_fields() {
    let config = SessionConfig { check_fraction_phase1: 1.2, ..SessionConfig::default() };
    match config.validate() {
        Err(Error::Config { field, .. }) => assert_eq!(field, "check_frac1"),
        other => panic!("expected config error, got {other:?}"),
    }

    let config = SessionConfig { n: 16, message: vec![false; 64], ..SessionConfig::default() };
    match config.validate() {
        Err(Error::Capacity { required, available }) => {
            assert_eq!(required, 64);
            assert_eq!(available, 7); // floor(0.5 * 0.9 * 16)
        }
        other => panic!("expected capacity error, got {other:?}"),
    }

    let config = SessionConfig { error_threshold: -0.1, ..SessionConfig::default() };
    assert!(matches!(config.validate(), Err(Error::Config { field, .. }) if field == "threshold"));
}

#[test]
fn expected_capacity_accounts_for_loss() {
    let config = SessionConfig {
        n: 1000,
        forward_channel: ChannelModel::Lossy(0.5),
        ..SessionConfig::default()
    };
    // 1000 * 0.5 survival * 0.5 phase-1 * 0.9 phase-2 = 225.
    assert_eq!(config.expected_capacity(), 225);
}
