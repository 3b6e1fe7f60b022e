//! Side-by-side demonstration of why the sending phase uses four states.
//!
//! Runs the same eavesdropping strategies against the four-state alphabet and
//! the two-state variant, and prints what the checks saw versus what the
//! eavesdropper learned.
//!
//! Run with: cargo run --release -p qotp --example attack_contrast

use qotp::adversary::{AttackStrategy, BasisPolicy};
use qotp::analysis::{run_ensemble, RunReport};
use qotp::protocol::{SessionConfig, StateSet};

fn report_for(name: &str, state_set: StateSet, attack: AttackStrategy) {
    let config = SessionConfig {
        n: 2048,
        state_set,
        message: (0..64).map(|i| i % 3 == 0).collect(),
        forward_attack: attack,
        seed: 7,
        ..SessionConfig::default()
    };
    let ensemble = run_ensemble(&config, 40).expect("valid configuration");
    let report = RunReport::from_ensemble(&ensemble);
    let accuracy = match report.eve_accuracy.total {
        0 => "no guesses".to_string(),
        _ => {
            format!("{:.3} ({} guesses)", report.eve_accuracy.estimate(), report.eve_accuracy.total)
        }
    };
    println!(
        "{name:<18} check error {:>6.4}  aborted {:>2}/40  eve accuracy {accuracy:<20} leak {:.3} bits/bit",
        report.phase1_error.estimate(),
        report.aborted_phase1 + report.aborted_phase2,
        report.empirical_mi,
    );
}

fn main() {
    let intercept = AttackStrategy::InterceptResend { policy: BasisPolicy::Random, fraction: 1.0 };
    let opaque = AttackStrategy::OpaqueUsd { block_inconclusive: true, fraction: 1.0 };

    println!("four-state alphabet:");
    report_for("  no attack", StateSet::FourState, AttackStrategy::None);
    report_for("  intercept-resend", StateSet::FourState, intercept.clone());
    report_for("  opaque (USD)", StateSet::FourState, opaque.clone());
    println!();
    println!("two-state alphabet (the variant the opaque attack defeats):");
    report_for("  no attack", StateSet::TwoStateCai, AttackStrategy::None);
    report_for("  intercept-resend", StateSet::TwoStateCai, intercept);
    report_for("  opaque (USD)", StateSet::TwoStateCai, opaque);
    println!();
    println!("The opaque attack against two states arrives undetected (zero check error)");
    println!("while reading the traffic perfectly; four states force every attack to");
    println!("disturb the channel before any message bit is encoded.");
}
