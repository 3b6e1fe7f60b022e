//! Rendering of run reports (structured text), the theoretical block, and the
//! per-trial CSV table.
//!
//! The theoretical block printed by `theory` is produced by the same function
//! that embeds it in run reports, so the two are bit-identical for the same
//! configuration. Nothing time- or host-dependent is ever rendered; reports
//! depend only on the configuration, the seed and the trial count.

use qotp::analysis::{Proportion, RunReport, TheoreticalBlock, TrialEnsemble};
use std::fmt::Write as _;

/// Renders the theoretical reference block.
pub fn render_theory(block: &TheoreticalBlock) -> String {
    let mut out = String::new();
    out.push_str("[theoretical]\n");
    let _ = writeln!(out, "state_set = {}", block.state_set);
    let _ = writeln!(out, "source_entropy_bits = {:.12}", block.source_entropy_bits);
    let _ = writeln!(out, "holevo_chi_bits = {:.12}", block.holevo_chi_bits);
    match block.phase1_reference_error_rate {
        Some(rate) => {
            let _ = writeln!(out, "phase1_reference_error_rate = {rate:.12}");
        }
        None => out.push_str("phase1_reference_error_rate = n/a (channel has loss)\n"),
    }
    match block.phase2_reference_error_rate {
        Some(rate) => {
            let _ = writeln!(out, "phase2_reference_error_rate = {rate:.12}");
        }
        None => out.push_str("phase2_reference_error_rate = n/a (channel has loss)\n"),
    }
    let _ = writeln!(out, "detection_per_comparison_q = {:.12}", block.detection_q);
    for (m, p) in &block.detection_curve {
        let _ = writeln!(out, "detection_curve_m{m} = {p:.12}");
    }
    out
}

fn proportion_line(p: &Proportion) -> String {
    match p.wilson95() {
        Some((lo, hi)) => {
            format!("{:.6} ci95=[{lo:.6},{hi:.6}] ({}/{})", p.estimate(), p.count, p.total)
        }
        None => format!("n/a ({}/{})", p.count, p.total),
    }
}

/// Renders the full structured-text report.
pub fn render_report(report: &RunReport, version: &str) -> String {
    let mut out = String::new();
    out.push_str("qotp run report\n===============\n\n");
    out.push_str("[provenance]\n");
    let _ = writeln!(out, "version = {version}");
    let _ = writeln!(out, "master_seed = {}", report.master_seed);
    let _ = writeln!(out, "trials = {}", report.trials);
    let _ = writeln!(out, "config = {}", report.config_line);
    out.push('\n');
    out.push_str("[empirical]\n");
    let _ = writeln!(out, "sessions_completed = {}", report.completed);
    let _ = writeln!(out, "sessions_aborted_phase1 = {}", report.aborted_phase1);
    let _ = writeln!(out, "sessions_aborted_phase2 = {}", report.aborted_phase2);
    let _ = writeln!(out, "abort_rate_phase1 = {}", proportion_line(&report.abort_rate_phase1));
    let _ = writeln!(out, "abort_rate_phase2 = {}", proportion_line(&report.abort_rate_phase2));
    let _ = writeln!(out, "phase1_error_rate = {}", proportion_line(&report.phase1_error));
    let _ = writeln!(out, "phase2_error_rate = {}", proportion_line(&report.phase2_error));
    let _ =
        writeln!(out, "message_bit_error_rate = {}", proportion_line(&report.message_bit_error));
    let _ = writeln!(out, "erasure_rate = {}", proportion_line(&report.erasure));
    let _ = writeln!(out, "eve_guess_accuracy = {}", proportion_line(&report.eve_accuracy));
    let _ = writeln!(
        out,
        "eve_conclusive_accuracy = {}",
        proportion_line(&report.eve_conclusive_accuracy)
    );
    if report.eve_guesses_per_message_bit.is_nan() {
        out.push_str("eve_guesses_per_message_bit = n/a\n");
    } else {
        let _ = writeln!(
            out,
            "eve_guesses_per_message_bit = {:.6}",
            report.eve_guesses_per_message_bit
        );
    }
    let _ = writeln!(out, "empirical_mutual_information_bits = {:.6}", report.empirical_mi);
    let j = &report.eve_joint;
    let _ = writeln!(
        out,
        "eve_joint t0=[{},{},{}] t1=[{},{},{}]",
        j[0][0], j[0][1], j[0][2], j[1][0], j[1][1], j[1][2]
    );
    let _ = writeln!(
        out,
        "ordering_invariant = {}",
        if report.ordering_ok { "ok" } else { "VIOLATED" }
    );
    out.push('\n');
    out.push_str(&render_theory(&report.theoretical));
    out
}

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// Renders the per-trial table: header row plus one row per trial.
pub fn render_csv(ensemble: &TrialEnsemble) -> String {
    let mut out = String::new();
    out.push_str(
        "trial,seed,status,prepared,delivered_forward,phase1_compared,phase1_errors,\
         phase1_error_rate,phase2_compared,phase2_errors,phase2_error_rate,message_bits,\
         decoded_bits,message_bit_errors,erasures,eve_acted_forward,eve_conclusive,\
         eve_inconclusive,eve_blocked,eve_t0_guess0,eve_t0_guess1,eve_t0_abstain,\
         eve_t1_guess0,eve_t1_guess1,eve_t1_abstain,eve_conclusive_guesses,\
         eve_conclusive_correct,ordering_ok\n",
    );
    for s in &ensemble.summaries {
        let rate1 = if s.phase1_compared == 0 {
            String::new()
        } else {
            format!("{}", s.phase1_errors as f64 / s.phase1_compared as f64)
        };
        let rate2 = if s.phase2_compared == 0 {
            String::new()
        } else {
            format!("{}", s.phase2_errors as f64 / s.phase2_compared as f64)
        };
        let fields = [
            s.trial_index.to_string(),
            s.seed.to_string(),
            s.status.to_string(),
            s.prepared.to_string(),
            s.delivered_forward.to_string(),
            s.phase1_compared.to_string(),
            s.phase1_errors.to_string(),
            rate1,
            s.phase2_compared.to_string(),
            s.phase2_errors.to_string(),
            rate2,
            s.message_bits.to_string(),
            s.decoded_bits.to_string(),
            s.message_bit_errors.to_string(),
            s.erasures.to_string(),
            s.eve_forward_acted.to_string(),
            s.eve_conclusive.to_string(),
            s.eve_inconclusive.to_string(),
            s.eve_blocked.to_string(),
            s.eve_joint[0][0].to_string(),
            s.eve_joint[0][1].to_string(),
            s.eve_joint[0][2].to_string(),
            s.eve_joint[1][0].to_string(),
            s.eve_joint[1][1].to_string(),
            s.eve_joint[1][2].to_string(),
            s.eve_conclusive_guesses.to_string(),
            s.eve_conclusive_correct.to_string(),
            s.ordering_ok.to_string(),
        ];
        let row: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
