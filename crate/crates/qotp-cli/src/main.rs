//! Command-line harness for the quantum-one-time-pad protocol simulator.
//!
//! Subcommands:
//! - `run`: execute a Monte Carlo ensemble and write report files.
//! - `replay`: verify a recorded transcript by re-deriving it from its draws.
//! - `theory`: print the theoretical reference block without simulating.
//!
//! Exit codes: 0 for a clean run (majority of trials completed, or an
//! identical replay), 1 for usage/configuration/IO errors, 2 when the
//! configured scenario aborts (detection fired) or a replay diverges.

mod config;
mod report;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{ConfigLayer, RunConfig};
use qotp::analysis::{
    run_ensemble_with, theoretical_references_with_curve, RunReport, TrialEnsemble,
};
use qotp::protocol::{replay_transcript, ReplayVerdict};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "qotp",
    version,
    about = "Quantum-one-time-pad secure direct communication simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo ensemble of protocol sessions.
    Run(SharedArgs),
    /// Re-derive a recorded transcript from its draws and verify it byte for byte.
    Replay {
        /// Path to a transcript written by `run --emit-transcripts`.
        transcript: PathBuf,
    },
    /// Print theoretical reference values (entropies, Holevo bound, detection curve).
    Theory {
        #[command(flatten)]
        shared: SharedArgs,
        /// Largest m for the printed detection curve.
        #[arg(long, default_value_t = 8)]
        detection_m: u32,
    },
}

/// Flags mirror config-file keys one to one; flags override file values.
#[derive(Args)]
struct SharedArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Batch size (photons per session).
    #[arg(long)]
    n: Option<usize>,
    /// Message as a bit string, e.g. 100101.
    #[arg(long, conflicts_with = "message_hex")]
    message: Option<String>,
    /// Message as hex digits, four bits per digit, high bit first.
    #[arg(long)]
    message_hex: Option<String>,
    /// Fraction of delivered photons sampled for the phase-1 check.
    #[arg(long)]
    check_frac1: Option<f64>,
    /// Fraction of B-batch photons used as phase-2 check instances.
    #[arg(long)]
    check_frac2: Option<f64>,
    /// Error-rate abort threshold for both phases.
    #[arg(long)]
    threshold: Option<f64>,
    /// Preparation alphabet: four | cai2.
    #[arg(long)]
    state_set: Option<String>,
    /// Forward channel spec: ideal | depol:p | loss:eta, chained with '+'.
    #[arg(long)]
    forward_channel: Option<String>,
    /// Backward channel spec, same grammar as the forward channel.
    #[arg(long)]
    backward_channel: Option<String>,
    /// Forward attack spec: none | ir:random|plus|cross:frac | usd:block|pass:frac.
    #[arg(long)]
    forward_attack: Option<String>,
    /// Backward attack spec, same grammar as the forward attack.
    #[arg(long)]
    backward_attack: Option<String>,
    /// Master seed; trial i derives its own sub-seed from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent sessions.
    #[arg(long)]
    trials: Option<u64>,
    /// Output directory for report files (must exist).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which report files to write: text | table | both.
    #[arg(long)]
    format: Option<String>,
    /// Worker-pool size hint; never changes any numeric output.
    #[arg(long)]
    workers: Option<usize>,
    /// Write `transcripts/trial-<i>.log` under the output directory.
    #[arg(long)]
    emit_transcripts: bool,
}

impl SharedArgs {
    fn to_layer(&self) -> ConfigLayer {
        ConfigLayer {
            n: self.n,
            message: self.message.clone(),
            message_hex: self.message_hex.clone(),
            check_frac1: self.check_frac1,
            check_frac2: self.check_frac2,
            threshold: self.threshold,
            state_set: self.state_set.clone(),
            forward_channel: self.forward_channel.clone(),
            backward_channel: self.backward_channel.clone(),
            forward_attack: self.forward_attack.clone(),
            backward_attack: self.backward_attack.clone(),
            seed: self.seed,
            trials: self.trials,
            out: self.out.as_ref().map(|p| p.display().to_string()),
            format: self.format.clone(),
            workers: self.workers,
            emit_transcripts: if self.emit_transcripts { Some(true) } else { None },
        }
    }

    fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_ref(), self.to_layer())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Run(shared) => cmd_run(&shared),
        Command::Replay { transcript } => cmd_replay(&transcript),
        Command::Theory { shared, detection_m } => cmd_theory(&shared, detection_m),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_run(shared: &SharedArgs) -> Result<u8> {
    let config = shared.resolve()?;
    if !config.out.is_dir() {
        bail!("out: output directory {} does not exist", config.out.display());
    }
    let transcripts_dir = config.out.join("transcripts");
    if config.emit_transcripts {
        std::fs::create_dir_all(&transcripts_dir)
            .with_context(|| format!("cannot create {}", transcripts_dir.display()))?;
    }

    let emit = config.emit_transcripts;
    let dir = transcripts_dir.clone();
    let observer = move |trial: u64, outcome: &qotp::protocol::SessionOutcome| {
        if emit {
            let path = dir.join(format!("trial-{trial}.log"));
            std::fs::write(&path, outcome.transcript.to_text()).map_err(|e| {
                qotp::Error::Config {
                    field: "out".into(),
                    reason: format!("{}: {e}", path.display()),
                }
            })?;
        }
        Ok(())
    };
    let ensemble = run_ensemble_with(&config.session, config.trials, config.workers, observer)
        .map_err(|e| anyhow!("{e}"))?;
    let report = RunReport::from_ensemble(&ensemble);
    let text = report::render_report(&report, env!("CARGO_PKG_VERSION"));
    print!("{text}");

    write_outputs(&config, &ensemble, &text)?;
    // 0 when the majority of trials completed, 2 when the scenario aborted.
    Ok(if report.completed * 2 > report.trials { 0 } else { 2 })
}

fn write_outputs(config: &RunConfig, ensemble: &TrialEnsemble, text: &str) -> Result<()> {
    if config.format.writes_text() {
        let path = config.out.join("report.txt");
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    if config.format.writes_table() {
        let path = config.out.join("trials.csv");
        std::fs::write(&path, report::render_csv(ensemble))
            .with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_replay(path: &PathBuf) -> Result<u8> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read transcript {}", path.display()))?;
    match replay_transcript(&text).map_err(|e| anyhow!("{e}"))? {
        ReplayVerdict::Identical => {
            println!("replay ok: {} ({} lines)", path.display(), text.lines().count());
            Ok(0)
        }
        ReplayVerdict::Divergent { line } => {
            println!("replay mismatch: {} first divergent line {line}", path.display());
            Ok(2)
        }
    }
}

fn cmd_theory(shared: &SharedArgs, detection_m: u32) -> Result<u8> {
    let config = shared.resolve()?;
    let block = theoretical_references_with_curve(&config.session, detection_m);
    print!("{}", report::render_theory(&block));
    Ok(0)
}
