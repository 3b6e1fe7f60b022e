//! Run configuration: defaults, TOML config files, and flag overrides.
//!
//! Config keys and flag names mirror each other one to one. Flags override
//! file values; unspecified values take the documented defaults.

use anyhow::{anyhow, bail, Context, Result};
use qotp::protocol::SessionConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Which report files `run` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Table,
    Both,
}

impl OutputFormat {
    pub fn writes_text(self) -> bool {
        matches!(self, OutputFormat::Text | OutputFormat::Both)
    }

    pub fn writes_table(self) -> bool {
        matches!(self, OutputFormat::Table | OutputFormat::Both)
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "table" => Ok(OutputFormat::Table),
            "both" => Ok(OutputFormat::Both),
            other => bail!("format: expected text|table|both, got '{other}'"),
        }
    }

    #[cfg_attr(not(test), allow(dead_code))]
    fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Text => "text",
            OutputFormat::Table => "table",
            OutputFormat::Both => "both",
        }
    }
}

/// One optional entry per config key; the unit both TOML files and flag sets
/// are parsed into before merging.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub n: Option<usize>,
    pub message: Option<String>,
    pub message_hex: Option<String>,
    pub check_frac1: Option<f64>,
    pub check_frac2: Option<f64>,
    pub threshold: Option<f64>,
    pub state_set: Option<String>,
    pub forward_channel: Option<String>,
    pub backward_channel: Option<String>,
    pub forward_attack: Option<String>,
    pub backward_attack: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out: Option<String>,
    pub format: Option<String>,
    pub workers: Option<usize>,
    pub emit_transcripts: Option<bool>,
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("config file: {e}"))
    }

    /// Overlays `upper` on top of `self`: any key set in `upper` wins.
    pub fn overlaid(mut self, upper: ConfigLayer) -> ConfigLayer {
        macro_rules! take {
            ($field:ident) => {
                if upper.$field.is_some() {
                    self.$field = upper.$field;
                }
            };
        }
        take!(n);
        take!(message);
        take!(message_hex);
        take!(check_frac1);
        take!(check_frac2);
        take!(threshold);
        take!(state_set);
        take!(forward_channel);
        take!(backward_channel);
        take!(forward_attack);
        take!(backward_attack);
        take!(seed);
        take!(trials);
        take!(out);
        take!(format);
        take!(workers);
        take!(emit_transcripts);
        self
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub session: SessionConfig,
    pub trials: u64,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub workers: Option<usize>,
    pub emit_transcripts: bool,
}

/// Expands a hex string into bits, one nibble at a time, most significant
/// bit first.
fn hex_to_bits(hex: &str) -> Result<Vec<bool>> {
    let mut bits = Vec::with_capacity(hex.len() * 4);
    for c in hex.chars() {
        let nibble =
            c.to_digit(16).ok_or_else(|| anyhow!("message_hex: invalid hex digit '{c}'"))?;
        for shift in (0..4).rev() {
            bits.push(nibble >> shift & 1 == 1);
        }
    }
    Ok(bits)
}

fn bitstring_to_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(anyhow!("message: invalid bit character '{other}'")),
        })
        .collect()
}

impl RunConfig {
    /// Resolves a merged layer against the documented defaults and validates
    /// everything, naming the offending key in each error.
    pub fn from_layer(layer: ConfigLayer) -> Result<RunConfig> {
        let message = match (&layer.message, &layer.message_hex) {
            (Some(_), Some(_)) => bail!("message: conflicts with message_hex; give only one"),
            (Some(bits), None) => bitstring_to_bits(bits)?,
            (None, Some(hex)) => hex_to_bits(hex)?,
            (None, None) => Vec::new(),
        };
        let defaults = SessionConfig::default();
        let session = SessionConfig {
            n: layer.n.unwrap_or(defaults.n),
            check_fraction_phase1: layer.check_frac1.unwrap_or(defaults.check_fraction_phase1),
            check_fraction_phase2: layer.check_frac2.unwrap_or(defaults.check_fraction_phase2),
            error_threshold: layer.threshold.unwrap_or(defaults.error_threshold),
            state_set: match &layer.state_set {
                Some(s) => s.parse().map_err(|e| anyhow!("{e}"))?,
                None => defaults.state_set,
            },
            message,
            forward_channel: match &layer.forward_channel {
                Some(s) => s.parse().map_err(|e| anyhow!("forward_channel: {e}"))?,
                None => defaults.forward_channel,
            },
            backward_channel: match &layer.backward_channel {
                Some(s) => s.parse().map_err(|e| anyhow!("backward_channel: {e}"))?,
                None => defaults.backward_channel,
            },
            forward_attack: match &layer.forward_attack {
                Some(s) => s.parse().map_err(|e| anyhow!("forward_attack: {e}"))?,
                None => defaults.forward_attack,
            },
            backward_attack: match &layer.backward_attack {
                Some(s) => s.parse().map_err(|e| anyhow!("backward_attack: {e}"))?,
                None => defaults.backward_attack,
            },
            seed: layer.seed.unwrap_or(defaults.seed),
        };
        session.validate().map_err(|e| anyhow!("{e}"))?;
        let trials = layer.trials.unwrap_or(1);
        if trials == 0 {
            bail!("trials: must be at least 1");
        }
        let format = match &layer.format {
            Some(f) => OutputFormat::parse(f)?,
            None => OutputFormat::Both,
        };
        Ok(RunConfig {
            session,
            trials,
            out: PathBuf::from(layer.out.unwrap_or_else(|| ".".to_string())),
            format,
            workers: layer.workers,
            emit_transcripts: layer.emit_transcripts.unwrap_or(false),
        })
    }

    /// Loads an optional config file, overlays flag values, and resolves.
    pub fn resolve(file: Option<&PathBuf>, flags: ConfigLayer) -> Result<RunConfig> {
        let base = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                ConfigLayer::from_toml(&text)?
            }
            None => ConfigLayer::default(),
        };
        Self::from_layer(base.overlaid(flags))
    }

    /// The layer that reproduces this configuration, for serialization.
    #[cfg_attr(not(test), allow(dead_code))]
    pub fn to_layer(&self) -> ConfigLayer {
        ConfigLayer {
            n: Some(self.session.n),
            message: Some(
                self.session.message.iter().map(|b| if *b { '1' } else { '0' }).collect(),
            ),
            message_hex: None,
            check_frac1: Some(self.session.check_fraction_phase1),
            check_frac2: Some(self.session.check_fraction_phase2),
            threshold: Some(self.session.error_threshold),
            state_set: Some(self.session.state_set.to_string()),
            forward_channel: Some(self.session.forward_channel.to_string()),
            backward_channel: Some(self.session.backward_channel.to_string()),
            forward_attack: Some(self.session.forward_attack.to_string()),
            backward_attack: Some(self.session.backward_attack.to_string()),
            seed: Some(self.session.seed),
            trials: Some(self.trials),
            out: Some(self.out.display().to_string()),
            format: Some(self.format.as_str().to_string()),
            workers: self.workers,
            emit_transcripts: Some(self.emit_transcripts),
        }
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_layer()).expect("layer serializes")
    }
}
