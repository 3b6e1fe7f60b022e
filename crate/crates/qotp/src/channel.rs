//! Per-photon transmission models for the forward (Bob to Alice) and backward
//! (Alice to Bob) quantum channels.
//!
//! Depolarizing noise is applied as a deterministic trace-preserving map on
//! the density matrix, so it consumes no randomness; stochastic behavior
//! re-enters only at measurement. Loss consumes one draw per photon and
//! produces an erasure the protocol must handle.

use crate::mat2::Mat2;
use crate::qstate::QubitState;
use crate::rng::{unit_f64, DrawSource};
use crate::Error;
use std::fmt;

/// A quantum channel acting on one photon at a time.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// Perfect transmission.
    Ideal,
    /// With probability `p` the state is replaced by the maximally mixed
    /// state: `rho -> (1-p) rho + p I/2`.
    Depolarizing(f64),
    /// The photon is absorbed with probability `eta`.
    Lossy(f64),
    /// Stages applied in order, short-circuiting on loss. Normalized form is
    /// flat and non-empty.
    Composite(Vec<ChannelModel>),
}

/// Outcome of pushing one photon through a channel (or an attack).
#[derive(Debug, Clone, PartialEq)]
pub enum TransmitResult {
    Delivered(QubitState),
    Lost,
}

impl TransmitResult {
    pub fn delivered(&self) -> Option<&QubitState> {
        match self {
            TransmitResult::Delivered(s) => Some(s),
            TransmitResult::Lost => None,
        }
    }
}

impl ChannelModel {
    /// Checks parameter ranges and composite shape (non-empty, no nesting).
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            ChannelModel::Ideal => Ok(()),
            ChannelModel::Depolarizing(p) => in_unit("depolarizing probability", *p),
            ChannelModel::Lossy(eta) => in_unit("loss probability", *eta),
            ChannelModel::Composite(stages) => {
                if stages.is_empty() {
                    return Err(Error::InvalidChannel("empty composite channel".into()));
                }
                for stage in stages {
                    if matches!(stage, ChannelModel::Composite(_)) {
                        return Err(Error::InvalidChannel(
                            "composite channels must be flat; normalize first".into(),
                        ));
                    }
                    stage.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Flattens nested composites and validates the result.
    pub fn normalized(self) -> Result<ChannelModel, Error> {
        fn flatten(model: ChannelModel, out: &mut Vec<ChannelModel>) {
            match model {
                ChannelModel::Composite(stages) => {
                    for s in stages {
                        flatten(s, out);
                    }
                }
                other => out.push(other),
            }
        }
        let normalized = match self {
            ChannelModel::Composite(stages) => {
                let mut flat = Vec::new();
                for s in stages {
                    flatten(s, &mut flat);
                }
                if flat.len() == 1 {
                    flat.pop().unwrap()
                } else {
                    ChannelModel::Composite(flat)
                }
            }
            other => other,
        };
        normalized.validate()?;
        Ok(normalized)
    }

    pub fn has_loss(&self) -> bool {
        match self {
            ChannelModel::Ideal | ChannelModel::Depolarizing(_) => false,
            ChannelModel::Lossy(_) => true,
            ChannelModel::Composite(stages) => stages.iter().any(ChannelModel::has_loss),
        }
    }

    /// Sends one photon through the channel.
    ///
    /// `Ideal` and `Depolarizing` consume no draws; `Lossy(eta)` consumes one
    /// draw and loses the photon when its unit-interval image falls below
    /// `eta`. Composite stages apply in order and stop at the first loss.
    pub fn transmit(&self, state: &QubitState, draws: &mut dyn DrawSource) -> TransmitResult {
        debug_assert!(self.validate().is_ok(), "transmit on unvalidated channel");
        match self {
            ChannelModel::Ideal => TransmitResult::Delivered(*state),
            ChannelModel::Depolarizing(p) => {
                let mixed = state.matrix().scale(1.0 - p) + Mat2::identity().scale(0.5 * p);
                TransmitResult::Delivered(QubitState::from_trusted(mixed))
            }
            ChannelModel::Lossy(eta) => {
                if unit_f64(draws.draw()) < *eta {
                    TransmitResult::Lost
                } else {
                    TransmitResult::Delivered(*state)
                }
            }
            ChannelModel::Composite(stages) => {
                let mut current = *state;
                for stage in stages {
                    match stage.transmit(&current, draws) {
                        TransmitResult::Delivered(next) => current = next,
                        TransmitResult::Lost => return TransmitResult::Lost,
                    }
                }
                TransmitResult::Delivered(current)
            }
        }
    }

    /// Probability that a photon prepared and measured in the same basis
    /// reads back flipped: 0 for `Ideal`, `p/2` for `Depolarizing(p)`, and
    /// the independent-flip composition `a + b - 2ab` across stages.
    ///
    /// Undefined for channels with loss stages, which erase instead of flip.
    pub fn matched_basis_error_rate(&self) -> Result<f64, Error> {
        match self {
            ChannelModel::Ideal => Ok(0.0),
            ChannelModel::Depolarizing(p) => {
                self.validate()?;
                Ok(p / 2.0)
            }
            ChannelModel::Lossy(_) => Err(Error::LossyErrorRate),
            ChannelModel::Composite(stages) => {
                let mut rate = 0.0f64;
                for stage in stages {
                    let q = stage.matched_basis_error_rate()?;
                    rate = rate + q - 2.0 * rate * q;
                }
                Ok(rate)
            }
        }
    }
}

impl fmt::Display for ChannelModel {
    /// Compact configuration form: `ideal`, `depol:p`, `loss:eta`, stages
    /// joined with `+`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelModel::Ideal => write!(f, "ideal"),
            ChannelModel::Depolarizing(p) => write!(f, "depol:{p}"),
            ChannelModel::Lossy(eta) => write!(f, "loss:{eta}"),
            ChannelModel::Composite(stages) => {
                let parts: Vec<String> = stages.iter().map(|s| s.to_string()).collect();
                write!(f, "{}", parts.join("+"))
            }
        }
    }
}

impl std::str::FromStr for ChannelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        fn parse_stage(part: &str) -> Result<ChannelModel, Error> {
            if part == "ideal" {
                return Ok(ChannelModel::Ideal);
            }
            if let Some(v) = part.strip_prefix("depol:") {
                let p: f64 = v.parse().map_err(|_| bad_channel(part))?;
                return Ok(ChannelModel::Depolarizing(p));
            }
            if let Some(v) = part.strip_prefix("loss:") {
                let eta: f64 = v.parse().map_err(|_| bad_channel(part))?;
                return Ok(ChannelModel::Lossy(eta));
            }
            Err(bad_channel(part))
        }
        let parts: Vec<&str> = s.split('+').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(bad_channel(s));
        }
        let model = if parts.len() == 1 {
            parse_stage(parts[0])?
        } else {
            ChannelModel::Composite(parts.into_iter().map(parse_stage).collect::<Result<_, _>>()?)
        };
        model.validate()?;
        Ok(model)
    }
}

fn bad_channel(part: &str) -> Error {
    Error::InvalidChannel(format!(
        "'{part}' (expected ideal | depol:p | loss:eta, chained with '+')"
    ))
}

fn in_unit(what: &str, v: f64) -> Result<(), Error> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidChannel(format!("{what} {v} outside [0,1]")))
    }
}
