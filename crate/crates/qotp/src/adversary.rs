//! Eavesdropper strategies applied to photons in transit.
//!
//! Two attack families are modeled. Intercept-resend measures a fraction of
//! passing photons in a guessed basis and forwards the collapsed state.
//! The opaque attack runs unambiguous state discrimination (USD) against the
//! `{|H>, |u>}` pair: conclusive outcomes identify the state with certainty
//! and a perfect copy is resent, while inconclusive photons are either
//! blocked (the photon simply never arrives) or passed on in their
//! post-measurement state.
//!
//! On the return leg Eve re-measures photons she identified on the way out;
//! the XOR of her two results is her guess at the encoded bit. Positions she
//! knows nothing about yield no guess.

use crate::channel::TransmitResult;
use crate::mat2::Mat2;
use crate::qstate::{Basis, QubitState};
use crate::rng::{unit_f64, DrawSource};
use crate::Error;
use std::collections::BTreeMap;
use std::fmt;

/// How intercept-resend picks its measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisPolicy {
    Random,
    FixedPlus,
    FixedCross,
}

/// Adversary behavior on one channel leg.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackStrategy {
    /// No adversary present.
    None,
    /// Measure each acted-on photon in a policy-chosen basis and resend the
    /// collapsed eigenstate.
    InterceptResend { policy: BasisPolicy, fraction: f64 },
    /// Unambiguous discrimination of `{|H>, |u>}`. With `block_inconclusive`
    /// the inconclusive photons vanish; otherwise they continue in their
    /// renormalized post-measurement state.
    OpaqueUsd { block_inconclusive: bool, fraction: f64 },
}

impl AttackStrategy {
    pub fn validate(&self) -> Result<(), Error> {
        let fraction = match self {
            AttackStrategy::None => return Ok(()),
            AttackStrategy::InterceptResend { fraction, .. } => fraction,
            AttackStrategy::OpaqueUsd { fraction, .. } => fraction,
        };
        if (0.0..=1.0).contains(fraction) {
            Ok(())
        } else {
            Err(Error::InvalidAttack(format!("fraction {fraction} outside [0,1]")))
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, AttackStrategy::None)
    }
}

impl fmt::Display for AttackStrategy {
    /// Compact configuration form: `none`, `ir:policy:fraction`,
    /// `usd:block|pass:fraction`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackStrategy::None => write!(f, "none"),
            AttackStrategy::InterceptResend { policy, fraction } => {
                let p = match policy {
                    BasisPolicy::Random => "random",
                    BasisPolicy::FixedPlus => "plus",
                    BasisPolicy::FixedCross => "cross",
                };
                write!(f, "ir:{p}:{fraction}")
            }
            AttackStrategy::OpaqueUsd { block_inconclusive, fraction } => {
                let mode = if *block_inconclusive { "block" } else { "pass" };
                write!(f, "usd:{mode}:{fraction}")
            }
        }
    }
}

impl std::str::FromStr for AttackStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = |detail: &str| {
            Error::InvalidAttack(format!(
                "'{detail}' (expected none | ir:random|plus|cross:fraction | usd:block|pass:fraction)"
            ))
        };
        if s == "none" {
            return Ok(AttackStrategy::None);
        }
        let parts: Vec<&str> = s.split(':').collect();
        let strategy = match parts.as_slice() {
            ["ir", policy, fraction] => {
                let policy = match *policy {
                    "random" => BasisPolicy::Random,
                    "plus" => BasisPolicy::FixedPlus,
                    "cross" => BasisPolicy::FixedCross,
                    _ => return Err(bad(s)),
                };
                let fraction: f64 = fraction.parse().map_err(|_| bad(s))?;
                AttackStrategy::InterceptResend { policy, fraction }
            }
            ["usd", mode, fraction] => {
                let block_inconclusive = match *mode {
                    "block" => true,
                    "pass" => false,
                    _ => return Err(bad(s)),
                };
                let fraction: f64 = fraction.parse().map_err(|_| bad(s))?;
                AttackStrategy::OpaqueUsd { block_inconclusive, fraction }
            }
            _ => return Err(bad(s)),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

/// Which of the two USD target states a conclusive outcome identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsdLabel {
    /// `|H>`, i.e. the bit-0 eigenstate of the Plus basis.
    H,
    /// `|u>`, i.e. the bit-0 eigenstate of the Cross basis.
    U,
}

impl UsdLabel {
    pub fn basis(self) -> Basis {
        match self {
            UsdLabel::H => Basis::Plus,
            UsdLabel::U => Basis::Cross,
        }
    }

    /// Both USD targets encode bit 0.
    pub fn bit(self) -> bool {
        false
    }

    pub fn state(self) -> QubitState {
        QubitState::prepare(self.basis(), self.bit())
    }
}

impl fmt::Display for UsdLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UsdLabel::H => write!(f, "H"),
            UsdLabel::U => write!(f, "u"),
        }
    }
}

/// What Eve did to one photon, as recorded per position and leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EveAction {
    Passed,
    Measured { basis: Basis, bit: bool },
    Conclusive { label: UsdLabel },
    Inconclusive,
    Blocked,
}

/// Three-outcome POVM that discriminates `|H>` from `|u>` without error.
///
/// `conclusive_h` is proportional to `|d><d|` (orthogonal to `|u>`) and
/// `conclusive_u` to `|V><V|` (orthogonal to `|H>`), scaled by
/// `c = 1/(1 + <H|u>)`, the largest factor keeping the completion
/// `I - E_H - E_u` positive. Either target triggers its conclusive element
/// with probability `1 - <H|u>` and the other conclusive element never.
#[derive(Debug, Clone, PartialEq)]
pub struct UsdPovm {
    pub conclusive_h: Mat2,
    pub conclusive_u: Mat2,
    pub inconclusive: Mat2,
    inconclusive_sqrt: Mat2,
}

/// Overlap `<H|u>` of the two USD targets.
pub const USD_OVERLAP: f64 = std::f64::consts::FRAC_1_SQRT_2;

impl UsdPovm {
    pub fn build() -> Self {
        let c = 1.0 / (1.0 + USD_OVERLAP);
        let conclusive_h = Basis::Cross.projector(true).scale(c);
        let conclusive_u = Basis::Plus.projector(true).scale(c);
        let inconclusive = Mat2::identity() - conclusive_h - conclusive_u;
        let inconclusive_sqrt = inconclusive.sqrt_psd();
        Self { conclusive_h, conclusive_u, inconclusive, inconclusive_sqrt }
    }

    /// Outcome probabilities `[p_H, p_u, p_inconclusive]` on `state`.
    pub fn probabilities(&self, state: &QubitState) -> [f64; 3] {
        let p_h = (self.conclusive_h * *state.matrix()).trace().re.clamp(0.0, 1.0);
        let p_u = (self.conclusive_u * *state.matrix()).trace().re.clamp(0.0, 1.0);
        [p_h, p_u, (1.0 - p_h - p_u).clamp(0.0, 1.0)]
    }

    /// Conclusive-outcome probability on either target state, `1 - <H|u>`.
    pub fn conclusive_probability() -> f64 {
        1.0 - USD_OVERLAP
    }

    /// Post-measurement state after the inconclusive outcome, via the
    /// square-root update rule `K rho K / tr(K rho K)` with
    /// `K = sqrt(E_inconclusive)`.
    pub fn inconclusive_update(&self, state: &QubitState) -> QubitState {
        let updated = self.inconclusive_sqrt * *state.matrix() * self.inconclusive_sqrt;
        let norm = updated.trace().re;
        QubitState::from_trusted(updated.scale(1.0 / norm))
    }
}

impl Default for UsdPovm {
    fn default() -> Self {
        Self::build()
    }
}

/// Eve's per-session knowledge: one record per position and leg, plus her
/// guesses at encoded bits. Never visible to party logic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EveMemory {
    forward: BTreeMap<usize, EveAction>,
    backward: BTreeMap<usize, EveAction>,
    guesses: BTreeMap<usize, bool>,
}

impl EveMemory {
    pub fn is_empty(&self) -> bool {
        self.forward.is_empty() && self.backward.is_empty() && self.guesses.is_empty()
    }

    pub fn forward_action(&self, position: usize) -> Option<&EveAction> {
        self.forward.get(&position)
    }

    pub fn backward_action(&self, position: usize) -> Option<&EveAction> {
        self.backward.get(&position)
    }

    pub fn guess(&self, position: usize) -> Option<bool> {
        self.guesses.get(&position).copied()
    }

    pub fn guesses(&self) -> &BTreeMap<usize, bool> {
        &self.guesses
    }

    /// Basis and bit Eve learned about `position` on the forward leg, if any.
    fn forward_knowledge(&self, position: usize) -> Option<(Basis, bool)> {
        match self.forward.get(&position)? {
            EveAction::Measured { basis, bit } => Some((*basis, *bit)),
            EveAction::Conclusive { label } => Some((label.basis(), label.bit())),
            _ => None,
        }
    }
}

/// One eavesdropper instance bound to a single session.
#[derive(Debug, Clone)]
pub struct Eve {
    strategy: AttackStrategy,
    povm: UsdPovm,
    pub memory: EveMemory,
}

impl Eve {
    pub fn new(strategy: AttackStrategy) -> Self {
        Self { strategy, povm: UsdPovm::build(), memory: EveMemory::default() }
    }

    pub fn strategy(&self) -> &AttackStrategy {
        &self.strategy
    }

    /// Decides whether Eve acts on this photon. Exactly one draw is consumed
    /// per photon per leg regardless of strategy or fraction, so draw streams
    /// stay aligned across attack configurations.
    fn acts(&self, fraction: f64, draws: &mut dyn DrawSource) -> bool {
        let u = unit_f64(draws.draw());
        u < fraction
    }

    /// Attack one photon on the forward (Bob to Alice) leg.
    pub fn attack_forward(
        &mut self,
        position: usize,
        photon: &QubitState,
        draws: &mut dyn DrawSource,
    ) -> (TransmitResult, EveAction) {
        match self.strategy.clone() {
            AttackStrategy::None => {
                self.acts(0.0, draws);
                (TransmitResult::Delivered(*photon), EveAction::Passed)
            }
            AttackStrategy::InterceptResend { policy, fraction } => {
                if !self.acts(fraction, draws) {
                    return (TransmitResult::Delivered(*photon), EveAction::Passed);
                }
                let basis = match policy {
                    BasisPolicy::Random => {
                        if draws.draw() & 1 == 0 {
                            Basis::Plus
                        } else {
                            Basis::Cross
                        }
                    }
                    BasisPolicy::FixedPlus => Basis::Plus,
                    BasisPolicy::FixedCross => Basis::Cross,
                };
                let (bit, collapsed) = photon.measure(basis, unit_f64(draws.draw()));
                let action = EveAction::Measured { basis, bit };
                self.memory.forward.insert(position, action);
                (TransmitResult::Delivered(collapsed), action)
            }
            AttackStrategy::OpaqueUsd { block_inconclusive, fraction } => {
                if !self.acts(fraction, draws) {
                    return (TransmitResult::Delivered(*photon), EveAction::Passed);
                }
                let [p_h, p_u, _] = self.povm.probabilities(photon);
                let r = unit_f64(draws.draw());
                if r < p_h {
                    let action = EveAction::Conclusive { label: UsdLabel::H };
                    self.memory.forward.insert(position, action);
                    (TransmitResult::Delivered(UsdLabel::H.state()), action)
                } else if r < p_h + p_u {
                    let action = EveAction::Conclusive { label: UsdLabel::U };
                    self.memory.forward.insert(position, action);
                    (TransmitResult::Delivered(UsdLabel::U.state()), action)
                } else if block_inconclusive {
                    self.memory.forward.insert(position, EveAction::Blocked);
                    (TransmitResult::Lost, EveAction::Blocked)
                } else {
                    self.memory.forward.insert(position, EveAction::Inconclusive);
                    let updated = self.povm.inconclusive_update(photon);
                    (TransmitResult::Delivered(updated), EveAction::Inconclusive)
                }
            }
        }
    }

    /// Attack one photon on the backward (Alice to Bob) leg.
    ///
    /// At positions with forward knowledge Eve measures in the recorded
    /// basis, guesses `recorded bit XOR measured bit`, and resends the
    /// collapsed state (for eigenstate inputs this is disturbance-free).
    /// Elsewhere intercept-resend acts per its policy without guessing, and
    /// the USD strategy passes.
    pub fn attack_backward(
        &mut self,
        position: usize,
        photon: &QubitState,
        draws: &mut dyn DrawSource,
    ) -> (TransmitResult, EveAction, Option<bool>) {
        let strategy = self.strategy.clone();
        // Align draw consumption with the forward leg: one decision draw per
        // photon, used only where the strategy needs it.
        let acted = match &strategy {
            AttackStrategy::None => self.acts(0.0, draws),
            AttackStrategy::InterceptResend { fraction, .. }
            | AttackStrategy::OpaqueUsd { fraction, .. } => self.acts(*fraction, draws),
        };
        if let Some((basis, forward_bit)) = self.memory.forward_knowledge(position) {
            let (bit, collapsed) = photon.measure(basis, unit_f64(draws.draw()));
            let action = EveAction::Measured { basis, bit };
            let guess = forward_bit ^ bit;
            self.memory.backward.insert(position, action);
            self.memory.guesses.insert(position, guess);
            return (TransmitResult::Delivered(collapsed), action, Some(guess));
        }
        match strategy {
            AttackStrategy::InterceptResend { policy, .. } if acted => {
                let basis = match policy {
                    BasisPolicy::Random => {
                        if draws.draw() & 1 == 0 {
                            Basis::Plus
                        } else {
                            Basis::Cross
                        }
                    }
                    BasisPolicy::FixedPlus => Basis::Plus,
                    BasisPolicy::FixedCross => Basis::Cross,
                };
                let (bit, collapsed) = photon.measure(basis, unit_f64(draws.draw()));
                let action = EveAction::Measured { basis, bit };
                self.memory.backward.insert(position, action);
                (TransmitResult::Delivered(collapsed), action, None)
            }
            _ => (TransmitResult::Delivered(*photon), EveAction::Passed, None),
        }
    }
}
