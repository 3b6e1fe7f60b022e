//! Single-qubit states, preparations, Born-rule measurement, the two message
//! encodings, and entropy computations.
//!
//! States are kept as 2x2 density matrices rather than amplitude pairs, so
//! channel noise, mixtures and global-phase irrelevance fall out of one
//! representation; the four protocol preparations are rank-1 special cases.
//! The computational basis is identified with horizontal/vertical
//! polarization: `|H> = |0>`, `|V> = |1>`, `|u> = (|0>+|1>)/sqrt(2)`,
//! `|d> = (|0>-|1>)/sqrt(2)`.

use crate::mat2::Mat2;
use crate::Error;
use num_complex::Complex64;
use std::fmt;

/// Tolerance for the Hermiticity, trace and positivity invariants.
pub const STATE_TOL: f64 = 1e-12;

/// One of the protocol's two measuring bases.
///
/// `Plus` is the rectilinear basis `{|H>, |V>}`, `Cross` the diagonal basis
/// `{|u>, |d>}`. Bit 0 maps to the first eigenstate of either basis (`|H>` or
/// `|u>`), bit 1 to the second (`|V>` or `|d>`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Plus,
    Cross,
}

impl Basis {
    /// Projector onto the eigenstate encoding `bit` in this basis.
    ///
    /// The entries are exact dyadic constants so that matched-basis
    /// measurements of exact preparations are deterministic, not merely
    /// deterministic up to rounding.
    pub fn projector(self, bit: bool) -> Mat2 {
        match (self, bit) {
            (Basis::Plus, false) => Mat2::from_real([[1.0, 0.0], [0.0, 0.0]]),
            (Basis::Plus, true) => Mat2::from_real([[0.0, 0.0], [0.0, 1.0]]),
            (Basis::Cross, false) => Mat2::from_real([[0.5, 0.5], [0.5, 0.5]]),
            (Basis::Cross, true) => Mat2::from_real([[0.5, -0.5], [-0.5, 0.5]]),
        }
    }

    pub fn other(self) -> Basis {
        match self {
            Basis::Plus => Basis::Cross,
            Basis::Cross => Basis::Plus,
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Plus => write!(f, "+"),
            Basis::Cross => write!(f, "x"),
        }
    }
}

impl std::str::FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "+" => Ok(Basis::Plus),
            "x" => Ok(Basis::Cross),
            other => Err(Error::Config {
                field: "basis".into(),
                reason: format!("expected '+' or 'x', got '{other}'"),
            }),
        }
    }
}

/// A validated single-qubit density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    rho: Mat2,
}

impl QubitState {
    /// Validates Hermiticity, unit trace and positive semidefiniteness
    /// (eigenvalues at least `-STATE_TOL`).
    pub fn from_matrix(rho: Mat2) -> Result<Self, Error> {
        if !rho.is_hermitian(STATE_TOL) {
            return Err(Error::InvalidState(format!(
                "not Hermitian within {STATE_TOL}: max deviation {}",
                rho.max_abs_diff(&rho.adjoint())
            )));
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > STATE_TOL || trace.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {trace} is not 1")));
        }
        let [lo, _] = rho.herm_eigenvalues();
        if lo < -STATE_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {lo}")));
        }
        Ok(Self { rho })
    }

    /// Wraps a matrix produced by an internal trace-preserving operation.
    /// Violations here are programming errors, not protocol events.
    pub(crate) fn from_trusted(rho: Mat2) -> Self {
        Self::from_matrix(rho).expect("internal operation broke density-matrix invariants")
    }

    /// Rank-1 state from a normalized amplitude pair. Global phase drops out
    /// in the outer product.
    pub fn from_ket(amplitudes: [Complex64; 2]) -> Result<Self, Error> {
        let norm = amplitudes[0].norm_sqr() + amplitudes[1].norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("ket norm² {norm} is not 1")));
        }
        Self::from_matrix(Mat2::outer(amplitudes))
    }

    /// One of the four protocol preparations: the eigenstate of `basis` that
    /// encodes `bit`.
    pub fn prepare(basis: Basis, bit: bool) -> Self {
        Self { rho: basis.projector(bit) }
    }

    pub fn maximally_mixed() -> Self {
        Self { rho: Mat2::identity().scale(0.5) }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.rho
    }

    /// Born-rule probability of reading `bit` when measuring in `basis`:
    /// `tr(rho P)`, clamped into `[0, 1]` against rounding.
    pub fn born_probability(&self, basis: Basis, bit: bool) -> f64 {
        let p = (self.rho * basis.projector(bit)).trace().re;
        p.clamp(0.0, 1.0)
    }

    /// Projective measurement driven by one externally supplied uniform
    /// variate in `[0, 1)`.
    ///
    /// The outcome is bit 0 exactly when `randomness` falls below the bit-0
    /// Born probability, which makes every outcome replayable from a recorded
    /// variate. The collapsed state is the projector of the observed outcome,
    /// so re-measuring in the same basis repeats the bit with certainty.
    pub fn measure(&self, basis: Basis, randomness: f64) -> (bool, QubitState) {
        let bit = randomness >= self.born_probability(basis, false);
        (bit, QubitState::prepare(basis, bit))
    }

    /// Von Neumann entropy in bits: `-sum(lambda log2 lambda)` over the
    /// eigenvalues, with `0 log 0 = 0`. Lies in `[0, 1]` for a qubit.
    pub fn von_neumann_entropy(&self) -> f64 {
        spectrum_entropy_bits(&self.rho)
    }
}

/// Entropy of the clipped eigenvalue spectrum of a Hermitian matrix.
///
/// Eigenvalues within rounding of the `[0, 1]` interval are clipped onto it;
/// anything further out indicates a bug upstream and panics in debug builds.
fn spectrum_entropy_bits(m: &Mat2) -> f64 {
    let mut acc = 0.0;
    for lambda in m.herm_eigenvalues() {
        debug_assert!(
            lambda > -1e-9 && lambda < 1.0 + 1e-9,
            "eigenvalue {lambda} far outside [0,1]"
        );
        let l = lambda.clamp(0.0, 1.0);
        if l > 0.0 {
            acc -= l * l.log2();
        }
    }
    acc
}

/// The two message encodings: identity for bit 0 and, for bit 1, the unitary
/// with columns `(0, -1)` and `(1, 0)` that flips the encoded bit in both
/// measuring bases. The sign it imprints is a global phase and never affects
/// measurement statistics at the density-matrix level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncodingOp {
    Identity,
    Flip,
}

impl EncodingOp {
    pub fn for_bit(bit: bool) -> Self {
        if bit {
            EncodingOp::Flip
        } else {
            EncodingOp::Identity
        }
    }

    pub fn bit(self) -> bool {
        matches!(self, EncodingOp::Flip)
    }

    pub fn matrix(self) -> Mat2 {
        match self {
            EncodingOp::Identity => Mat2::identity(),
            EncodingOp::Flip => Mat2::from_real([[0.0, 1.0], [-1.0, 0.0]]),
        }
    }

    /// Conjugates the state by the operation matrix: `M rho M†`.
    pub fn apply(self, state: &QubitState) -> QubitState {
        match self {
            EncodingOp::Identity => *state,
            EncodingOp::Flip => {
                let m = self.matrix();
                QubitState::from_trusted(m * *state.matrix() * m.adjoint())
            }
        }
    }
}

impl fmt::Display for EncodingOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodingOp::Identity => write!(f, "I"),
            EncodingOp::Flip => write!(f, "U"),
        }
    }
}

impl std::str::FromStr for EncodingOp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "I" => Ok(EncodingOp::Identity),
            "U" => Ok(EncodingOp::Flip),
            other => Err(Error::Config {
                field: "op".into(),
                reason: format!("expected 'I' or 'U', got '{other}'"),
            }),
        }
    }
}

/// A finite ensemble of states with preparation probabilities.
///
/// ```
/// use qotp::qstate::{Basis, Ensemble, QubitState};
///
/// let four = Ensemble::new(vec![
///     (0.25, QubitState::prepare(Basis::Plus, false)),
///     (0.25, QubitState::prepare(Basis::Plus, true)),
///     (0.25, QubitState::prepare(Basis::Cross, false)),
///     (0.25, QubitState::prepare(Basis::Cross, true)),
/// ])?;
/// assert_eq!(four.source_entropy(), 2.0);
/// assert_eq!(four.holevo_bound(), 1.0); // an eavesdropper learns at most half
/// # Ok::<(), qotp::Error>(())
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    entries: Vec<(f64, QubitState)>,
}

impl Ensemble {
    /// Validates that probabilities lie in `[0, 1]` and sum to 1 within
    /// `STATE_TOL`.
    pub fn new(entries: Vec<(f64, QubitState)>) -> Result<Self, Error> {
        if entries.is_empty() {
            return Err(Error::InvalidEnsemble("empty ensemble".into()));
        }
        let mut total = 0.0;
        for (p, _) in &entries {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidEnsemble(format!("probability {p} outside [0,1]")));
            }
            total += p;
        }
        if (total - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidEnsemble(format!("probabilities sum to {total}")));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(f64, QubitState)] {
        &self.entries
    }

    /// The mixed state `sum P_x rho_x`.
    pub fn mixture(&self) -> Mat2 {
        let mut acc = Mat2::zeros();
        for (p, state) in &self.entries {
            acc = acc + state.matrix().scale(*p);
        }
        acc
    }

    /// Holevo quantity `S(sum P_x rho_x) - sum P_x S(rho_x)` in bits: the
    /// ceiling on the mutual information any receiver can extract about which
    /// member was prepared.
    pub fn holevo_bound(&self) -> f64 {
        let mixture_entropy = spectrum_entropy_bits(&self.mixture());
        let mean_member_entropy: f64 =
            self.entries.iter().map(|(p, state)| p * state.von_neumann_entropy()).sum();
        mixture_entropy - mean_member_entropy
    }

    /// Shannon entropy of the preparation distribution, `-sum P_x log2 P_x`.
    pub fn source_entropy(&self) -> f64 {
        self.entries.iter().map(|(p, _)| if *p > 0.0 { -p * p.log2() } else { 0.0 }).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent eigenvalue oracle: quadratic formula on trace and
    /// determinant computed straight from the raw entries.
    fn oracle_eigenvalues(m: &Mat2) -> [f64; 2] {
        let t = m.trace().re;
        let d = m.det().re;
        let disc = (t * t - 4.0 * d).max(0.0).sqrt();
        [(t - disc) / 2.0, (t + disc) / 2.0]
    }

    /// Independent scalar binary-entropy oracle.
    fn binary_entropy(x: f64) -> f64 {
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
        }
    }

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} != {b} within {tol}");
    }

    #[test]
    fn prepare_plus_bit0_is_h_projector() {
        let h = QubitState::prepare(Basis::Plus, false);
        assert!(h.matrix().approx_eq(&Mat2::from_real([[1.0, 0.0], [0.0, 0.0]]), 0.0));
    }

    #[test]
    fn prepare_plus_bit1_is_v_projector() {
        let v = QubitState::prepare(Basis::Plus, true);
        assert!(v.matrix().approx_eq(&Mat2::from_real([[0.0, 0.0], [0.0, 1.0]]), 0.0));
    }

    #[test]
    fn prepare_cross_bit1_is_d_projector() {
        // Expected entries from the outer product of (1, -1)/sqrt(2).
        let d = QubitState::prepare(Basis::Cross, true);
        let expected = Mat2::from_real([[0.5, -0.5], [-0.5, 0.5]]);
        assert!(d.matrix().approx_eq(&expected, 1e-12));
        // The invariant checker accepts all four preparations.
        for basis in [Basis::Plus, Basis::Cross] {
            for bit in [false, true] {
                QubitState::from_matrix(*QubitState::prepare(basis, bit).matrix()).unwrap();
            }
        }
    }

    #[test]
    fn from_ket_drops_global_phase() {
        let theta = 0.7f64;
        let phase = Complex64::new(theta.cos(), theta.sin());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plain = QubitState::from_ket([Complex64::new(s, 0.0), Complex64::new(s, 0.0)]).unwrap();
        let rotated =
            QubitState::from_ket([phase * Complex64::new(s, 0.0), phase * Complex64::new(s, 0.0)])
                .unwrap();
        assert!(plain.matrix().approx_eq(rotated.matrix(), 1e-15));
    }

    #[test]
    fn from_matrix_rejects_invalid_inputs() {
        // Not Hermitian.
        let skew = Mat2::from_real([[0.5, 0.3], [0.1, 0.5]]);
        assert!(matches!(QubitState::from_matrix(skew), Err(Error::InvalidState(_))));
        // Trace 2.
        assert!(QubitState::from_matrix(Mat2::identity()).is_err());
        // Negative eigenvalue.
        let neg = Mat2::from_real([[1.2, 0.0], [0.0, -0.2]]);
        assert!(QubitState::from_matrix(neg).is_err());
    }

    #[test]
    fn born_probability_on_eigenstate_is_one() {
        let h = QubitState::prepare(Basis::Plus, false);
        assert_eq!(h.born_probability(Basis::Plus, false), 1.0);
        assert_eq!(h.born_probability(Basis::Plus, true), 0.0);
    }

    #[test]
    fn born_probability_of_u_in_plus_basis_is_half() {
        // |<0|u>|² by explicit inner product: (1/sqrt2)² = 1/2.
        let u = QubitState::prepare(Basis::Cross, false);
        approx(u.born_probability(Basis::Plus, false), 0.5, 1e-15);
    }

    #[test]
    fn born_probability_of_mixed_state_is_half() {
        let mixed = QubitState::maximally_mixed();
        approx(mixed.born_probability(Basis::Cross, true), 0.5, 1e-15);
    }

    #[test]
    fn measure_eigenstate_returns_same_state() {
        let d = QubitState::prepare(Basis::Cross, true);
        for r in [0.0, 0.3, 0.9999] {
            let (bit, collapsed) = d.measure(Basis::Cross, r);
            assert!(bit);
            assert_eq!(collapsed, d);
        }
    }

    #[test]
    fn measure_thresholds_on_bit0_probability() {
        let u = QubitState::prepare(Basis::Cross, false);
        let (bit, collapsed) = u.measure(Basis::Plus, 0.3);
        assert!(!bit);
        assert_eq!(collapsed, QubitState::prepare(Basis::Plus, false));
        let (bit, collapsed) = u.measure(Basis::Plus, 0.7);
        assert!(bit);
        assert_eq!(collapsed, QubitState::prepare(Basis::Plus, true));
    }

    #[test]
    fn flip_maps_h_to_v_and_u_to_d() {
        let flipped = EncodingOp::Flip.apply(&QubitState::prepare(Basis::Plus, false));
        assert!(flipped.matrix().approx_eq(QubitState::prepare(Basis::Plus, true).matrix(), 0.0));
        let flipped = EncodingOp::Flip.apply(&QubitState::prepare(Basis::Cross, false));
        assert!(flipped.matrix().approx_eq(QubitState::prepare(Basis::Cross, true).matrix(), 0.0));
    }

    #[test]
    fn identity_leaves_states_alone() {
        let s = QubitState::from_matrix(Mat2::from_real([[0.7, 0.1], [0.1, 0.3]])).unwrap();
        assert_eq!(EncodingOp::Identity.apply(&s), s);
    }

    #[test]
    fn flip_is_unitary_and_an_involution_on_states() {
        let m = EncodingOp::Flip.matrix();
        assert!((m.adjoint() * m).approx_eq(&Mat2::identity(), 0.0));
        let s = QubitState::from_matrix(Mat2::from_real([[0.6, -0.2], [-0.2, 0.4]])).unwrap();
        let twice = EncodingOp::Flip.apply(&EncodingOp::Flip.apply(&s));
        assert!(twice.matrix().approx_eq(s.matrix(), 1e-15));
    }

    #[test]
    fn entropy_of_pure_state_is_zero() {
        assert_eq!(QubitState::prepare(Basis::Plus, false).von_neumann_entropy(), 0.0);
        assert_eq!(QubitState::prepare(Basis::Cross, true).von_neumann_entropy(), 0.0);
    }

    #[test]
    fn entropy_of_maximally_mixed_is_one() {
        // Eigenvalues {0.5, 0.5}: -2 * 0.5 * log2(0.5) = 1.
        assert_eq!(QubitState::maximally_mixed().von_neumann_entropy(), 1.0);
    }

    #[test]
    fn entropy_matches_scalar_oracle() {
        let s = QubitState::from_matrix(Mat2::from_real([[0.75, 0.0], [0.0, 0.25]])).unwrap();
        let expected = binary_entropy(0.25);
        approx(s.von_neumann_entropy(), expected, 1e-12);
        approx(expected, 0.811278, 1e-6);
    }

    #[test]
    fn entropy_equals_binary_entropy_of_smaller_eigenvalue() {
        let s = QubitState::from_matrix(Mat2::from_real([[0.9, 0.05], [0.05, 0.1]])).unwrap();
        let [lo, _] = oracle_eigenvalues(s.matrix());
        approx(s.von_neumann_entropy(), binary_entropy(lo), 1e-12);
    }

    #[test]
    fn holevo_of_four_symmetric_states_is_one() {
        let quarter = 0.25;
        let ensemble = Ensemble::new(vec![
            (quarter, QubitState::prepare(Basis::Plus, false)),
            (quarter, QubitState::prepare(Basis::Plus, true)),
            (quarter, QubitState::prepare(Basis::Cross, false)),
            (quarter, QubitState::prepare(Basis::Cross, true)),
        ])
        .unwrap();
        // Oracle: the mixture is exactly I/2 (eigenvalues {1/2, 1/2} by the
        // quadratic formula) and every member is pure.
        let eigs = oracle_eigenvalues(&ensemble.mixture());
        approx(eigs[0], 0.5, 1e-15);
        approx(eigs[1], 0.5, 1e-15);
        assert_eq!(ensemble.holevo_bound(), 1.0);
        assert_eq!(ensemble.source_entropy(), 2.0);
    }

    #[test]
    fn holevo_of_singleton_is_zero() {
        let ensemble =
            Ensemble::new(vec![(1.0, QubitState::prepare(Basis::Cross, false))]).unwrap();
        assert_eq!(ensemble.holevo_bound(), 0.0);
        assert_eq!(ensemble.source_entropy(), 0.0);
    }

    #[test]
    fn holevo_of_orthogonal_pair_is_one() {
        let ensemble = Ensemble::new(vec![
            (0.5, QubitState::prepare(Basis::Plus, false)),
            (0.5, QubitState::prepare(Basis::Plus, true)),
        ])
        .unwrap();
        assert_eq!(ensemble.holevo_bound(), 1.0);
        assert_eq!(ensemble.source_entropy(), 1.0);
    }

    #[test]
    fn ensemble_rejects_bad_probabilities() {
        let h = QubitState::prepare(Basis::Plus, false);
        assert!(Ensemble::new(vec![(0.7, h), (0.7, h)]).is_err());
        assert!(Ensemble::new(vec![(-0.1, h), (1.1, h)]).is_err());
        assert!(Ensemble::new(vec![]).is_err());
    }
}
