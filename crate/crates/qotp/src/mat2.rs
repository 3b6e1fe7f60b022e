//! Minimal 2x2 complex matrix arithmetic for single-qubit density operators.
//!
//! Everything the simulator needs fits in closed form at this dimension:
//! Hermitian eigenvalues come from the quadratic formula and positive
//! square roots from the spectral decomposition, so no linear-algebra
//! dependency is pulled in.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

/// A dense 2x2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    entries: [[Complex64; 2]; 2],
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl Mat2 {
    pub fn new(entries: [[Complex64; 2]; 2]) -> Self {
        Self { entries }
    }

    /// Builds a matrix from real entries.
    pub fn from_real(rows: [[f64; 2]; 2]) -> Self {
        Self::new([
            [Complex64::new(rows[0][0], 0.0), Complex64::new(rows[0][1], 0.0)],
            [Complex64::new(rows[1][0], 0.0), Complex64::new(rows[1][1], 0.0)],
        ])
    }

    pub fn zeros() -> Self {
        Self::new([[ZERO, ZERO], [ZERO, ZERO]])
    }

    pub fn identity() -> Self {
        Self::new([[ONE, ZERO], [ZERO, ONE]])
    }

    /// Outer product `v v†` of a two-component column vector.
    pub fn outer(v: [Complex64; 2]) -> Self {
        Self::new([
            [v[0] * v[0].conj(), v[0] * v[1].conj()],
            [v[1] * v[0].conj(), v[1] * v[1].conj()],
        ])
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row][col]
    }

    pub fn trace(&self) -> Complex64 {
        self.entries[0][0] + self.entries[1][1]
    }

    /// Determinant; real for Hermitian input up to rounding.
    pub fn det(&self) -> Complex64 {
        self.entries[0][0] * self.entries[1][1] - self.entries[0][1] * self.entries[1][0]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::new([
            [self.entries[0][0].conj(), self.entries[1][0].conj()],
            [self.entries[0][1].conj(), self.entries[1][1].conj()],
        ])
    }

    pub fn scale(&self, s: f64) -> Self {
        let s = Complex64::new(s, 0.0);
        Self::new([
            [self.entries[0][0] * s, self.entries[0][1] * s],
            [self.entries[1][0] * s, self.entries[1][1] * s],
        ])
    }

    /// Largest absolute entrywise difference, used for tolerance comparisons.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((self.entries[r][c] - other.entries[r][c]).norm());
            }
        }
        worst
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    ///
    /// Uses the closed form `(a+d)/2 ± sqrt(((a-d)/2)² + |b|²)`, whose
    /// discriminant is nonnegative by construction.
    pub fn herm_eigenvalues(&self) -> [f64; 2] {
        let a = self.entries[0][0].re;
        let d = self.entries[1][1].re;
        let half_diff = 0.5 * (a - d);
        let radius = (half_diff * half_diff + self.entries[0][1].norm_sqr()).sqrt();
        let mid = 0.5 * (a + d);
        [mid - radius, mid + radius]
    }

    /// Positive square root of a positive semidefinite Hermitian matrix.
    ///
    /// Eigenvalues within rounding of zero are clamped to zero before the
    /// scalar square root is taken.
    pub fn sqrt_psd(&self) -> Self {
        let b = self.entries[0][1];
        if b.norm() < 1e-15 {
            let s0 = self.entries[0][0].re.max(0.0).sqrt();
            let s1 = self.entries[1][1].re.max(0.0).sqrt();
            return Self::from_real([[s0, 0.0], [0.0, s1]]);
        }
        let [lo, hi] = self.herm_eigenvalues();
        let a = self.entries[0][0];
        // Eigenvector for eigenvalue l is (b, l - a), nonzero because b != 0.
        let mut result = Self::zeros();
        for (l, s) in [(lo, lo.max(0.0).sqrt()), (hi, hi.max(0.0).sqrt())] {
            let v = [b, Complex64::new(l, 0.0) - a];
            let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            let v = [v[0] / norm, v[1] / norm];
            result = result + Self::outer(v).scale(s);
        }
        result
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    #[allow(clippy::needless_range_loop)]
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = [[ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = self.entries[r][c] + rhs.entries[r][c];
            }
        }
        Mat2::new(out)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    #[allow(clippy::needless_range_loop)]
    fn sub(self, rhs: Mat2) -> Mat2 {
        let mut out = [[ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = self.entries[r][c] - rhs.entries[r][c];
            }
        }
        Mat2::new(out)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[allow(clippy::needless_range_loop)]
    fn mul(self, rhs: Mat2) -> Mat2 {
        let mut out = [[ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] =
                    self.entries[r][0] * rhs.entries[0][c] + self.entries[r][1] * rhs.entries[1][c];
            }
        }
        Mat2::new(out)
    }
}
