use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    /// Position of this Pauli in the coordinate vector.
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        ['I', 'X', 'Y', 'Z'][self.index()]
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Single-qubit Hermitian operator `a_I I + a_X X + a_Y Y + a_Z Z`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct HermitianOp<T> {
    coeffs: [T; 4],
}

impl<T: Real> HermitianOp<T> {
    pub fn new(coeffs: [T; 4]) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self::new([T::zero(); 4])
    }

    pub fn identity() -> Self {
        Self::pauli(Pauli::I)
    }

    pub fn pauli(p: Pauli) -> Self {
        let mut c = [T::zero(); 4];
        c[p.index()] = T::one();
        Self::new(c)
    }

    #[inline]
    pub fn coeffs(&self) -> &[T; 4] {
        &self.coeffs
    }

    #[inline]
    pub fn coeff(&self, p: Pauli) -> T {
        self.coeffs[p.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    #[inline]
    pub fn trace(&self) -> T {
        T::lit(2.0) * self.coeffs[0]
    }

    /// `Tr[self * other]`.
    #[inline]
    pub fn trace_with(&self, other: &Self) -> T {
        let dot: T = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| a * b)
            .sum();
        T::lit(2.0) * dot
    }

    /// `Tr[P * self]` for a single Pauli `P`.
    #[inline]
    pub fn trace_pauli(&self, p: Pauli) -> T {
        T::lit(2.0) * self.coeffs[p.index()]
    }

    /// Eigenvalues `a_I -/+ |(a_X, a_Y, a_Z)|`, ascending.
    pub fn eigenvalues(&self) -> [T; 2] {
        let [a, x, y, z] = self.coeffs;
        let r = (x * x + y * y + z * z).sqrt();
        [a - r, a + r]
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.coeffs.map(|c| c * s))
    }

    /// Largest coordinate difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

impl<T: Real> Add for HermitianOp<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut c = self.coeffs;
        for (a, b) in c.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
        Self::new(c)
    }
}

impl<T: Real> Sub for HermitianOp<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<T: Real> Neg for HermitianOp<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(self.coeffs.map(|c| -c))
    }
}

impl<T: Real> Mul<T> for HermitianOp<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M2 = [[C; 2]; 2];

    fn dense(op: &HermitianOp<f64>) -> M2 {
        let [a, x, y, z] = *op.coeffs();
        [
            [C::new(a + z, 0.0), C::new(x, -y)],
            [C::new(x, y), C::new(a - z, 0.0)],
        ]
    }

    fn dense_trace_product(a: &M2, b: &M2) -> C {
        let mut t = C::new(0.0, 0.0);
        for i in 0..2 {
            for k in 0..2 {
                t += a[i][k] * b[k][i];
            }
        }
        t
    }

    #[test]
    fn trace_identity_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a = HermitianOp::new([(); 4].map(|_| rng.gen_range(-3.0..3.0)));
            let b = HermitianOp::new([(); 4].map(|_| rng.gen_range(-3.0..3.0)));
            let oracle = dense_trace_product(&dense(&a), &dense(&b));
            assert!(oracle.im.abs() < 1e-12);
            assert!((a.trace_with(&b) - oracle.re).abs() < 1e-12);
            let d = dense(&a);
            assert!((a.trace() - (d[0][0] + d[1][1]).re).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalues_of_projector() {
        let p0 = HermitianOp::new([0.5, 0.0, 0.0, 0.5]);
        assert_eq!(p0.eigenvalues(), [0.0, 1.0]);
    }

    #[test]
    fn pauli_chars_round_trip() {
        for p in Pauli::ALL {
            assert_eq!(Pauli::from_char(p.as_char()), Some(p));
        }
        assert_eq!(Pauli::from_char('q'), None);
    }
}
