//! Small helpers for 2x2 complex operators.
//!
//! Operators are stored as `nalgebra::Matrix2<Complex64>` in the (up, down)
//! basis where `sigma_z = diag(1, -1)`.

use nalgebra::Matrix2;
use num_complex::Complex64;

/// A 2x2 complex operator.
pub type Op2 = Matrix2<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Real scalar as a complex number.
pub fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn identity() -> Op2 {
    Op2::new(ONE, ZERO, ZERO, ONE)
}

pub fn zero() -> Op2 {
    Op2::zeros()
}

pub fn sigma_x() -> Op2 {
    Op2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Op2 {
    Op2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Op2 {
    Op2::new(ONE, ZERO, ZERO, -ONE)
}

/// Real-linear combination `a*I + x*sx + y*sy + z*sz`.
pub fn from_bloch(a: f64, x: f64, y: f64, z: f64) -> Op2 {
    Op2::new(
        Complex64::new(a + z, 0.0),
        Complex64::new(x, -y),
        Complex64::new(x, y),
        Complex64::new(a - z, 0.0),
    )
}

pub fn commutator(a: &Op2, b: &Op2) -> Op2 {
    a * b - b * a
}

pub fn trace(a: &Op2) -> Complex64 {
    a[(0, 0)] + a[(1, 1)]
}

/// `tr(a b)` without forming the product.
pub fn trace_product(a: &Op2, b: &Op2) -> Complex64 {
    a[(0, 0)] * b[(0, 0)] + a[(0, 1)] * b[(1, 0)] + a[(1, 0)] * b[(0, 1)] + a[(1, 1)] * b[(1, 1)]
}

/// Largest absolute entry.
pub fn max_abs(a: &Op2) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

/// Largest entry of `a - a^dagger`.
pub fn hermiticity_error(a: &Op2) -> f64 {
    max_abs(&(a - a.adjoint()))
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &Op2) -> [f64; 2] {
    let p = a[(0, 0)].re;
    let q = a[(1, 1)].re;
    let off = (a[(0, 1)] + a[(1, 0)].conj()) * 0.5;
    let mean = 0.5 * (p + q);
    let half = (0.25 * (p - q) * (p - q) + off.norm_sqr()).sqrt();
    [mean - half, mean + half]
}

/// Whether any entry is NaN or infinite.
pub fn is_finite(a: &Op2) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_algebra() {
        let xy = sigma_x() * sigma_y();
        assert!(max_abs(&(xy - sigma_z() * I)) < 1e-15);
        assert!(max_abs(&(sigma_x() * sigma_x() - identity())) < 1e-15);
    }

    #[test]
    fn bloch_roundtrip() {
        let m = from_bloch(0.5, 0.1, -0.2, 0.3);
        let expect = identity() * re(0.5) + sigma_x() * re(0.1) - sigma_y() * re(0.2) + sigma_z() * re(0.3);
        assert!(max_abs(&(m - expect)) < 1e-15);
    }

    #[test]
    fn eigenvalues_of_pure_state() {
        let rho = from_bloch(0.5, 0.5, 0.0, 0.0);
        let ev = hermitian_eigenvalues(&rho);
        assert!(ev[0].abs() < 1e-15 && (ev[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trace_product_matches_product() {
        let a = from_bloch(0.3, 0.2, 0.7, -0.1);
        let b = sigma_y() + sigma_z() * re(2.0);
        assert!((trace_product(&a, &b) - trace(&(a * b))).norm() < 1e-15);
    }
}
