//! Propagators of Hermitian generators via eigendecomposition.

use std::f64::consts::TAU;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::model::CMatrix;

/// Eigendecomposition of a Hermitian Hamiltonian (MHz), reusable for any duration.
#[derive(Debug, Clone)]
pub struct EigenHamiltonian {
    values: Vec<f64>,
    vectors: CMatrix,
}

impl EigenHamiltonian {
    pub fn new(h: &CMatrix) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    /// `exp(-i 2π H t)` for `t` in µs.
    pub fn propagator(&self, t_us: f64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &e) in self.values.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -TAU * e * t_us);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= phase;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// `exp(-i 2π H t)`.
pub fn unitary(h: &CMatrix, t_us: f64) -> CMatrix {
    if t_us == 0.0 {
        return CMatrix::identity(h.nrows(), h.ncols());
    }
    EigenHamiltonian::new(h).propagator(t_us)
}

/// `u^n` by binary powering.
pub fn matrix_power(u: &CMatrix, mut n: u64) -> CMatrix {
    let mut result = CMatrix::identity(u.nrows(), u.ncols());
    let mut base = u.clone();
    let mut first = true;
    while n > 0 {
        if n & 1 == 1 {
            result = if first { base.clone() } else { &base * &result };
            first = false;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `max |U†U - 1|` elementwise.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    let p = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{max_abs, pauli_x};

    #[test]
    fn power_matches_repeated_product() {
        let h = pauli_x() * Complex64::new(0.3, 0.0);
        let u = unitary(&h, 0.17);
        let mut direct = CMatrix::identity(2, 2);
        for _ in 0..13 {
            direct = &u * &direct;
        }
        assert!(max_abs(&(matrix_power(&u, 13) - direct)) < 1e-13);
        assert!(max_abs(&(matrix_power(&u, 0) - CMatrix::identity(2, 2))) == 0.0);
    }

    #[test]
    fn rabi_flip_closed_form() {
        // (Ω/2)σx with Ω = 1 MHz: U(t) = cos(πΩt) - i sin(πΩt) σx
        let h = pauli_x() * Complex64::new(0.5, 0.0);
        let u = unitary(&h, 0.2);
        let (s, c) = (std::f64::consts::PI * 0.2).sin_cos();
        assert!((u[(0, 0)] - Complex64::new(c, 0.0)).norm() < 1e-14);
        assert!((u[(1, 0)] - Complex64::new(0.0, -s)).norm() < 1e-14);
    }
}
