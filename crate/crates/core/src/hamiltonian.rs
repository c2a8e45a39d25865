//! The Bethe-Salpeter Hamiltonian H = [[A, B], [-conj(B), -conj(A)]] as an
//! implicit operator.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{BsepError, Result};
use crate::matrix::ComplexDense;

/// Default cap on the half-dimension for dense expansion.
pub const DENSE_CAP: usize = 4096;

/// Deviations removed by symmetrization at assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizationReport {
    /// max |A - A^H| before projection
    pub a_deviation: f64,
    /// max |B - B^T| before projection
    pub b_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsepHamiltonian {
    n: usize,
    a: ComplexDense,
    b: ComplexDense,
    report: SymmetrizationReport,
}

/// Validates and symmetrizes A (Hermitian) and B (complex symmetric).
pub fn assemble_hamiltonian(a: &ComplexDense, b: &ComplexDense, tol: f64) -> Result<BsepHamiltonian> {
    if !a.is_square() {
        return Err(BsepError::DimensionMismatch { expected: a.rows(), found: a.cols() });
    }
    if !b.is_square() {
        return Err(BsepError::DimensionMismatch { expected: b.rows(), found: b.cols() });
    }
    if a.rows() != b.rows() {
        return Err(BsepError::DimensionMismatch { expected: a.rows(), found: b.rows() });
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(BsepError::NonFinite);
    }
    let n = a.rows();
    let ah = a.adjoint();
    let bt = b.transpose();
    let a_dev = a.sub(&ah).norm_max();
    let b_dev = b.sub(&bt).norm_max();
    if a_dev > tol * a.norm_max().max(1.0) {
        return Err(BsepError::StructureViolation { what: "A is not Hermitian", deviation: a_dev });
    }
    if b_dev > tol * b.norm_max().max(1.0) {
        return Err(BsepError::StructureViolation { what: "B is not symmetric", deviation: b_dev });
    }
    let mut a_sym = a.add(&ah).scale(C64::new(0.5, 0.0));
    for i in 0..n {
        a_sym[(i, i)].im = 0.0;
    }
    let b_sym = b.add(&bt).scale(C64::new(0.5, 0.0));
    Ok(BsepHamiltonian {
        n,
        a: a_sym,
        b: b_sym,
        report: SymmetrizationReport { a_deviation: a_dev, b_deviation: b_dev },
    })
}

impl BsepHamiltonian {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &ComplexDense {
        &self.a
    }

    pub fn b(&self) -> &ComplexDense {
        &self.b
    }

    pub fn report(&self) -> SymmetrizationReport {
        self.report
    }

    /// y = H x; panics on length mismatch (see `apply_hamiltonian`).
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n;
        assert_eq!(x.len(), 2 * n);
        let (x1, x2) = x.split_at(n);
        let mut y = self.a.matvec(x1);
        let t = self.b.matvec(x2);
        for (yi, ti) in y.iter_mut().zip(&t) {
            *yi += ti;
        }
        // -conj(B) x1 - conj(A) x2 = -conj(B conj(x1) + A conj(x2))
        let x1c: Vec<C64> = x1.iter().map(|z| z.conj()).collect();
        let x2c: Vec<C64> = x2.iter().map(|z| z.conj()).collect();
        let u = self.b.matvec(&x1c);
        let w = self.a.matvec(&x2c);
        y.extend(u.iter().zip(&w).map(|(p, q)| -(p + q).conj()));
        y
    }

    /// Exact ||H||_1 from the blocks: every column of H has the sum
    /// |A(:,j)|_1 + |B(:,j)|_1.
    pub fn norm_one(&self) -> f64 {
        (0..self.n)
            .map(|j| crate::matrix::norm1(self.a.col(j)) + crate::matrix::norm1(self.b.col(j)))
            .fold(0.0, f64::max)
    }

    pub fn expand_dense_capped(&self, cap: usize) -> Result<ComplexDense> {
        if self.n > cap {
            return Err(BsepError::SizeLimitExceeded { n: self.n, cap });
        }
        let n = self.n;
        let mut h = ComplexDense::zeros(2 * n, 2 * n);
        h.set_block(0, 0, &self.a);
        h.set_block(0, n, &self.b);
        h.set_block(n, 0, &self.b.conj().scale(C64::new(-1.0, 0.0)));
        h.set_block(n, n, &self.a.conj().scale(C64::new(-1.0, 0.0)));
        Ok(h)
    }
}

pub fn apply_hamiltonian(h: &BsepHamiltonian, x: &[C64]) -> Result<Vec<C64>> {
    if x.len() != 2 * h.n() {
        return Err(BsepError::DimensionMismatch { expected: 2 * h.n(), found: x.len() });
    }
    Ok(h.apply(x))
}

/// Dense 2n x 2n expansion with the default size cap.
pub fn expand_dense(h: &BsepHamiltonian) -> Result<ComplexDense> {
    h.expand_dense_capped(DENSE_CAP)
}

/// The map x -> Pi conj(x) = [conj(x2); conj(x1)].
pub fn pi_conjugate(x: &[C64]) -> Result<Vec<C64>> {
    if !x.len().is_multiple_of(2) {
        return Err(BsepError::OddLength(x.len()));
    }
    Ok(pi_conj(x))
}

pub(crate) fn pi_conj(x: &[C64]) -> Vec<C64> {
    let n = x.len() / 2;
    x[n..].iter().chain(&x[..n]).map(|z| z.conj()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{ONE, ZERO};

    fn scalar(z: C64) -> ComplexDense {
        ComplexDense::from_rows(&[vec![z]]).unwrap()
    }

    #[test]
    fn apply_examples() {
        let i = C64::i();
        let h = assemble_hamiltonian(&scalar(C64::new(2.0, 0.0)), &scalar(ZERO), 1e-12).unwrap();
        assert_eq!(h.apply(&[ONE, ZERO]), vec![C64::new(2.0, 0.0), ZERO]);
        let h = assemble_hamiltonian(&scalar(ZERO), &scalar(ONE), 1e-12).unwrap();
        assert_eq!(h.apply(&[ONE, ONE]), vec![ONE, -ONE]);
        let h = assemble_hamiltonian(&scalar(C64::new(2.0, 0.0)), &scalar(i), 1e-12).unwrap();
        assert_eq!(h.apply(&[ONE, ONE]), vec![C64::new(2.0, 1.0), C64::new(-2.0, 1.0)]);
    }

    #[test]
    fn expand_examples() {
        let h = assemble_hamiltonian(&scalar(C64::new(2.0, 0.0)), &scalar(C64::i()), 1e-12).unwrap();
        let d = expand_dense(&h).unwrap();
        let want = ComplexDense::from_rows(&[
            vec![C64::new(2.0, 0.0), C64::i()],
            vec![C64::i(), C64::new(-2.0, 0.0)],
        ])
        .unwrap();
        assert_eq!(d, want);
        assert!(matches!(h.expand_dense_capped(0), Err(BsepError::SizeLimitExceeded { .. })));
    }

    #[test]
    fn assembly_rejects_bad_input() {
        let a = ComplexDense::from_real_rows(&[&[0.0, 1.0], &[2.0, 0.0]]).unwrap();
        let b = ComplexDense::zeros(2, 2);
        assert!(matches!(assemble_hamiltonian(&a, &b, 1e-12), Err(BsepError::StructureViolation { .. })));
        let b3 = ComplexDense::zeros(3, 3);
        assert!(matches!(
            assemble_hamiltonian(&ComplexDense::identity(2), &b3, 1e-12),
            Err(BsepError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn assembly_accepts_symmetric_pair() {
        let a = ComplexDense::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let i = C64::i();
        let b = ComplexDense::from_rows(&[vec![ZERO, i], vec![i, ZERO]]).unwrap();
        let h = assemble_hamiltonian(&a, &b, 1e-12).unwrap();
        assert_eq!(h.n(), 2);
        assert_eq!(h.report().a_deviation, 0.0);
    }

    #[test]
    fn pi_conjugate_examples() {
        let i = C64::i();
        let x = vec![ONE, 2.0 * i, C64::new(3.0, 0.0), C64::new(4.0, 0.0)];
        let y = pi_conjugate(&x).unwrap();
        assert_eq!(y, vec![C64::new(3.0, 0.0), C64::new(4.0, 0.0), ONE, -2.0 * i]);
        assert_eq!(pi_conjugate(&y).unwrap(), x);
        assert_eq!(pi_conjugate(&[ONE; 3]), Err(BsepError::OddLength(3)));
    }
}
