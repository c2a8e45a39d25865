//! Structure predicates on dense 2n x 2n matrices.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::matrix::{ComplexDense, ZERO};
use crate::pimatrix::{PiMatrix, PiSign};
use crate::signature::Signature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StructureClaim {
    PiPlus,
    PiMinus,
    PiMinusHermitian,
    PiPlusHermitian,
    GammaUnitary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub holds: bool,
    pub deviation: f64,
}

/// Max-norm deviation of `m` from the block pattern of the given sign.
fn pi_deviation(m: &ComplexDense, sign: PiSign) -> f64 {
    let (n, k) = (m.rows() / 2, m.cols() / 2);
    let p = PiMatrix { sign, g1: m.block(0, n, 0, k), g2: m.block(0, n, k, 2 * k) };
    p.to_dense().sub(m).norm_max()
}

/// Max-norm deviation of S M from Hermitian.
fn metric_hermitian_deviation(m: &ComplexDense, s: &Signature) -> f64 {
    let k = m.rows();
    let mut dev: f64 = 0.0;
    for j in 0..k {
        for i in 0..=j {
            let a = s.full(i) * m[(i, j)];
            let b = s.full(j) * m[(j, i)];
            dev = dev.max((a - b.conj()).norm());
        }
    }
    dev
}

/// Deviation of M^H S M from the nearest signature diag(J, -J), with J read
/// off the signs of the leading diagonal.
fn gamma_unitary_deviation(m: &ComplexDense, s: &Signature) -> f64 {
    let k = m.cols();
    let h = k / 2;
    let mut sm = m.clone();
    for j in 0..k {
        for (i, z) in sm.col_mut(j).iter_mut().enumerate() {
            *z *= s.full(i);
        }
    }
    let p = m.adjoint().matmul(&sm);
    let mut dev: f64 = 0.0;
    for j in 0..k {
        for i in 0..k {
            let target = if i == j {
                let lead = if i < h { p[(i, i)].re } else { p[(i - h, i - h)].re };
                let sgn = if lead >= 0.0 { 1.0 } else { -1.0 };
                C64::new(if i < h { sgn } else { -sgn }, 0.0)
            } else {
                ZERO
            };
            dev = dev.max((p[(i, j)] - target).norm());
        }
    }
    dev
}

/// Checks a structural claim about `m` relative to the metric `s`.
///
/// A non-square or odd-order matrix, or a metric of the wrong size, is
/// reported as not holding with infinite deviation.
pub fn check_structure(m: &ComplexDense, claim: StructureClaim, s: &Signature, tol: f64) -> StructureReport {
    if !m.rows().is_multiple_of(2) || !m.cols().is_multiple_of(2) {
        return StructureReport { holds: false, deviation: f64::INFINITY };
    }
    let needs_square = !matches!(claim, StructureClaim::PiPlus | StructureClaim::PiMinus);
    if needs_square && (!m.is_square() || s.m() * 2 != m.rows()) {
        return StructureReport { holds: false, deviation: f64::INFINITY };
    }
    let deviation = match claim {
        StructureClaim::PiPlus => pi_deviation(m, PiSign::Plus),
        StructureClaim::PiMinus => pi_deviation(m, PiSign::Minus),
        StructureClaim::PiPlusHermitian => pi_deviation(m, PiSign::Plus).max(metric_hermitian_deviation(m, s)),
        StructureClaim::PiMinusHermitian => pi_deviation(m, PiSign::Minus).max(metric_hermitian_deviation(m, s)),
        StructureClaim::GammaUnitary => gamma_unitary_deviation(m, s),
    };
    StructureReport { holds: deviation <= tol * m.norm_max().max(1.0), deviation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{assemble_hamiltonian, expand_dense};

    fn sample_h() -> ComplexDense {
        let a = ComplexDense::from_rows(&[
            vec![C64::new(1.0, 0.0), C64::new(0.5, -0.25)],
            vec![C64::new(0.5, 0.25), C64::new(-2.0, 0.0)],
        ])
        .unwrap();
        let b = ComplexDense::from_rows(&[
            vec![C64::new(0.3, 0.1), C64::new(0.0, 1.0)],
            vec![C64::new(0.0, 1.0), C64::new(0.7, -0.2)],
        ])
        .unwrap();
        expand_dense(&assemble_hamiltonian(&a, &b, 1e-12).unwrap()).unwrap()
    }

    #[test]
    fn hamiltonian_is_pi_minus_hermitian() {
        let h = sample_h();
        let r = check_structure(&h, StructureClaim::PiMinusHermitian, &Signature::standard(2), 1e-14);
        assert!(r.holds);
        assert_eq!(r.deviation, 0.0);
        assert!(!check_structure(&h, StructureClaim::PiPlus, &Signature::standard(2), 1e-14).holds);
    }

    #[test]
    fn square_is_pi_plus_hermitian() {
        let h = sample_h();
        let h2 = h.matmul(&h);
        assert!(check_structure(&h2, StructureClaim::PiPlusHermitian, &Signature::standard(2), 1e-13).holds);
        let h4 = h2.matmul(&h2);
        assert!(check_structure(&h4, StructureClaim::PiPlusHermitian, &Signature::standard(2), 1e-13).holds);
    }

    #[test]
    fn identity_is_gamma_unitary() {
        let r = check_structure(&ComplexDense::identity(4), StructureClaim::GammaUnitary, &Signature::standard(2), 0.0);
        assert!(r.holds);
    }

    #[test]
    fn swap_of_halves_changes_signature_but_stays_gamma_unitary() {
        // exchanging e1 and e3 maps the metric diag(1,1,-1,-1) to diag(-1,1,1,-1)
        let mut p = ComplexDense::zeros(4, 4);
        p[(2, 0)] = C64::new(1.0, 0.0);
        p[(0, 2)] = C64::new(1.0, 0.0);
        p[(1, 1)] = C64::new(1.0, 0.0);
        p[(3, 3)] = C64::new(1.0, 0.0);
        assert!(check_structure(&p, StructureClaim::GammaUnitary, &Signature::standard(2), 1e-14).holds);
    }
}
