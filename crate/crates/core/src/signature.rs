//! Indefinite metrics of the form diag(J, -J).

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{BsepError, Result};
use crate::matrix::{ComplexDense, ZERO};

/// Diagonal signature diag(j_1..j_m, -j_1..-j_m) with every j_i = +1 or -1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    j: Vec<i8>,
}

impl Signature {
    pub fn new(j: Vec<i8>) -> Result<Self> {
        if j.iter().any(|&s| s != 1 && s != -1) {
            return Err(BsepError::StructureViolation { what: "signature entries must be +1 or -1", deviation: 1.0 });
        }
        Ok(Signature { j })
    }

    /// The standard metric diag(I, -I).
    pub fn standard(m: usize) -> Self {
        Signature { j: vec![1; m] }
    }

    /// Half-dimension m.
    pub fn m(&self) -> usize {
        self.j.len()
    }

    pub fn j(&self) -> &[i8] {
        &self.j
    }

    /// Half-index sign j_i as a float.
    #[inline]
    pub fn half(&self, i: usize) -> f64 {
        self.j[i] as f64
    }

    /// Diagonal entry i of the full 2m x 2m metric.
    #[inline]
    pub fn full(&self, i: usize) -> f64 {
        let m = self.m();
        if i < m {
            self.j[i] as f64
        } else {
            -(self.j[i - m] as f64)
        }
    }

    pub fn flip(&mut self, i: usize) {
        self.j[i] = -self.j[i];
    }

    pub fn swap(&mut self, a: usize, b: usize) {
        self.j.swap(a, b);
    }

    pub fn to_dense(&self) -> ComplexDense {
        let m = self.m();
        let mut d = ComplexDense::zeros(2 * m, 2 * m);
        for i in 0..2 * m {
            d[(i, i)] = C64::new(self.full(i), 0.0);
        }
        d
    }
}

/// x^H diag(j, -j) y.
pub fn gamma_inner(s: &Signature, x: &[C64], y: &[C64]) -> Result<C64> {
    let len = 2 * s.m();
    if x.len() != len {
        return Err(BsepError::DimensionMismatch { expected: len, found: x.len() });
    }
    if y.len() != len {
        return Err(BsepError::DimensionMismatch { expected: len, found: y.len() });
    }
    Ok(gamma_inner_unchecked(s, x, y))
}

pub(crate) fn gamma_inner_unchecked(s: &Signature, x: &[C64], y: &[C64]) -> C64 {
    let m = s.m();
    let mut acc = ZERO;
    for i in 0..m {
        acc += s.half(i) * (x[i].conj() * y[i] - x[m + i].conj() * y[m + i]);
    }
    acc
}

/// x^H diag(I, -I) y without constructing a signature.
pub fn gamma0_inner(x: &[C64], y: &[C64]) -> C64 {
    let m = x.len() / 2;
    let mut acc = ZERO;
    for i in 0..m {
        acc += x[i].conj() * y[i] - x[m + i].conj() * y[m + i];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, k: usize) -> Vec<C64> {
        let mut v = vec![ZERO; n];
        v[k] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn standard_metric_examples() {
        let s = Signature::standard(2);
        assert_eq!(gamma_inner(&s, &e(4, 0), &e(4, 0)).unwrap(), C64::new(1.0, 0.0));
        assert_eq!(gamma_inner(&s, &e(4, 2), &e(4, 2)).unwrap(), C64::new(-1.0, 0.0));
        assert_eq!(gamma_inner(&s, &e(4, 0), &e(4, 2)).unwrap(), ZERO);
    }

    #[test]
    fn rejects_bad_entries_and_lengths() {
        assert!(Signature::new(vec![1, 0]).is_err());
        let s = Signature::standard(2);
        assert!(matches!(gamma_inner(&s, &e(3, 0), &e(4, 0)), Err(BsepError::DimensionMismatch { .. })));
    }
}
