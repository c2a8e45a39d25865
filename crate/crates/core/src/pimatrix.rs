//! Block-structured matrices [[G1, G2], [±conj(G2), ±conj(G1)]] and the
//! tridiagonal canonical form.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{BsepError, Result};
use crate::matrix::{ComplexDense, ZERO};
use crate::signature::Signature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PiSign {
    Plus,
    Minus,
}

impl PiSign {
    #[inline]
    pub fn sgn(self) -> f64 {
        match self {
            PiSign::Plus => 1.0,
            PiSign::Minus => -1.0,
        }
    }
}

/// A 2n x 2m matrix stored by its independent blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PiMatrix {
    pub sign: PiSign,
    pub g1: ComplexDense,
    pub g2: ComplexDense,
}

impl PiMatrix {
    pub fn new(sign: PiSign, g1: ComplexDense, g2: ComplexDense) -> Result<Self> {
        if g1.rows() != g2.rows() || g1.cols() != g2.cols() {
            return Err(BsepError::DimensionMismatch { expected: g1.rows() * g1.cols(), found: g2.rows() * g2.cols() });
        }
        Ok(PiMatrix { sign, g1, g2 })
    }

    /// Half row count n.
    pub fn n(&self) -> usize {
        self.g1.rows()
    }

    /// Half column count m.
    pub fn m(&self) -> usize {
        self.g1.cols()
    }

    pub fn to_dense(&self) -> ComplexDense {
        let (n, m) = (self.n(), self.m());
        let s = C64::new(self.sign.sgn(), 0.0);
        let mut d = ComplexDense::zeros(2 * n, 2 * m);
        d.set_block(0, 0, &self.g1);
        d.set_block(0, m, &self.g2);
        d.set_block(n, 0, &self.g2.conj().scale(s));
        d.set_block(n, m, &self.g1.conj().scale(s));
        d
    }

    /// Extracts the blocks of a dense matrix, checking the claimed structure
    /// to `tol` relative to max(1, |M|_max).
    pub fn from_dense(m: &ComplexDense, sign: PiSign, tol: f64) -> Result<Self> {
        if !m.rows().is_multiple_of(2) {
            return Err(BsepError::OddLength(m.rows()));
        }
        if !m.cols().is_multiple_of(2) {
            return Err(BsepError::OddLength(m.cols()));
        }
        let (n, k) = (m.rows() / 2, m.cols() / 2);
        let g1 = m.block(0, n, 0, k);
        let g2 = m.block(0, n, k, 2 * k);
        let p = PiMatrix { sign, g1, g2 };
        let dev = p.to_dense().sub(m).norm_max();
        if dev > tol * m.norm_max().max(1.0) {
            return Err(BsepError::StructureViolation { what: "matrix lacks the claimed block structure", deviation: dev });
        }
        Ok(p)
    }

    /// Columns j and m + j as 2n-vectors.
    pub fn column(&self, j: usize) -> Vec<C64> {
        let s = self.sign.sgn();
        let mut v: Vec<C64> = self.g1.col(j).to_vec();
        v.extend(self.g2.col(j).iter().map(|z| s * z.conj()));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PiKind {
    PiMinus,
    PiPlus,
}

impl PiKind {
    pub fn sign(self) -> PiSign {
        match self {
            PiKind::PiMinus => PiSign::Minus,
            PiKind::PiPlus => PiSign::Plus,
        }
    }
}

/// Tridiagonal canonical form with real diagonal `alpha`, subdiagonal `beta`,
/// coupling diagonal `gamma` and signature `delta`.
///
/// The upper-left block has (j,j) = alpha_j, (j+1,j) = beta_j and
/// (j,j+1) = (delta_{j+1}/delta_j) conj(beta_j); the lower-left block is
/// diag(gamma). For `PiPlus` gamma is identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiTridiagonal {
    pub kind: PiKind,
    pub alpha: Vec<f64>,
    pub beta: Vec<C64>,
    pub gamma: Vec<C64>,
    pub delta: Vec<i8>,
}

impl PiTridiagonal {
    pub fn new(kind: PiKind, alpha: Vec<f64>, beta: Vec<C64>, gamma: Vec<C64>, delta: Vec<i8>) -> Result<Self> {
        let m = alpha.len();
        if beta.len() + 1 != m.max(1) || gamma.len() != m || delta.len() != m {
            return Err(BsepError::DimensionMismatch { expected: m, found: gamma.len().min(delta.len()) });
        }
        if delta.iter().any(|&d| d != 1 && d != -1) {
            return Err(BsepError::StructureViolation { what: "delta entries must be +1 or -1", deviation: 1.0 });
        }
        if kind == PiKind::PiPlus && gamma.iter().any(|g| *g != ZERO) {
            return Err(BsepError::StructureViolation {
                what: "gamma must vanish for the plus kind",
                deviation: gamma.iter().map(|g| g.norm()).fold(0.0, f64::max),
            });
        }
        Ok(PiTridiagonal { kind, alpha, beta, gamma, delta })
    }

    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    pub fn signature(&self) -> Signature {
        Signature::new(self.delta.clone()).expect("delta validated at construction")
    }

    /// Entry (j, j+1) of the upper-left block.
    #[inline]
    pub fn superdiag(&self, j: usize) -> C64 {
        (self.delta[j + 1] as f64 * self.delta[j] as f64) * self.beta[j].conj()
    }

    /// Upper-left block G1.
    pub fn g1(&self) -> ComplexDense {
        let m = self.order();
        let mut g = ComplexDense::zeros(m, m);
        for j in 0..m {
            g[(j, j)] = C64::new(self.alpha[j], 0.0);
        }
        for j in 0..m.saturating_sub(1) {
            g[(j + 1, j)] = self.beta[j];
            g[(j, j + 1)] = self.superdiag(j);
        }
        g
    }

    /// Upper-right block G2 = -conj(diag(gamma)).
    pub fn g2(&self) -> ComplexDense {
        let m = self.order();
        let mut g = ComplexDense::zeros(m, m);
        for j in 0..m {
            g[(j, j)] = -self.gamma[j].conj();
        }
        g
    }

    pub fn to_pi_matrix(&self) -> PiMatrix {
        PiMatrix { sign: self.kind.sign(), g1: self.g1(), g2: self.g2() }
    }

    pub fn to_dense(&self) -> ComplexDense {
        self.to_pi_matrix().to_dense()
    }

    /// y = T x for a 2m-vector x in standard ordering.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let m = self.order();
        assert_eq!(x.len(), 2 * m);
        let s = self.kind.sign().sgn();
        let mut y = vec![ZERO; 2 * m];
        for j in 0..m {
            let mut u = C64::new(self.alpha[j], 0.0) * x[j] - self.gamma[j].conj() * x[m + j];
            let mut l = -s * self.gamma[j] * x[j] + C64::new(self.alpha[j], 0.0) * x[m + j] * s;
            if j > 0 {
                u += self.beta[j - 1] * x[j - 1];
                l += s * self.beta[j - 1].conj() * x[m + j - 1];
            }
            if j + 1 < m {
                let sd = self.superdiag(j);
                u += sd * x[j + 1];
                l += s * sd.conj() * x[m + j + 1];
            }
            y[j] = u;
            y[m + j] = l;
        }
        y
    }

    /// Entry of the matrix in interleaved ordering (upper j -> 2j, lower
    /// j -> 2j+1); nonzero only for |r - c| <= 2.
    pub fn interleaved(&self, r: usize, c: usize) -> C64 {
        let s = self.kind.sign().sgn();
        let (jr, lr) = (r / 2, r % 2 == 1);
        let (jc, lc) = (c / 2, c % 2 == 1);
        let block_g1 = |a: usize, b: usize| -> C64 {
            if a == b {
                C64::new(self.alpha[a], 0.0)
            } else if a == b + 1 {
                self.beta[b]
            } else if b == a + 1 {
                self.superdiag(a)
            } else {
                ZERO
            }
        };
        let block_g2 = |a: usize, b: usize| -> C64 {
            if a == b {
                -self.gamma[a].conj()
            } else {
                ZERO
            }
        };
        match (lr, lc) {
            (false, false) => block_g1(jr, jc),
            (false, true) => block_g2(jr, jc),
            (true, false) => s * block_g2(jr, jc).conj(),
            (true, true) => s * block_g1(jr, jc).conj(),
        }
    }

    pub fn norm_one(&self) -> f64 {
        self.to_dense().norm_one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PiTridiagonal {
        PiTridiagonal::new(
            PiKind::PiMinus,
            vec![1.0, -2.0, 0.5],
            vec![C64::new(0.3, 0.4), C64::new(-1.0, 0.2)],
            vec![C64::new(0.1, -0.7), C64::new(0.0, 0.0), C64::new(2.0, 1.0)],
            vec![1, -1, 1],
        )
        .unwrap()
    }

    #[test]
    fn apply_matches_dense() {
        let t = sample();
        let d = t.to_dense();
        let x: Vec<C64> = (0..6).map(|k| C64::new(k as f64 - 2.0, 0.5 * k as f64)).collect();
        let y1 = t.apply(&x);
        let y2 = d.matvec(&x);
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn interleaved_matches_dense() {
        let t = sample();
        let d = t.to_dense();
        let m = t.order();
        for r in 0..2 * m {
            for c in 0..2 * m {
                let dr = if r % 2 == 0 { r / 2 } else { m + r / 2 };
                let dc = if c % 2 == 0 { c / 2 } else { m + c / 2 };
                assert_eq!(t.interleaved(r, c), d[(dr, dc)]);
            }
        }
    }

    #[test]
    fn dense_round_trip() {
        let t = sample();
        let p = PiMatrix::from_dense(&t.to_dense(), PiSign::Minus, 1e-14).unwrap();
        assert_eq!(p.g1, t.g1());
        assert!(PiMatrix::from_dense(&t.to_dense(), PiSign::Plus, 1e-14).is_err());
    }
}
