//! QR-type factorization of block-structured matrices in the indefinite
//! metric: G = Q R with Q metric-orthonormal and R block upper triangular.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{BsepError, Result};
use crate::hyperbolic::{make_householder_like, make_hyperbolic_givens, Half, PivotPolicy};
use crate::linalg::{det, pivoted_qr_rank_ratio};
use crate::matrix::{phase, ComplexDense, ONE, ZERO};
use crate::pimatrix::{PiMatrix, PiSign};
use crate::piwork::PiWork;
use crate::signature::Signature;
use crate::structure::{check_structure, StructureClaim};

/// Columns whose rank ratio falls below this are treated as dependent.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FactorMode {
    /// Q is 2n x 2n and R is 2n x 2m.
    Full,
    /// Q is 2n x 2m and R is 2m x 2m.
    Skinny,
}

#[derive(Debug, Clone)]
pub struct GqrFactors {
    /// Plus-type, with Q^H S_in Q = S_out.
    pub q: PiMatrix,
    /// Same sign as the input; R1 upper triangular with a real nonnegative
    /// diagonal, R2 strictly upper triangular.
    pub r: PiMatrix,
    pub s_in: Signature,
    pub s_out: Signature,
    /// Product of |c| + |s| over the rotations used.
    pub growth_factor: f64,
}

/// Factorizes G (2n x 2m, n >= m) as Q R in the metric `s`.
///
/// Columns are eliminated left to right. For column c a reflector on the
/// lower block folds rows c..n into row c, a rotation pairs that entry with
/// the upper one, and a reflector on the upper block clears rows below c.
pub fn gqr_factorize(g: &PiMatrix, s: &Signature, mode: FactorMode) -> Result<GqrFactors> {
    let (n, m) = (g.n(), g.m());
    if s.m() != n {
        return Err(BsepError::DimensionMismatch { expected: n, found: s.m() });
    }
    if m > n {
        return Err(BsepError::RankDeficient { ratio: 0.0 });
    }
    if m == 0 {
        return Err(BsepError::ZeroVector);
    }
    let ratio = pivoted_qr_rank_ratio(&g.to_dense());
    if !(ratio > RANK_TOL) {
        return Err(BsepError::RankDeficient { ratio });
    }
    let sg = g.sign.sgn();
    let mut w = PiWork::new(g.clone(), s.clone(), true);
    let breakdown = |c: usize| move |e: BsepError| match e {
        BsepError::IsotropicVector { .. } | BsepError::HyperbolicBreakdown { .. } | BsepError::NoValidPivot => {
            BsepError::PrincipalMinorBreakdown { column: c }
        }
        other => other,
    };
    for c in 0..m {
        let rows = c..n;
        if rows.len() >= 2 && rows.clone().skip(1).any(|i| w.g2[(i, c)] != ZERO) {
            let a: Vec<_> = rows.clone().map(|i| sg * w.g2[(i, c)].conj()).collect();
            let h = make_householder_like(&a, &w.sig.j()[rows.clone()], PivotPolicy::MaxStability).map_err(breakdown(c))?;
            w.hh_left(&h, c, Half::Lower, c..m);
            w.hh_right(&h, c, Half::Lower, 0..0);
            w.hh_signature(&h, c);
        }
        let beta = sg * w.g2[(c, c)].conj();
        if beta != ZERO {
            let rot = make_hyperbolic_givens(w.g1[(c, c)], beta, c).map_err(breakdown(c))?;
            w.givens_left(&rot, c..m);
            w.givens_right(&rot, 0..0);
            w.givens_signature(&rot);
        }
        if rows.len() >= 2 && rows.clone().skip(1).any(|i| w.g1[(i, c)] != ZERO) {
            let a = w.g1.col(c)[rows.clone()].to_vec();
            let h = make_householder_like(&a, &w.sig.j()[rows.clone()], PivotPolicy::MaxStability).map_err(breakdown(c))?;
            w.hh_left(&h, c, Half::Upper, c..m);
            w.hh_right(&h, c, Half::Upper, 0..0);
            w.hh_signature(&h, c);
        }
        if w.g1[(c, c)] == ZERO {
            return Err(BsepError::PrincipalMinorBreakdown { column: c });
        }
        for i in c..n {
            if i > c {
                w.g1[(i, c)] = ZERO;
            }
            w.g2[(i, c)] = ZERO;
        }
        normalize_row(&mut w, c);
    }
    let (q1, q2) = w.acc.take().expect("accumulator is kept");
    let growth_factor = w.growth;
    let s_out = w.sig.clone();
    let (q, r, s_out) = match mode {
        FactorMode::Full => (
            PiMatrix { sign: PiSign::Plus, g1: q1, g2: q2 },
            PiMatrix { sign: g.sign, g1: w.g1, g2: w.g2 },
            s_out,
        ),
        FactorMode::Skinny => (
            PiMatrix { sign: PiSign::Plus, g1: q1.block(0, n, 0, m), g2: q2.block(0, n, 0, m) },
            PiMatrix { sign: g.sign, g1: w.g1.block(0, m, 0, m), g2: w.g2.block(0, m, 0, m) },
            Signature::new(s_out.j()[..m].to_vec())?,
        ),
    };
    Ok(GqrFactors { q, r, s_in: s.clone(), s_out, growth_factor })
}

/// Makes the diagonal entry of row c of R1 real and nonnegative by a unimodular
/// diagonal transform (phase on row c of both halves).
fn normalize_row(w: &mut PiWork, c: usize) {
    let ph = phase(w.g1[(c, c)]);
    if ph == ONE {
        return;
    }
    let inv = ph.conj();
    for q in 0..w.g1.cols() {
        w.g1[(c, q)] *= inv;
        w.g2[(c, q)] *= inv;
    }
    w.g1[(c, c)] = C64::new(w.g1[(c, c)].norm(), 0.0);
    if let Some((a1, a2)) = w.acc.as_mut() {
        for i in 0..a1.rows() {
            a1[(i, c)] *= ph;
            a2[(i, c)] *= ph.conj();
        }
    }
}

/// Determinants of the leading paired submatrices
/// [[M1[:i,:i], M2[:i,:i]], [-conj(M2)[:i,:i], -conj(M1)[:i,:i]]], i = 1..m,
/// of a minus-type 2m x 2m matrix.
pub fn pi_leading_minors(m: &ComplexDense) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(BsepError::DimensionMismatch { expected: m.rows(), found: m.cols() });
    }
    if !m.rows().is_multiple_of(2) {
        return Err(BsepError::OddLength(m.rows()));
    }
    let k = m.rows() / 2;
    let rep = check_structure(m, StructureClaim::PiMinus, &Signature::standard(k), 1e-10);
    if !rep.holds {
        return Err(BsepError::StructureViolation { what: "matrix lacks the minus-type block pattern", deviation: rep.deviation });
    }
    let p = PiMatrix { sign: PiSign::Minus, g1: m.block(0, k, 0, k), g2: m.block(0, k, k, 2 * k) };
    Ok((1..=k)
        .map(|i| {
            let sub = PiMatrix { sign: PiSign::Minus, g1: p.g1.block(0, i, 0, i), g2: p.g2.block(0, i, 0, i) };
            det(&sub.to_dense())
        })
        .collect())
}
