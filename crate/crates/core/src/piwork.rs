//! In-place application of paired transforms to a matrix stored by its
//! blocks G1, G2, with operation counting and optional accumulation of the
//! product of applied transforms.

use std::ops::Range;

use num_complex::Complex64 as C64;

use crate::flops::Flops;
use crate::hyperbolic::{mixed_rotate, Half, HouseholderLike, HyperbolicGivens};
use crate::matrix::{ComplexDense, ZERO};
use crate::pimatrix::{PiMatrix, PiSign};
use crate::signature::Signature;

/// Working copy of a 2n x 2m block-structured matrix under a sequence of
/// transforms. Left actions multiply by Q^{-1}, right actions by Q.
#[derive(Debug, Clone)]
pub struct PiWork {
    pub sign: PiSign,
    pub g1: ComplexDense,
    pub g2: ComplexDense,
    pub sig: Signature,
    pub flops: Flops,
    /// Blocks of the accumulated product Q_1 Q_2 ... (always a plus-type matrix).
    pub acc: Option<(ComplexDense, ComplexDense)>,
    /// Product of |c| + |s| over all rotations applied.
    pub growth: f64,
    /// Number of rotations flagged as close to breakdown.
    pub near_breakdowns: usize,
}

/// x <- (I - tau w w^H Jhat) P x on a contiguous slice, with w[0] = 1.
/// Returns false when the slice is zero and nothing was done.
#[inline]
fn reflect_left(x: &mut [C64], r: usize, w: &[C64], tau: f64, jhat: &[i8], flops: &mut Flops) -> bool {
    if x.iter().all(|z| *z == ZERO) {
        return false;
    }
    let k = w.len();
    x.swap(0, r);
    let mut t = jhat[0] as f64 * x[0];
    for i in 1..k {
        t += w[i].conj() * (jhat[i] as f64 * x[i]);
    }
    let t = t * tau;
    x[0] -= t;
    for i in 1..k {
        x[i] -= t * w[i];
    }
    flops.cma(2 * (k - 1));
    flops.cadd(1);
    flops.rcmul(1);
    true
}

/// Rows `rows` of M[:, lo..lo+k] <- (those rows) P (I - tau w w^H Jhat),
/// with w[0] = 1.
#[allow(clippy::too_many_arguments)]
fn reflect_right(
    m: &mut ComplexDense,
    lo: usize,
    r: usize,
    w: &[C64],
    tau: f64,
    jhat: &[i8],
    rows: Range<usize>,
    t: &mut Vec<C64>,
    flops: &mut Flops,
) {
    let len = rows.len();
    if len == 0 {
        return;
    }
    let k = w.len();
    if r != 0 {
        for i in rows.clone() {
            let a = m[(i, lo)];
            m[(i, lo)] = m[(i, lo + r)];
            m[(i, lo + r)] = a;
        }
    }
    t.clear();
    t.extend_from_slice(&m.col(lo)[rows.clone()]);
    for (q, wq) in w.iter().enumerate().skip(1) {
        if *wq == ZERO {
            continue;
        }
        let col = &m.col(lo + q)[rows.clone()];
        for (ti, ci) in t.iter_mut().zip(col) {
            *ti += ci * wq;
        }
    }
    for (q, wq) in w.iter().enumerate() {
        let f = -tau * jhat[q] as f64 * wq.conj();
        if f == ZERO {
            continue;
        }
        let col = &mut m.col_mut(lo + q)[rows.clone()];
        for (ci, ti) in col.iter_mut().zip(t.iter()) {
            *ci += f * ti;
        }
    }
    flops.cma(2 * (k - 1) * len);
    flops.cadd(len);
    flops.rcmul(len);
}

impl PiWork {
    pub fn new(p: PiMatrix, sig: Signature, keep_accumulator: bool) -> Self {
        let acc = if keep_accumulator {
            let k = p.n();
            Some((ComplexDense::identity(k), ComplexDense::zeros(k, k)))
        } else {
            None
        };
        PiWork { sign: p.sign, g1: p.g1, g2: p.g2, sig, flops: Flops::new(), acc, growth: 1.0, near_breakdowns: 0 }
    }

    pub fn n(&self) -> usize {
        self.g1.rows()
    }

    pub fn to_pi_matrix(&self) -> PiMatrix {
        PiMatrix { sign: self.sign, g1: self.g1.clone(), g2: self.g2.clone() }
    }

    pub fn accumulator(&self) -> Option<PiMatrix> {
        self.acc.as_ref().map(|(a, b)| PiMatrix { sign: PiSign::Plus, g1: a.clone(), g2: b.clone() })
    }

    /// Vectors of the factor F acting on the upper half and of conj(F) on
    /// the lower half.
    fn factor_vectors(h: &HouseholderLike, half: Half) -> (Vec<C64>, Vec<C64>) {
        let v = h.v.clone();
        let vc: Vec<C64> = h.v.iter().map(|z| z.conj()).collect();
        match half {
            Half::Upper => (v, vc),
            Half::Lower => (vc, v),
        }
    }

    /// Left multiplication by Q^{-1} on columns `cols`.
    pub fn hh_left(&mut self, h: &HouseholderLike, lo: usize, half: Half, cols: Range<usize>) {
        let k = h.k();
        let (w, _) = Self::factor_vectors(h, half);
        for c in cols {
            for g in [&mut self.g1, &mut self.g2] {
                let x = &mut g.col_mut(c)[lo..lo + k];
                reflect_left(x, h.r, &w, h.tau, &h.j_out, &mut self.flops);
            }
        }
    }

    /// Right multiplication by Q on rows `rows`; the accumulator (if kept)
    /// is updated on all its rows without counting.
    pub fn hh_right(&mut self, h: &HouseholderLike, lo: usize, half: Half, rows: Range<usize>) {
        let (w1, w2) = Self::factor_vectors(h, half);
        let mut t = Vec::new();
        reflect_right(&mut self.g1, lo, h.r, &w1, h.tau, &h.j_out, rows.clone(), &mut t, &mut self.flops);
        reflect_right(&mut self.g2, lo, h.r, &w2, h.tau, &h.j_out, rows, &mut t, &mut self.flops);
        if let Some((a1, a2)) = self.acc.as_mut() {
            let all = 0..a1.rows();
            let mut sink = Flops::new();
            reflect_right(a1, lo, h.r, &w1, h.tau, &h.j_out, all.clone(), &mut t, &mut sink);
            reflect_right(a2, lo, h.r, &w2, h.tau, &h.j_out, all, &mut t, &mut sink);
        }
    }

    /// Records the signature change of a reflector applied at offset `lo`.
    pub fn hh_signature(&mut self, h: &HouseholderLike, lo: usize) {
        self.sig.swap(lo, lo + h.r);
    }

    /// Full similarity Q^{-1} M Q restricted to the given windows.
    pub fn hh_similarity(&mut self, h: &HouseholderLike, lo: usize, half: Half, cols: Range<usize>, rows: Range<usize>) {
        self.hh_left(h, lo, half, cols);
        self.hh_right(h, lo, half, rows);
        self.hh_signature(h, lo);
    }

    /// Left multiplication by the rotation's Q^{-1} on columns `cols`.
    pub fn givens_left(&mut self, g: &HyperbolicGivens, cols: Range<usize>) {
        let l = g.l;
        let sg = self.sign.sgn();
        let ss = sg * g.s;
        for c in cols {
            let p1 = self.g1[(l, c)];
            let p2 = self.g2[(l, c)];
            let (x, y) = mixed_rotate(g.c, ss, g.sign_flip, p1, p2.conj());
            self.g1[(l, c)] = x;
            self.g2[(l, c)] = y.conj();
            self.flops.rcmul(2);
            self.flops.cma(2);
        }
    }

    /// Right multiplication by the rotation's Q on rows `rows`.
    pub fn givens_right(&mut self, g: &HyperbolicGivens, rows: Range<usize>) {
        let l = g.l;
        let (c, s, f) = (g.c * g.sign_flip, -g.s.conj() * g.sign_flip, g.sign_flip);
        let rot = |a1: &mut ComplexDense, a2: &mut ComplexDense, rows: Range<usize>| {
            for r in rows {
                let (a, b) = mixed_rotate(c, s, f, a1[(r, l)], a2[(r, l)]);
                a1[(r, l)] = a;
                a2[(r, l)] = b;
            }
        };
        self.flops.rcmul(2 * rows.len());
        self.flops.cma(2 * rows.len());
        rot(&mut self.g1, &mut self.g2, rows);
        if let Some((a1, a2)) = self.acc.as_mut() {
            let all = 0..a1.rows();
            rot(a1, a2, all);
        }
    }

    pub fn givens_signature(&mut self, g: &HyperbolicGivens) {
        g.update_signature(&mut self.sig);
        self.growth *= g.c.abs() + g.s.norm();
        if g.near_breakdown {
            self.near_breakdowns += 1;
        }
    }

    pub fn givens_similarity(&mut self, g: &HyperbolicGivens, cols: Range<usize>, rows: Range<usize>) {
        self.givens_left(g, cols);
        self.givens_right(g, rows);
        self.givens_signature(g);
    }

    /// Sets row `i` in columns `cols` from the metric symmetry of the blocks:
    /// J G1 is Hermitian, and J G2 is symmetric (minus kind) or skew-symmetric
    /// (plus kind).
    pub fn fill_row_from_col(&mut self, i: usize, cols: Range<usize>) {
        let s2 = -self.sign.sgn();
        let ji = self.sig.half(i);
        for q in cols {
            let f = ji * self.sig.half(q);
            self.g1[(i, q)] = f * self.g1[(q, i)].conj();
            self.g2[(i, q)] = (f * s2) * self.g2[(q, i)];
        }
    }

    /// Similarity by a reflector on `range` for a matrix with the metric
    /// symmetry: left action on columns `window`, right action on the
    /// diagonal block only, remaining rows of the window set by symmetry.
    pub fn sym_hh(&mut self, h: &HouseholderLike, half: Half, range: Range<usize>, window: Range<usize>) {
        self.hh_left(h, range.start, half, window.clone());
        self.hh_right(h, range.start, half, range.clone());
        self.hh_signature(h, range.start);
        for i in window.filter(|i| !range.contains(i)) {
            self.fill_row_from_col(i, range.clone());
        }
    }

    /// Rotation similarity for a matrix with the metric symmetry: left action
    /// on columns `window`, right action on rows `rows`, the remaining rows
    /// of the window set by symmetry.
    pub fn sym_givens(&mut self, g: &HyperbolicGivens, rows: Range<usize>, window: Range<usize>) {
        self.givens_left(g, window.clone());
        self.givens_right(g, rows.clone());
        self.givens_signature(g);
        for i in window.filter(|i| !rows.contains(i)) {
            self.fill_row_from_col(i, g.l..g.l + 1);
        }
    }

    /// Multiplies row and column `i` of both blocks by a unimodular phase
    /// (a diagonal similarity that keeps the block structure).
    pub fn phase_similarity(&mut self, i: usize, ph: C64) {
        let n = self.n();
        let inv = ph.conj();
        for c in 0..self.g1.cols() {
            self.g1[(i, c)] *= inv;
            self.g2[(i, c)] *= inv;
        }
        for r in 0..n {
            self.g1[(r, i)] *= ph;
            self.g2[(r, i)] *= ph.conj();
        }
        if let Some((a1, a2)) = self.acc.as_mut() {
            for r in 0..a1.rows() {
                a1[(r, i)] *= ph;
                a2[(r, i)] *= ph.conj();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::{make_hyperbolic_givens, make_householder_like, PivotPolicy};
    use crate::structure::{check_structure, StructureClaim};

    fn sample(sign: PiSign, n: usize) -> PiMatrix {
        let g1 = ComplexDense::from_fn(n, n, |i, j| C64::new((1.0 + i as f64 * 0.37 + j as f64).sin(), (i as f64 - 0.5 * j as f64).cos()));
        let g2 = ComplexDense::from_fn(n, n, |i, j| C64::new((2.0 * i as f64 + j as f64).cos(), (0.3 * i as f64 * j as f64).sin()));
        PiMatrix { sign, g1, g2 }
    }

    /// Dense Q from the accumulator after applying transforms to the identity.
    #[test]
    fn similarity_matches_dense_product() {
        let n = 5;
        for sign in [PiSign::Minus, PiSign::Plus] {
            let p = sample(sign, n);
            let sig = Signature::new(vec![1, -1, 1, 1, -1]).unwrap();
            let mut w = PiWork::new(p.clone(), sig.clone(), true);
            let a: Vec<C64> = w.g1.col(0)[1..].to_vec();
            let h = make_householder_like(&a, &sig.j()[1..], PivotPolicy::MaxStability).unwrap();
            w.hh_similarity(&h, 1, Half::Upper, 0..n, 0..n);
            let a: Vec<C64> = w.g2.col(1)[2..].to_vec();
            let jj = w.sig.j()[2..].to_vec();
            let h = make_householder_like(&a, &jj, PivotPolicy::FirstValid).unwrap();
            w.hh_similarity(&h, 2, Half::Lower, 0..n, 0..n);
            let g = make_hyperbolic_givens(w.g1[(3, 0)], w.g2[(3, 0)] * 0.5, 3).unwrap();
            w.givens_similarity(&g, 0..n, 0..n);
            w.phase_similarity(4, C64::new(0.6, 0.8));

            let q = w.accumulator().unwrap().to_dense();
            let s0 = sig.to_dense();
            let s1 = w.sig.to_dense();
            assert!(check_structure(&q, StructureClaim::GammaUnitary, &sig, 1e-12).holds);
            assert!(q.adjoint().matmul(&s0).matmul(&q).sub(&s1).norm_max() < 1e-11);
            let qinv = s1.matmul(&q.adjoint()).matmul(&s0);
            let want = qinv.matmul(&p.to_dense()).matmul(&q);
            let got = w.to_pi_matrix().to_dense();
            assert!(want.sub(&got).norm_max() < 1e-11, "{}", want.sub(&got).norm_max());
        }
    }
}
