//! Elementary transforms that are unitary with respect to an indefinite
//! metric: the Householder-like reflector, its embedding on paired index
//! ranges of a 2n-vector, and the hyperbolic rotation coupling index l with
//! its partner n + l.

use std::ops::Range;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{BsepError, Result};
use crate::matrix::{norm2, phase, ONE, ZERO};
use crate::signature::Signature;

/// Threshold on |a^H J a| / |a|^2 below which a vector counts as isotropic.
pub const ISOTROPY_TOL: f64 = 1e-14;
/// Relative threshold on ||alpha| - |beta|| for rotation breakdown.
pub const GIVENS_BREAKDOWN_TOL: f64 = 1e-12;
/// Ratio max/min of the rotation inputs below which a warning is recorded.
pub const GIVENS_WARN_RATIO: f64 = 1.0 + 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PivotPolicy {
    /// Smallest admissible index.
    FirstValid,
    /// Admissible index of largest modulus, ties to the smallest index.
    MaxStability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Half {
    Upper,
    Lower,
}

/// H(a)^{-1} = (I - tau v v^H Jhat) P, where P swaps entries 0 and `r` and
/// the direction v is scaled so that v[0] = 1.
///
/// The reflector part is an involution, so H = P (I - tau v v^H Jhat) and
/// H^H = (I - tau Jhat v v^H) P.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholderLike {
    pub r: usize,
    pub v: Vec<C64>,
    pub tau: f64,
    pub alpha: C64,
    pub j_in: Vec<i8>,
    pub j_out: Vec<i8>,
}

impl HouseholderLike {
    pub fn k(&self) -> usize {
        self.v.len()
    }

    #[inline]
    fn jhat(&self, i: usize) -> f64 {
        self.j_out[i] as f64
    }

    /// x <- H^{-1} x
    pub fn apply_inv(&self, x: &mut [C64]) {
        x.swap(0, self.r);
        let t: C64 = self.v.iter().zip(x.iter()).enumerate().map(|(i, (v, z))| v.conj() * self.jhat(i) * z).sum();
        let t = t * self.tau;
        for (z, v) in x.iter_mut().zip(&self.v) {
            *z -= t * v;
        }
    }

    /// x <- H x
    pub fn apply(&self, x: &mut [C64]) {
        let t: C64 = self.v.iter().zip(x.iter()).enumerate().map(|(i, (v, z))| v.conj() * self.jhat(i) * z).sum();
        let t = t * self.tau;
        for (z, v) in x.iter_mut().zip(&self.v) {
            *z -= t * v;
        }
        x.swap(0, self.r);
    }

    /// x <- H^H x
    pub fn apply_adjoint(&self, x: &mut [C64]) {
        x.swap(0, self.r);
        let t: C64 = self.v.iter().zip(x.iter()).map(|(v, z)| v.conj() * z).sum();
        let t = t * self.tau;
        for (i, (z, v)) in x.iter_mut().zip(&self.v).enumerate() {
            *z -= t * self.jhat(i) * v;
        }
    }

    /// x <- conj(H)^{-1} x
    pub fn apply_inv_conj(&self, x: &mut [C64]) {
        x.swap(0, self.r);
        let t: C64 = self.v.iter().zip(x.iter()).enumerate().map(|(i, (v, z))| v * self.jhat(i) * z).sum();
        let t = t * self.tau;
        for (z, v) in x.iter_mut().zip(&self.v) {
            *z -= t * v.conj();
        }
    }

    /// x <- conj(H) x
    pub fn apply_conj(&self, x: &mut [C64]) {
        let t: C64 = self.v.iter().zip(x.iter()).enumerate().map(|(i, (v, z))| v * self.jhat(i) * z).sum();
        let t = t * self.tau;
        for (z, v) in x.iter_mut().zip(&self.v) {
            *z -= t * v.conj();
        }
        x.swap(0, self.r);
    }

    /// x <- conj(H)^H x
    pub fn apply_adjoint_conj(&self, x: &mut [C64]) {
        x.swap(0, self.r);
        let t: C64 = self.v.iter().zip(x.iter()).map(|(v, z)| v * z).sum();
        let t = t * self.tau;
        for (i, (z, v)) in x.iter_mut().zip(&self.v).enumerate() {
            *z -= t * self.jhat(i) * v.conj();
        }
    }
}

/// Quadratic form a^H diag(j) a and squared norm, after validating `j`.
fn check_reflector_input(a: &[C64], j: &[i8]) -> Result<(f64, f64)> {
    let k = a.len();
    if j.len() != k {
        return Err(BsepError::DimensionMismatch { expected: k, found: j.len() });
    }
    if k == 0 {
        return Err(BsepError::ZeroVector);
    }
    if j.iter().any(|&s| s != 1 && s != -1) {
        return Err(BsepError::StructureViolation { what: "signature entries must be +1 or -1", deviation: 1.0 });
    }
    let form: f64 = a.iter().zip(j).map(|(z, &s)| s as f64 * z.norm_sqr()).sum();
    let nrm2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    if form.abs() <= ISOTROPY_TOL * nrm2 || nrm2 == 0.0 {
        return Err(BsepError::IsotropicVector { position: 0, form: form.abs(), norm2: nrm2 });
    }
    Ok((form, nrm2))
}

/// Builds the reflector taking `a` to alpha e_1 under the metric diag(`j`).
pub fn make_householder_like(a: &[C64], j: &[i8], policy: PivotPolicy) -> Result<HouseholderLike> {
    let (form, _) = check_reflector_input(a, j)?;
    let admissible = |i: usize| j[i] as f64 * form > 0.0;
    let k = a.len();
    let r = match policy {
        PivotPolicy::FirstValid => (0..k).find(|&i| admissible(i)),
        PivotPolicy::MaxStability => {
            let mut best: Option<usize> = None;
            for i in (0..k).filter(|&i| admissible(i)) {
                if best.is_none_or(|b| a[i].norm() > a[b].norm()) {
                    best = Some(i);
                }
            }
            best
        }
    }
    .ok_or(BsepError::NoValidPivot)?;
    householder_with_pivot(a, j, form, r)
}

fn householder_with_pivot(a: &[C64], j: &[i8], form: f64, r: usize) -> Result<HouseholderLike> {
    let mut v = a.to_vec();
    v.swap(0, r);
    let mut j_out = j.to_vec();
    j_out.swap(0, r);
    let j1 = j_out[0] as f64;
    let alpha = -phase(v[0]) * (j1 * form).sqrt();
    // beta = conj(alpha) (alpha - a1) is real and positive
    let beta = alpha.norm_sqr() + alpha.norm() * v[0].norm();
    v[0] -= alpha;
    // scale the direction so that v[0] = 1
    let v0 = v[0];
    let tau = j1 / beta * v0.norm_sqr();
    for z in v.iter_mut() {
        *z /= v0;
    }
    v[0] = ONE;
    Ok(HouseholderLike { r, v, tau, alpha, j_in: j.to_vec(), j_out })
}

/// A reflector acting on the paired ranges `lo..lo+k` and `n+lo..n+lo+k` of
/// a 2n-vector. With F = H for the upper half and F = conj(H) for the lower
/// half, Q^{-1} = diag(I, F^{-1}, I, I, conj(F)^{-1}, I).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicHouseholder {
    pub n: usize,
    pub lo: usize,
    pub half: Half,
    pub h: HouseholderLike,
    sig_out: Signature,
}

impl HyperbolicHouseholder {
    pub fn range(&self) -> Range<usize> {
        self.lo..self.lo + self.h.k()
    }

    pub fn signature_out(&self) -> &Signature {
        &self.sig_out
    }

    fn split<'a>(&self, x: &'a mut [C64]) -> (&'a mut [C64], &'a mut [C64]) {
        assert_eq!(x.len(), 2 * self.n);
        let (up, low) = x.split_at_mut(self.n);
        let rg = self.range();
        (&mut up[rg.clone()], &mut low[rg])
    }

    /// x <- Q^{-1} x
    pub fn apply_inv(&self, x: &mut [C64]) {
        let half = self.half;
        let (u, l) = self.split(x);
        match half {
            Half::Upper => {
                self.h.apply_inv(u);
                self.h.apply_inv_conj(l);
            }
            Half::Lower => {
                self.h.apply_inv_conj(u);
                self.h.apply_inv(l);
            }
        }
    }

    /// x <- Q x
    pub fn apply(&self, x: &mut [C64]) {
        let half = self.half;
        let (u, l) = self.split(x);
        match half {
            Half::Upper => {
                self.h.apply(u);
                self.h.apply_conj(l);
            }
            Half::Lower => {
                self.h.apply_conj(u);
                self.h.apply(l);
            }
        }
    }

    /// x <- Q^H x
    pub fn apply_adjoint(&self, x: &mut [C64]) {
        let half = self.half;
        let (u, l) = self.split(x);
        match half {
            Half::Upper => {
                self.h.apply_adjoint(u);
                self.h.apply_adjoint_conj(l);
            }
            Half::Lower => {
                self.h.apply_adjoint_conj(u);
                self.h.apply_adjoint(l);
            }
        }
    }
}

/// Builds the paired reflector zeroing entries `lo+1..hi` of the chosen half
/// of `u` (0-based, half-open).
pub fn embed_hyperbolic_householder(
    u: &[C64],
    s: &Signature,
    range: Range<usize>,
    half: Half,
    policy: PivotPolicy,
) -> Result<(HyperbolicHouseholder, Signature)> {
    let n = s.m();
    if u.len() != 2 * n {
        return Err(BsepError::DimensionMismatch { expected: 2 * n, found: u.len() });
    }
    if range.start >= range.end || range.end > n {
        return Err(BsepError::DimensionMismatch { expected: n, found: range.end });
    }
    let off = match half {
        Half::Upper => 0,
        Half::Lower => n,
    };
    let a = &u[off + range.start..off + range.end];
    let j = &s.j()[range.clone()];
    let h = make_householder_like(a, j, policy).map_err(|e| match e {
        BsepError::IsotropicVector { form, norm2, .. } => BsepError::IsotropicVector { position: range.start, form, norm2 },
        other => other,
    })?;
    let mut sig_out = s.clone();
    sig_out.swap(range.start, range.start + h.r);
    let hh = HyperbolicHouseholder { n, lo: range.start, half, h, sig_out: sig_out.clone() };
    Ok((hh, sig_out))
}

/// Rotation on the pair (l, n + l) with Q^{-1} = [[c, s], [conj(s), c]].
///
/// `sign_flip` = c^2 - |s|^2 is the factor applied to the signature entry l,
/// and Q = sign_flip * [[c, -s], [-conj(s), c]].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicGivens {
    pub l: usize,
    pub c: f64,
    pub s: C64,
    pub sign_flip: f64,
    /// Set when |alpha| and |beta| agree to within a factor 1 + 1e-6.
    pub near_breakdown: bool,
}

/// Builds the rotation whose inverse maps (alpha, beta) to (*, 0).
pub fn make_hyperbolic_givens(alpha: C64, beta: C64, l: usize) -> Result<HyperbolicGivens> {
    let (a, b) = (alpha.norm(), beta.norm());
    let big = a.max(b);
    if (a - b).abs() <= GIVENS_BREAKDOWN_TOL * big || !big.is_finite() {
        return Err(BsepError::HyperbolicBreakdown { index: l });
    }
    let near_breakdown = big <= GIVENS_WARN_RATIO * a.min(b);
    let ph = -phase(alpha) * phase(beta).conj();
    let (c, s, sign_flip) = if a > b {
        let r = b / a;
        let d = ((1.0 - r) * (1.0 + r)).sqrt();
        (1.0 / d, ph * (r / d), 1.0)
    } else {
        let r = a / b;
        let d = ((1.0 - r) * (1.0 + r)).sqrt();
        (r / d, ph / d, -1.0)
    };
    Ok(HyperbolicGivens { l, c, s, sign_flip, near_breakdown })
}

/// (x, y) <- [[c, s], [conj(s), c]] (x, y) with c^2 - |s|^2 = sign, where
/// the second output is formed from the first (the mixed form), which
/// avoids the cancellation of the direct products when |c| and |s| are
/// large.
pub fn mixed_rotate(c: f64, s: C64, sign: f64, x: C64, y: C64) -> (C64, C64) {
    if c.abs() >= s.norm() {
        let x2 = c * x + s * y;
        (x2, (s.conj() * x2 + sign * y) / c)
    } else {
        let y2 = s.conj() * x + c * y;
        ((c * y2 - sign * y) / s.conj(), y2)
    }
}

impl HyperbolicGivens {
    /// The identity rotation at index l.
    pub fn identity(l: usize) -> Self {
        HyperbolicGivens { l, c: 1.0, s: ZERO, sign_flip: 1.0, near_breakdown: false }
    }

    /// x <- Q^{-1} x on a 2n-vector.
    pub fn apply_inv(&self, x: &mut [C64]) {
        let n = x.len() / 2;
        let (p, q) = mixed_rotate(self.c, self.s, self.sign_flip, x[self.l], x[n + self.l]);
        x[self.l] = p;
        x[n + self.l] = q;
    }

    /// x <- Q x on a 2n-vector.
    pub fn apply(&self, x: &mut [C64]) {
        let n = x.len() / 2;
        let f = self.sign_flip;
        let (p, q) = mixed_rotate(f * self.c, -f * self.s, f, x[self.l], x[n + self.l]);
        x[self.l] = p;
        x[n + self.l] = q;
    }

    /// Q is Hermitian, so Q^H x = Q x.
    pub fn apply_adjoint(&self, x: &mut [C64]) {
        self.apply(x);
    }

    pub fn update_signature(&self, s: &mut Signature) {
        if self.sign_flip < 0.0 {
            s.flip(self.l);
        }
    }
}

/// Relative size of the entries `1..` of `x` against |x|.
pub fn trailing_ratio(x: &[C64]) -> f64 {
    let t = norm2(&x[1.min(x.len())..]);
    let a = norm2(x);
    if a == 0.0 {
        0.0
    } else {
        t / a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ComplexDense;
    use crate::structure::{check_structure, StructureClaim};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// Dense matrix of an operator given by its action on columns.
    fn dense_of(k: usize, f: impl Fn(&mut [C64])) -> ComplexDense {
        let mut m = ComplexDense::identity(k);
        for j in 0..k {
            f(m.col_mut(j));
        }
        m
    }

    #[test]
    fn reflector_examples() {
        let h = make_householder_like(&[c(3.0), c(4.0)], &[1, 1], PivotPolicy::FirstValid).unwrap();
        let mut x = vec![c(3.0), c(4.0)];
        h.apply_inv(&mut x);
        assert!((x[0] - c(-5.0)).norm() < 1e-14 && x[1].norm() < 1e-14);
        assert_eq!(h.alpha, c(-5.0));

        let h = make_householder_like(&[c(5.0), c(3.0)], &[1, -1], PivotPolicy::FirstValid).unwrap();
        assert_eq!(h.r, 0);
        let mut x = vec![c(5.0), c(3.0)];
        h.apply_inv(&mut x);
        assert!((x[0] - c(-4.0)).norm() < 1e-14 && x[1].norm() < 1e-14);

        let h = make_householder_like(&[c(1.0), ZERO, ZERO], &[1, 1, 1], PivotPolicy::MaxStability).unwrap();
        let mut x = vec![c(1.0), ZERO, ZERO];
        h.apply_inv(&mut x);
        assert_eq!(x, vec![c(-1.0), ZERO, ZERO]);
    }

    #[test]
    fn reflector_rejects_isotropic_and_unpivotable() {
        let e = make_householder_like(&[c(1.0), c(1.0)], &[1, -1], PivotPolicy::FirstValid);
        assert!(matches!(e, Err(BsepError::IsotropicVector { .. })));
    }

    #[test]
    fn reflector_congruence_and_inverse() {
        let a = vec![C64::new(0.2, 0.1), C64::new(-1.5, 0.4), C64::new(0.3, -0.9), C64::new(0.7, 0.0)];
        let j = vec![1, -1, -1, 1];
        for policy in [PivotPolicy::FirstValid, PivotPolicy::MaxStability] {
            let h = make_householder_like(&a, &j, policy).unwrap();
            let hm = dense_of(4, |x| h.apply(x));
            let hi = dense_of(4, |x| h.apply_inv(x));
            let ha = dense_of(4, |x| h.apply_adjoint(x));
            assert!(hm.matmul(&hi).sub(&ComplexDense::identity(4)).norm_max() < 1e-13);
            assert!(ha.sub(&hm.adjoint()).norm_max() < 1e-13);
            let jm = ComplexDense::from_diag(&j.iter().map(|&s| c(s as f64)).collect::<Vec<_>>());
            let jo = ComplexDense::from_diag(&h.j_out.iter().map(|&s| c(s as f64)).collect::<Vec<_>>());
            assert!(hm.adjoint().matmul(&jm).matmul(&hm).sub(&jo).norm_max() < 1e-12);
            let mut x = a.clone();
            h.apply_inv(&mut x);
            assert!(trailing_ratio(&x) < 1e-13);
            let conj_ok = dense_of(4, |x| h.apply_conj(x)).sub(&hm.conj()).norm_max();
            assert!(conj_ok < 1e-13);
            let conj_inv = dense_of(4, |x| h.apply_inv_conj(x)).sub(&hi.conj()).norm_max();
            assert!(conj_inv < 1e-13);
            let conj_adj = dense_of(4, |x| h.apply_adjoint_conj(x)).sub(&hm.conj().adjoint()).norm_max();
            assert!(conj_adj < 1e-13);
        }
    }

    #[test]
    fn max_stability_picks_largest_admissible() {
        let a = vec![c(0.1), c(-3.0), c(2.0)];
        let h = make_householder_like(&a, &[1, 1, 1], PivotPolicy::MaxStability).unwrap();
        assert_eq!(h.r, 1);
        let h = make_householder_like(&a, &[1, -1, 1], PivotPolicy::MaxStability).unwrap();
        // form = 0.01 - 9 + 4 < 0, so only index 1 is admissible
        assert_eq!(h.r, 1);
    }

    #[test]
    fn embedded_reflector_is_gamma_unitary() {
        let n = 4;
        let s = Signature::new(vec![1, -1, 1, 1]).unwrap();
        let u: Vec<C64> = (0..2 * n).map(|i| C64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos())).collect();
        for half in [Half::Upper, Half::Lower] {
            let (q, sout) = embed_hyperbolic_householder(&u, &s, 1..4, half, PivotPolicy::MaxStability).unwrap();
            let qm = dense_of(2 * n, |x| q.apply(x));
            let qi = dense_of(2 * n, |x| q.apply_inv(x));
            let qa = dense_of(2 * n, |x| q.apply_adjoint(x));
            assert!(qm.matmul(&qi).sub(&ComplexDense::identity(2 * n)).norm_max() < 1e-13);
            assert!(qa.sub(&qm.adjoint()).norm_max() < 1e-13);
            let g = qm.adjoint().matmul(&s.to_dense()).matmul(&qm);
            assert!(g.sub(&sout.to_dense()).norm_max() < 1e-12);
            assert!(check_structure(&qm, StructureClaim::PiPlus, &s, 1e-14).holds);
            let mut x = u.clone();
            q.apply_inv(&mut x);
            let off = if half == Half::Upper { 0 } else { n };
            assert!(x[off + 2].norm() < 1e-13 && x[off + 3].norm() < 1e-13);
        }
    }

    #[test]
    fn embedded_isotropic_slice_errors() {
        let s = Signature::new(vec![1, 1, -1]).unwrap();
        let u = vec![ZERO, c(1.0), c(1.0), ZERO, ZERO, ZERO];
        let e = embed_hyperbolic_householder(&u, &s, 1..3, Half::Upper, PivotPolicy::FirstValid);
        assert!(matches!(e, Err(BsepError::IsotropicVector { position: 1, .. })));
    }

    #[test]
    fn givens_examples() {
        let g = make_hyperbolic_givens(c(5.0), c(3.0), 0).unwrap();
        assert!((g.c - 1.25).abs() < 1e-15 && (g.s.norm() - 0.75).abs() < 1e-15);
        assert_eq!(g.sign_flip, 1.0);
        let mut x = vec![c(5.0), c(3.0)];
        g.apply_inv(&mut x);
        assert!(x[1].norm() < 1e-14);

        let g = make_hyperbolic_givens(c(3.0), c(5.0), 0).unwrap();
        assert!((g.c - 0.75).abs() < 1e-15 && (g.s.norm() - 1.25).abs() < 1e-15);
        assert_eq!(g.sign_flip, -1.0);
        let mut x = vec![c(3.0), c(5.0)];
        g.apply_inv(&mut x);
        assert!(x[1].norm() < 1e-14);

        assert_eq!(make_hyperbolic_givens(c(1.0), c(1.0), 2), Err(BsepError::HyperbolicBreakdown { index: 2 }));
    }

    #[test]
    fn givens_congruence() {
        let n = 3;
        for (a, b) in [(C64::new(0.3, 1.2), C64::new(-0.4, 0.1)), (C64::new(0.1, -0.2), C64::new(2.0, 0.5))] {
            let g = make_hyperbolic_givens(a, b, 1).unwrap();
            assert!((g.c * g.c - g.s.norm_sqr() - g.sign_flip).abs() < 1e-14);
            let s = Signature::new(vec![1, -1, 1]).unwrap();
            let qm = dense_of(2 * n, |x| g.apply(x));
            let qi = dense_of(2 * n, |x| g.apply_inv(x));
            assert!(qm.matmul(&qi).sub(&ComplexDense::identity(2 * n)).norm_max() < 1e-13);
            assert!(qm.sub(&qm.adjoint()).norm_max() < 1e-15);
            let mut sout = s.clone();
            g.update_signature(&mut sout);
            let gm = qm.adjoint().matmul(&s.to_dense()).matmul(&qm);
            assert!(gm.sub(&sout.to_dense()).norm_max() < 1e-12);
            let mut x = vec![ZERO; 2 * n];
            x[1] = a;
            x[n + 1] = b;
            g.apply_inv(&mut x);
            assert!(x[n + 1].norm() < 1e-13 * a.norm().max(b.norm()));
        }
    }
}
