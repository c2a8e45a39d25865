//! Dense structure-preserving eigensolver: reduction to the tridiagonal
//! canonical form, implicit filtered sweeps, deflation, closed-form
//! eigenvalue extraction, and eigenvectors by two-stage inverse iteration.

use std::ops::Range;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BsepError, Result};
use crate::flops::Flops;
use crate::hamiltonian::{expand_dense, BsepHamiltonian};
use crate::hyperbolic::{make_householder_like, make_hyperbolic_givens, Half, HouseholderLike, HyperbolicGivens, PivotPolicy};
use crate::linalg::{det, lu_factor, BandLu};
use crate::matrix::{dotc, norm2, ComplexDense, ZERO};
use crate::pimatrix::{PiKind, PiMatrix, PiSign, PiTridiagonal};
use crate::piwork::PiWork;
use crate::signature::Signature;
use crate::structure::{check_structure, StructureClaim};
use crate::validation::residual_norm;

/// Result of reducing a matrix to tridiagonal canonical form.
#[derive(Debug, Clone)]
pub struct TridiagReduction {
    pub t: PiTridiagonal,
    /// Final metric; equals diag(delta, -delta) of `t`.
    pub s: Signature,
    /// Q with Q^{-1} M Q = T, when requested. Q^{-1} = S Q^H S_0.
    pub accumulator: Option<PiMatrix>,
    /// Product of |c| + |s| over all rotations.
    pub growth_factor: f64,
    pub flops: u64,
    pub near_breakdowns: usize,
}

pub enum TridiagInput<'a> {
    Hamiltonian(&'a BsepHamiltonian),
    /// A dense 2n x 2n matrix, Hermitian in the standard metric with the
    /// block structure matching the requested kind.
    Dense(&'a ComplexDense),
}

fn dense_blocks(m: &ComplexDense, kind: PiKind) -> Result<PiMatrix> {
    if !m.is_square() {
        return Err(BsepError::DimensionMismatch { expected: m.rows(), found: m.cols() });
    }
    if !m.rows().is_multiple_of(2) {
        return Err(BsepError::OddLength(m.rows()));
    }
    let n = m.rows() / 2;
    let claim = match kind {
        PiKind::PiMinus => StructureClaim::PiMinusHermitian,
        PiKind::PiPlus => StructureClaim::PiPlusHermitian,
    };
    let rep = check_structure(m, claim, &Signature::standard(n), 1e-10);
    if !rep.holds {
        return Err(BsepError::StructureViolation { what: "input lacks the claimed Hermitian block structure", deviation: rep.deviation });
    }
    Ok(PiMatrix { sign: kind.sign(), g1: m.block(0, n, 0, n), g2: m.block(0, n, n, 2 * n) })
}

fn householder_at(a: &[C64], j: &[i8], position: usize) -> Result<HouseholderLike> {
    make_householder_like(a, j, PivotPolicy::MaxStability).map_err(|e| remap_position(e, position))
}

fn remap_position(e: BsepError, position: usize) -> BsepError {
    match e {
        BsepError::IsotropicVector { form, norm2, .. } => BsepError::IsotropicVector { position, form, norm2 },
        other => other,
    }
}

/// Reduces column `c` (and by symmetry row `c`) to tridiagonal shape using
/// transforms on the index range `r`; `win` is the range of columns with
/// nonzeros in rows `r`.
fn eliminate_column(w: &mut PiWork, c: usize, r: Range<usize>, win: Range<usize>) -> Result<()> {
    let s = w.sign.sgn();
    let l = r.start;
    if r.len() >= 2 && r.clone().skip(1).any(|i| w.g2[(i, c)] != ZERO) {
        let a: Vec<C64> = r.clone().map(|i| s * w.g2[(i, c)].conj()).collect();
        let h = householder_at(&a, &w.sig.j()[r.clone()], l)?;
        w.sym_hh(&h, Half::Lower, r.clone(), win.clone());
    }
    let beta = s * w.g2[(l, c)].conj();
    if beta != ZERO {
        let g = make_hyperbolic_givens(w.g1[(l, c)], beta, l)?;
        w.sym_givens(&g, r.clone(), win.clone());
    }
    if r.len() >= 2 && r.clone().skip(1).any(|i| w.g1[(i, c)] != ZERO) {
        let a: Vec<C64> = w.g1.col(c)[r.clone()].to_vec();
        let h = householder_at(&a, &w.sig.j()[r.clone()], l)?;
        w.sym_hh(&h, Half::Upper, r.clone(), win);
    }
    for i in r.clone() {
        if i > l {
            w.g1[(i, c)] = ZERO;
        }
        w.g2[(i, c)] = ZERO;
    }
    w.fill_row_from_col(c, r);
    Ok(())
}

fn project(w: &PiWork, kind: PiKind) -> PiTridiagonal {
    let m = w.n();
    let alpha = (0..m).map(|j| w.g1[(j, j)].re).collect();
    let beta = (0..m.saturating_sub(1)).map(|j| w.g1[(j + 1, j)]).collect();
    let gamma = match kind {
        PiKind::PiMinus => (0..m).map(|j| -w.g2[(j, j)].conj()).collect(),
        PiKind::PiPlus => vec![ZERO; m],
    };
    PiTridiagonal { kind, alpha, beta, gamma, delta: w.sig.j().to_vec() }
}

/// Largest entry of the working matrix outside the tridiagonal pattern.
fn offband(w: &PiWork) -> f64 {
    let m = w.n();
    let mut dev: f64 = 0.0;
    for j in 0..m {
        for i in 0..m {
            if i.abs_diff(j) > 1 {
                dev = dev.max(w.g1[(i, j)].norm());
            }
            if i != j {
                dev = dev.max(w.g2[(i, j)].norm());
            }
        }
    }
    dev
}

/// Reduces the Hamiltonian (or a dense structured matrix) to tridiagonal
/// canonical form by a similarity with paired reflectors and rotations.
///
/// For a Hamiltonian with `PiKind::PiPlus` the square of the dense
/// expansion is reduced.
pub fn tridiagonalize(input: TridiagInput<'_>, kind: PiKind, keep_accumulator: bool) -> Result<TridiagReduction> {
    let p = match (input, kind) {
        (TridiagInput::Hamiltonian(h), PiKind::PiMinus) => {
            PiMatrix { sign: PiSign::Minus, g1: h.a().clone(), g2: h.b().clone() }
        }
        (TridiagInput::Hamiltonian(h), PiKind::PiPlus) => {
            let d = expand_dense(h)?;
            dense_blocks(&d.matmul(&d), kind)?
        }
        (TridiagInput::Dense(m), kind) => dense_blocks(m, kind)?,
    };
    let n = p.n();
    let mut w = PiWork::new(p, Signature::standard(n), keep_accumulator);
    for c in 0..n.saturating_sub(1) {
        eliminate_column(&mut w, c, c + 1..n, c..n)?;
    }
    Ok(TridiagReduction {
        t: project(&w, kind),
        s: w.sig.clone(),
        accumulator: w.accumulator(),
        growth_factor: w.growth,
        flops: w.flops.get(),
        near_breakdowns: w.near_breakdowns,
    })
}

/// Exact 1-norm of the expanded tridiagonal matrix.
pub fn tridiag_norm_one(t: &PiTridiagonal) -> f64 {
    let m = t.order();
    (0..m)
        .map(|j| {
            let mut s = t.alpha[j].abs() + t.gamma[j].norm();
            if j + 1 < m {
                s += t.beta[j].norm();
            }
            if j > 0 {
                s += t.beta[j - 1].norm();
            }
            s
        })
        .fold(0.0, f64::max)
}

/// Principal sub-block on indices `lo..hi`.
fn sub_block(t: &PiTridiagonal, lo: usize, hi: usize) -> PiTridiagonal {
    PiTridiagonal {
        kind: t.kind,
        alpha: t.alpha[lo..hi].to_vec(),
        beta: t.beta[lo..hi - 1].to_vec(),
        gamma: t.gamma[lo..hi].to_vec(),
        delta: t.delta[lo..hi].to_vec(),
    }
}

fn write_block(t: &mut PiTridiagonal, lo: usize, b: &PiTridiagonal) {
    let hi = lo + b.order();
    t.alpha[lo..hi].copy_from_slice(&b.alpha);
    t.beta[lo..hi - 1].copy_from_slice(&b.beta);
    t.gamma[lo..hi].copy_from_slice(&b.gamma);
    t.delta[lo..hi].copy_from_slice(&b.delta);
}

/// Polynomial whose value at T drives one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Filter {
    /// x^2 - y with real y (real or purely imaginary shift).
    Quadratic { y: f64 },
    /// (x^2 - y)(x^2 - conj(y)) for complex y.
    Quartic { y: C64 },
    /// x^2 - trace x + det, used for the plus kind.
    PlusQuadratic { trace: f64, det: f64 },
}

impl Filter {
    /// Filter for a shift: the minus kind uses the shift's square and its
    /// conjugate, the plus kind the shift and its conjugate.
    pub fn from_shift(kind: PiKind, shift: C64) -> Self {
        match kind {
            PiKind::PiMinus => {
                let y = shift * shift;
                if shift.re == 0.0 || shift.im == 0.0 || y.im.abs() <= 1e-14 * y.norm() {
                    Filter::Quadratic { y: y.re }
                } else {
                    Filter::Quartic { y }
                }
            }
            PiKind::PiPlus => Filter::PlusQuadratic { trace: 2.0 * shift.re, det: shift.norm_sqr() },
        }
    }

    pub fn degree(&self) -> usize {
        match self {
            Filter::Quadratic { .. } | Filter::PlusQuadratic { .. } => 2,
            Filter::Quartic { .. } => 4,
        }
    }

    /// One root of the filter in the eigenvalue variable.
    pub fn shift(&self) -> C64 {
        match *self {
            Filter::Quadratic { y } => C64::new(y, 0.0).sqrt(),
            Filter::Quartic { y } => y.sqrt(),
            Filter::PlusQuadratic { trace, det } => {
                C64::new(0.5 * trace, 0.0) + C64::new(0.25 * trace * trace - det, 0.0).sqrt()
            }
        }
    }

    /// p(T) e_1 (length 2m in standard ordering).
    fn first_column(&self, t: &PiTridiagonal, flops: &mut Flops) -> Vec<C64> {
        let m = t.order();
        let mut e = vec![ZERO; 2 * m];
        e[0] = C64::new(1.0, 0.0);
        let mut apply = |x: &[C64]| {
            flops.cma(8 * m);
            t.apply(x)
        };
        let mut v: Vec<C64> = match *self {
            Filter::Quadratic { y } => {
                let t1 = apply(&e);
                let t2 = apply(&t1);
                t2.iter().zip(&e).map(|(a, b)| a - y * b).collect()
            }
            Filter::Quartic { y } => {
                let t1 = apply(&e);
                let t2 = apply(&t1);
                let t3 = apply(&t2);
                let t4 = apply(&t3);
                let (c2, c0) = (2.0 * y.re, y.norm_sqr());
                (0..2 * m).map(|i| t4[i] - c2 * t2[i] + c0 * e[i]).collect()
            }
            Filter::PlusQuadratic { trace, det } => {
                let t1 = apply(&e);
                let t2 = apply(&t1);
                (0..2 * m).map(|i| t2[i] - trace * t1[i] + det * e[i]).collect()
            }
        };
        // the (n+1, 1) entry of a plus-type Hermitian matrix vanishes
        v[m] = ZERO;
        v
    }
}

/// One elementary transform of a sweep, in block-local indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Reflector { h: HouseholderLike, half: Half, lo: usize },
    Rotation(HyperbolicGivens),
}

/// The transform Q_0 mapping the filtered first column to a multiple of e_1.
#[derive(Debug, Clone)]
pub struct FilterTransform {
    pub filter: Filter,
    /// p(T) e_1 over the leading indices that it touches.
    pub first_column: Vec<C64>,
    pub steps: Vec<Step>,
    /// Number of leading indices acted on.
    pub span: usize,
}

impl FilterTransform {
    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    /// x <- Q_0^{-1} x on a 2m-vector.
    pub fn apply_inv(&self, x: &mut [C64]) {
        let m = x.len() / 2;
        for step in &self.steps {
            match step {
                Step::Reflector { h, half, lo } => {
                    let k = h.k();
                    let (up, low) = x.split_at_mut(m);
                    let (u, l) = (&mut up[*lo..lo + k], &mut low[*lo..lo + k]);
                    match half {
                        Half::Upper => {
                            h.apply_inv(u);
                            h.apply_inv_conj(l);
                        }
                        Half::Lower => {
                            h.apply_inv_conj(u);
                            h.apply_inv(l);
                        }
                    }
                }
                Step::Rotation(g) => g.apply_inv(x),
            }
        }
    }
}

fn build_filter_transform(t: &PiTridiagonal, filter: Filter, flops: &mut Flops) -> Result<FilterTransform> {
    let k = (filter.degree() + 1).min(t.order());
    let lead = sub_block(t, 0, k);
    let first_column = filter.first_column(&lead, flops);
    let mut v = first_column.clone();
    let mut sig = lead.signature();
    let mut steps = Vec::new();
    if k >= 3 && v[k + 2..2 * k].iter().any(|z| *z != ZERO) {
        let h = householder_at(&v[k + 1..2 * k], &sig.j()[1..k], 1)?;
        h.apply_inv_conj(&mut v[1..k]);
        h.apply_inv(&mut v[k + 1..2 * k]);
        sig.swap(1, 1 + h.r);
        steps.push(Step::Reflector { h, half: Half::Lower, lo: 1 });
    }
    if k >= 2 && v[k + 1] != ZERO {
        let g = make_hyperbolic_givens(v[1], v[k + 1], 1)?;
        g.apply_inv(&mut v);
        g.update_signature(&mut sig);
        steps.push(Step::Rotation(g));
    }
    if v[1..k].iter().any(|z| *z != ZERO) {
        let h = householder_at(&v[0..k], sig.j(), 0)?;
        steps.push(Step::Reflector { h, half: Half::Upper, lo: 0 });
    }
    Ok(FilterTransform { filter, first_column, steps, span: k })
}

/// Transform mapping p(T) e_1 to a multiple of e_1, for the filter built
/// from `shift`.
pub fn filter_first_column(t: &PiTridiagonal, shift: C64) -> Result<FilterTransform> {
    build_filter_transform(t, Filter::from_shift(t.kind, shift), &mut Flops::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepReport {
    pub filter: Filter,
    pub flops: u64,
    /// Product of |c| + |s| over the sweep's rotations.
    pub growth: f64,
    pub near_breakdowns: usize,
    /// Largest entry left outside the tridiagonal pattern before projection.
    pub offband: f64,
}

/// One filtered sweep returning the working matrix before it is projected
/// back onto the tridiagonal pattern.
pub fn implicit_sweep_raw(t: &PiTridiagonal, filter: Filter) -> Result<(PiWork, SweepReport)> {
    let m = t.order();
    let mut w = PiWork::new(t.to_pi_matrix(), t.signature(), false);
    let mut report = SweepReport { filter, flops: 0, growth: 1.0, near_breakdowns: 0, offband: 0.0 };
    if m < 2 {
        return Ok((w, report));
    }
    let mut f = Flops::new();
    let q0 = build_filter_transform(t, filter, &mut f)?;
    let d = q0.span;
    let w0 = 0..(d + 1).min(m);
    for step in &q0.steps {
        match step {
            Step::Reflector { h, half, lo } => w.sym_hh(h, *half, *lo..lo + h.k(), w0.clone()),
            Step::Rotation(g) => w.sym_givens(g, w0.clone(), w0.clone()),
        }
    }
    for c in 0..m - 1 {
        let r = c + 1..(c + 1 + d).min(m);
        let win = c..(r.end + 1).min(m);
        eliminate_column(&mut w, c, r, win)?;
    }
    report.flops = w.flops.get() + f.get();
    report.growth = w.growth;
    report.near_breakdowns = w.near_breakdowns;
    report.offband = offband(&w);
    Ok((w, report))
}

/// One sweep with a given filter, projected back to tridiagonal form.
pub fn implicit_sweep_filtered(t: &PiTridiagonal, filter: Filter) -> Result<(PiTridiagonal, SweepReport)> {
    let (w, report) = implicit_sweep_raw(t, filter)?;
    Ok((project(&w, t.kind), report))
}

/// One implicit sweep with the filter built from `shift`.
pub fn implicit_sweep(t: &PiTridiagonal, s: &Signature, shift: C64) -> Result<(PiTridiagonal, Signature, SweepReport)> {
    if s.j() != t.delta.as_slice() {
        return Err(BsepError::StructureViolation { what: "signature does not match the tridiagonal delta", deviation: 1.0 });
    }
    let (nt, rep) = implicit_sweep_filtered(t, Filter::from_shift(t.kind, shift))?;
    let sig = nt.signature();
    Ok((nt, sig, rep))
}

/// Eigenvalues lambda with lambda^2 = y, listed as pairs (lambda, -conj(lambda)).
fn from_square(y: C64) -> Vec<C64> {
    if y.im == 0.0 {
        if y.re >= 0.0 {
            let l = y.re.sqrt();
            vec![C64::new(l, 0.0), C64::new(-l, 0.0)]
        } else {
            let l = (-y.re).sqrt();
            vec![C64::new(0.0, l), C64::new(0.0, -l)]
        }
    } else {
        let l = y.sqrt();
        vec![l, -l.conj(), -l, l.conj()]
    }
}

/// Roots in y = lambda^2 of the (even) characteristic polynomial of a
/// 4 x 4 matrix of the minus kind.
fn even_quartic_roots(mtx: &ComplexDense) -> [C64; 2] {
    let mut tr2 = ZERO;
    for i in 0..4 {
        for j in 0..4 {
            tr2 += mtx[(i, j)] * mtx[(j, i)];
        }
    }
    let c2 = -0.5 * tr2.re;
    let c0 = det(mtx).re;
    let disc = c2 * c2 - 4.0 * c0;
    if disc >= 0.0 {
        let q = -0.5 * (c2 + disc.sqrt().copysign(c2));
        let y1 = q;
        let y2 = if q != 0.0 { c0 / q } else { 0.0 };
        [C64::new(y1, 0.0), C64::new(y2, 0.0)]
    } else {
        let y = C64::new(-0.5 * c2, 0.5 * (-disc).sqrt());
        [y, y.conj()]
    }
}

/// Eigenvalues of a 2 x 2 upper-left block of the plus kind.
fn plus_pair(tr: f64, dt: f64) -> [C64; 2] {
    let disc = 0.25 * tr * tr - dt;
    if disc >= 0.0 {
        let q = 0.5 * tr + disc.sqrt().copysign(tr);
        let other = if q != 0.0 { dt / q } else { 0.0 };
        [C64::new(q, 0.0), C64::new(other, 0.0)]
    } else {
        let r = C64::new(0.5 * tr, (-disc).sqrt());
        [r, r.conj()]
    }
}

/// A decoupled diagonal block of the converged form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuasiBlock {
    pub start: usize,
    pub size: usize,
    pub eigenvalues: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct QuasiDiagonal {
    pub t: PiTridiagonal,
    pub blocks: Vec<QuasiBlock>,
    pub s: Signature,
}

fn extract_block(t: &PiTridiagonal, lo: usize, hi: usize) -> QuasiBlock {
    let b = sub_block(t, lo, hi);
    let eigenvalues = match (t.kind, hi - lo) {
        (PiKind::PiMinus, 1) => from_square(C64::new(b.alpha[0] * b.alpha[0] - b.gamma[0].norm_sqr(), 0.0)),
        (PiKind::PiMinus, _) => {
            let ys = even_quartic_roots(&b.to_dense());
            if ys[0].im == 0.0 {
                let mut v = from_square(ys[0]);
                v.extend(from_square(ys[1]));
                v
            } else {
                from_square(ys[0])
            }
        }
        (PiKind::PiPlus, 1) => vec![C64::new(b.alpha[0], 0.0); 2],
        (PiKind::PiPlus, _) => {
            let g = b.g1();
            let tr = (g[(0, 0)] + g[(1, 1)]).re;
            let dt = (g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]).re;
            let [a, c] = plus_pair(tr, dt);
            vec![a, c, a.conj(), c.conj()]
        }
    };
    QuasiBlock { start: lo, size: hi - lo, eigenvalues }
}

/// Filter from the trailing 2 x 2 block of an unreduced block.
fn choose_filter(b: &PiTridiagonal) -> Filter {
    let m = b.order();
    let tail = sub_block(b, m - 2, m);
    match b.kind {
        PiKind::PiMinus => {
            let ys = even_quartic_roots(&tail.to_dense());
            if ys[0].im != 0.0 {
                Filter::Quartic { y: ys[0] }
            } else {
                let target = b.alpha[m - 1] * b.alpha[m - 1] - b.gamma[m - 1].norm_sqr();
                let y = if (ys[0].re - target).abs() <= (ys[1].re - target).abs() { ys[0].re } else { ys[1].re };
                Filter::Quadratic { y }
            }
        }
        PiKind::PiPlus => {
            let g = tail.g1();
            let tr = (g[(0, 0)] + g[(1, 1)]).re;
            let dt = (g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]).re;
            Filter::PlusQuadratic { trace: tr, det: dt }
        }
    }
}

fn exceptional_filter(kind: PiKind, base: &Filter, scale: f64, rng: &mut ChaCha8Rng) -> Filter {
    let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let shift = base.shift() + C64::from_polar(scale, theta);
    Filter::from_shift(kind, shift)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GqrOptions {
    /// Relative deflation threshold on the subdiagonal.
    pub tol_deflate: f64,
    /// Sweeps allowed between consecutive deflations.
    pub max_sweeps_per_eigenvalue: usize,
    /// Sweep counts (since the last deflation) at which an exceptional
    /// shift is used.
    pub exceptional_at: [usize; 2],
    /// Retries with a perturbed shift after a breakdown within one sweep.
    pub max_breakdown_retries: usize,
    /// Relative size of the exceptional shift perturbation.
    pub exceptional_scale: f64,
    pub seed: u64,
    pub keep_accumulator: bool,
}

impl Default for GqrOptions {
    fn default() -> Self {
        GqrOptions {
            tol_deflate: 1e-14,
            max_sweeps_per_eigenvalue: 30,
            exceptional_at: [10, 20],
            max_breakdown_retries: 5,
            exceptional_scale: 1e-2,
            seed: 0x5eed,
            keep_accumulator: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationStats {
    pub sweeps: usize,
    pub exceptional_shifts: usize,
    pub breakdown_retries: usize,
    pub deflations: usize,
    /// Most sweeps spent between two deflations.
    pub max_sweeps_between_deflations: usize,
    pub reduction_flops: u64,
    pub sweep_flops: u64,
    pub max_growth: f64,
    pub near_breakdowns: usize,
}

#[derive(Debug, Clone)]
pub struct GqrResult {
    pub quasi: QuasiDiagonal,
    pub eigenvalues: Vec<C64>,
    pub stats: IterationStats,
    pub reduction: TridiagReduction,
}

fn negligible(t: &PiTridiagonal, j: usize, tol: f64, norm: f64) -> bool {
    let s = t.alpha[j].abs() + t.gamma[j].norm() + t.alpha[j + 1].abs() + t.gamma[j + 1].norm();
    let scale = if s > 0.0 { s } else { norm };
    t.beta[j].norm() <= tol * scale
}

/// Runs the shifted iteration on a tridiagonal matrix until it decouples
/// into blocks of order at most two.
pub fn gqr_iterate(t: &PiTridiagonal, opts: &GqrOptions) -> Result<(QuasiDiagonal, Vec<C64>, IterationStats)> {
    gqr_iterate_observed(t, opts, |_| {})
}

/// As [`gqr_iterate`], calling `observe` with the full working matrix after
/// every accepted sweep.
pub fn gqr_iterate_observed(
    t: &PiTridiagonal,
    opts: &GqrOptions,
    mut observe: impl FnMut(&PiTridiagonal),
) -> Result<(QuasiDiagonal, Vec<C64>, IterationStats)> {
    let mut t = t.clone();
    let m = t.order();
    let norm = tridiag_norm_one(&t);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut stats = IterationStats { max_growth: 1.0, ..Default::default() };
    let mut blocks = Vec::new();
    let mut hi = m;
    let mut since = 0usize;
    while hi > 0 {
        for j in 0..hi - 1 {
            if t.beta[j] != ZERO && negligible(&t, j, opts.tol_deflate, norm) {
                t.beta[j] = ZERO;
            }
        }
        let mut lo = hi - 1;
        while lo > 0 && t.beta[lo - 1] != ZERO {
            lo -= 1;
        }
        if hi - lo <= 2 {
            blocks.push(extract_block(&t, lo, hi));
            stats.deflations += 1;
            stats.max_sweeps_between_deflations = stats.max_sweeps_between_deflations.max(since);
            since = 0;
            hi = lo;
            continue;
        }
        since += 1;
        if since > opts.max_sweeps_per_eigenvalue {
            return Err(BsepError::MaxIterationsExceeded { sweeps: stats.sweeps, remaining: hi });
        }
        let block = sub_block(&t, lo, hi);
        let base = choose_filter(&block);
        let scale = opts.exceptional_scale * tridiag_norm_one(&block).max(f64::MIN_POSITIVE);
        let mut filter = if opts.exceptional_at.contains(&since) {
            stats.exceptional_shifts += 1;
            exceptional_filter(t.kind, &base, scale, &mut rng)
        } else {
            base
        };
        let mut retries = 0;
        let (nb, rep) = loop {
            match implicit_sweep_filtered(&block, filter) {
                Ok(x) => break x,
                Err(e @ (BsepError::HyperbolicBreakdown { .. } | BsepError::IsotropicVector { .. } | BsepError::NoValidPivot)) => {
                    retries += 1;
                    stats.breakdown_retries += 1;
                    if retries > opts.max_breakdown_retries {
                        return Err(e);
                    }
                    filter = exceptional_filter(t.kind, &base, scale, &mut rng);
                }
                Err(e) => return Err(e),
            }
        };
        stats.sweeps += 1;
        stats.sweep_flops += rep.flops;
        stats.max_growth = stats.max_growth.max(rep.growth);
        stats.near_breakdowns += rep.near_breakdowns;
        write_block(&mut t, lo, &nb);
        observe(&t);
    }
    blocks.reverse();
    let eigenvalues = blocks.iter().flat_map(|b| b.eigenvalues.iter().copied()).collect();
    let s = t.signature();
    Ok((QuasiDiagonal { t, blocks, s }, eigenvalues, stats))
}

/// All eigenvalues of the Hamiltonian by reduction and shifted iteration.
pub fn gqr_eigenvalues(h: &BsepHamiltonian, opts: &GqrOptions) -> Result<GqrResult> {
    let reduction = tridiagonalize(TridiagInput::Hamiltonian(h), PiKind::PiMinus, opts.keep_accumulator)?;
    let (quasi, eigenvalues, mut stats) = gqr_iterate(&reduction.t, opts)?;
    stats.reduction_flops = reduction.flops;
    stats.max_growth = stats.max_growth.max(reduction.growth_factor);
    stats.near_breakdowns += reduction.near_breakdowns;
    Ok(GqrResult { quasi, eigenvalues, stats, reduction })
}

/// Tolerance factor on |T|_1 for convergence of tridiagonal inverse iteration.
pub const TRIDIAG_INVIT_TOL: f64 = 1e-13;

fn to_interleaved(x: &[C64]) -> Vec<C64> {
    let m = x.len() / 2;
    (0..2 * m).map(|i| if i % 2 == 0 { x[i / 2] } else { x[m + i / 2] }).collect()
}

fn from_interleaved(y: &[C64]) -> Vec<C64> {
    let m = y.len() / 2;
    (0..2 * m).map(|i| if i < m { y[2 * i] } else { y[2 * (i - m) + 1] }).collect()
}

fn start_vector(len: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..len).map(|i| C64::from_polar(1.0 + 0.1 * (i % 7) as f64, 0.7 * i as f64)).collect();
    let nv = norm2(&v);
    v.into_iter().map(|z| z / nv).collect()
}

/// Best (mu, u, absolute residual) found by shifted inverse iteration on T.
pub(crate) fn tridiag_inverse_iteration_best(t: &PiTridiagonal, mu0: C64, max_it: usize) -> (C64, Vec<C64>, f64) {
    let m = t.order();
    let nrm = tridiag_norm_one(t);
    let tol = TRIDIAG_INVIT_TOL * nrm;
    let floor = f64::EPSILON * nrm;
    let mut x = start_vector(2 * m);
    let mut mu = mu0;
    let mut best = (mu0, x.clone(), f64::INFINITY);
    for _ in 0..max_it.max(1) {
        let lu = BandLu::factor(2 * m, 2, 2, floor, |r, c| {
            let v = t.interleaved(r, c);
            if r == c {
                v - mu
            } else {
                v
            }
        });
        let mut y = to_interleaved(&x);
        lu.solve_in_place(&mut y);
        let y = from_interleaved(&y);
        let ny = norm2(&y);
        if !ny.is_finite() || ny == 0.0 {
            break;
        }
        let y: Vec<C64> = y.into_iter().map(|z| z / ny).collect();
        let ty = t.apply(&y);
        let rq = dotc(&y, &ty);
        let mu_new = if (rq - mu0).norm() <= 1e-4 * nrm.max(f64::MIN_POSITIVE) { rq } else { mu };
        let res = norm2(&ty.iter().zip(&y).map(|(a, b)| a - mu_new * b).collect::<Vec<_>>());
        if res < best.2 {
            best = (mu_new, y.clone(), res);
        }
        x = y;
        mu = mu_new;
        if res <= tol {
            break;
        }
    }
    best
}

/// Inverse iteration on the banded expansion of T with Rayleigh-quotient
/// updates of the shift. Returns the eigenvalue and a unit eigenvector in
/// standard ordering.
pub fn inverse_iteration_tridiag(t: &PiTridiagonal, s: &Signature, mu0: C64, max_it: usize) -> Result<(C64, Vec<C64>)> {
    if s.j() != t.delta.as_slice() {
        return Err(BsepError::StructureViolation { what: "signature does not match the tridiagonal delta", deviation: 1.0 });
    }
    if t.order() == 0 {
        return Err(BsepError::ZeroVector);
    }
    let nrm = tridiag_norm_one(t);
    let (mu, u, res) = tridiag_inverse_iteration_best(t, mu0, max_it);
    if !res.is_finite() {
        return Err(BsepError::SingularShift);
    }
    if res <= TRIDIAG_INVIT_TOL * nrm {
        Ok((mu, u))
    } else {
        Err(BsepError::NoConvergence { residual: res / nrm.max(f64::MIN_POSITIVE) })
    }
}

/// Residual level below which a pair is returned as is.
const EXACT_PAIR_RESIDUAL: f64 = 4.0 * f64::EPSILON;
/// Refinement fails when the final residual exceeds this.
const REFINE_FAILURE_RESIDUAL: f64 = 1e-6;

/// Inverse iteration on H - mu I with Rayleigh-quotient updates. A step is
/// accepted only when it lowers the residual r(mu, z).
pub fn refine_eigenpair(h: &BsepHamiltonian, mu: C64, z: &[C64], max_it: usize) -> Result<(C64, Vec<C64>, f64)> {
    let r0 = residual_norm(h, mu, z)?;
    if r0 <= EXACT_PAIR_RESIDUAL {
        return Ok((mu, z.to_vec(), r0));
    }
    let hd = expand_dense(h)?;
    let n2 = hd.rows();
    let floor = f64::EPSILON * h.norm_one();
    let nz = norm2(z);
    let mut best = (mu, z.iter().map(|v| v / nz).collect::<Vec<_>>(), r0);
    let mut shift = mu;
    for _ in 0..max_it {
        let mut a = hd.clone();
        for i in 0..n2 {
            a[(i, i)] -= shift;
        }
        let lu = lu_factor(&a, floor);
        let y = lu.solve(&best.1);
        let ny = norm2(&y);
        if !ny.is_finite() {
            return Err(BsepError::FactorizationFailure("inverse iteration produced a non-finite vector".into()));
        }
        if ny == 0.0 {
            break;
        }
        let y: Vec<C64> = y.into_iter().map(|v| v / ny).collect();
        let hy = h.apply(&y);
        let rq = dotc(&y, &hy);
        let r = residual_norm(h, rq, &y)?;
        if r < best.2 {
            best = (rq, y, r);
            shift = rq;
        } else {
            break;
        }
        if r <= EXACT_PAIR_RESIDUAL {
            break;
        }
    }
    if best.2 > REFINE_FAILURE_RESIDUAL {
        return Err(BsepError::NoConvergence { residual: best.2 });
    }
    Ok(best)
}

/// An eigenpair from the two-stage inverse iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    /// Eigenvalue from the shifted iteration.
    pub initial: C64,
    pub value: C64,
    pub vector: Vec<C64>,
    /// r(mu, z) after inverse iteration on T, mapped back to the Hamiltonian.
    pub residual_stage1: f64,
    /// r(mu, z) after refinement on the Hamiltonian.
    pub residual: f64,
}

/// Eigenpairs for every computed eigenvalue: inverse iteration on the
/// tridiagonal form, back-transformation by the reduction's accumulator,
/// then refinement on the Hamiltonian.
pub fn gqr_eigenpairs(h: &BsepHamiltonian, result: &GqrResult, refine_steps: usize) -> Result<Vec<Eigenpair>> {
    let q = result
        .reduction
        .accumulator
        .as_ref()
        .ok_or(BsepError::FactorizationFailure("reduction was run without keeping the accumulator".into()))?
        .to_dense();
    let t = &result.reduction.t;
    let mut out = Vec::with_capacity(result.eigenvalues.len());
    for &mu0 in &result.eigenvalues {
        let (mu1, u, _) = tridiag_inverse_iteration_best(t, mu0, 5);
        let z0 = q.matvec(&u);
        let r1 = residual_norm(h, mu1, &z0)?;
        let (value, vector, residual) = match refine_eigenpair(h, mu1, &z0, refine_steps) {
            Ok(x) => x,
            Err(BsepError::NoConvergence { .. }) => refine_eigenpair(h, mu0, &z0, refine_steps.max(5))?,
            Err(e) => return Err(e),
        };
        out.push(Eigenpair { initial: mu0, value, vector, residual_stage1: r1, residual });
    }
    Ok(out)
}
