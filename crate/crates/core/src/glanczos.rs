//! Structured Lanczos process in the indefinite metric S0 = diag(I, -I).
//!
//! Each step stores one generating vector q_j; its partner P conj(q_j) is
//! implied. The recurrence yields a tridiagonal Rayleigh block with the same
//! block structure as the operator, from which Ritz pairs are read off with
//! the dense structured solver.

use serde::{Deserialize, Serialize};

use crate::error::{BsepError, Result};
use crate::gqr_solver::{gqr_iterate, tridiag_inverse_iteration_best, GqrOptions};
use crate::hamiltonian::{expand_dense, BsepHamiltonian};
use crate::linalg::{lu_factor, Lu};
use crate::matrix::{norm2, ComplexDense, ZERO};
use crate::pimatrix::{PiKind, PiMatrix, PiSign, PiTridiagonal};
use crate::signature::gamma0_inner;
use crate::validation::residual_norm;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Start vectors with x^H S0 x below this fraction of |x|^2 are rejected.
pub const START_TOL: f64 = 1e-13;
/// Largest half order accepted by the dense Krylov matrix builder.
pub const KRYLOV_CAP: usize = 512;
/// Pivots below this fraction of |H|_1 make a shift-invert factor fail.
pub const SHIFT_SINGULAR_TOL: f64 = 1e-13;

/// y <- M x for a structured operator of order 2n.
pub trait Operator {
    fn dim(&self) -> usize;
    /// PiMinus for the Hamiltonian itself, PiPlus for even polynomials in it
    /// and their inverses.
    fn kind(&self) -> PiKind;
    fn apply(&self, x: &[C64]) -> Result<Vec<C64>>;
}

impl Operator for BsepHamiltonian {
    fn dim(&self) -> usize {
        2 * self.n()
    }

    fn kind(&self) -> PiKind {
        PiKind::PiMinus
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        crate::hamiltonian::apply_hamiltonian(self, x)
    }
}

fn pi_conj(x: &[C64]) -> Vec<C64> {
    let n = x.len() / 2;
    x[n..].iter().chain(&x[..n]).map(|z| z.conj()).collect()
}

fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Scales q so that q^H S0 q = 1.
pub fn normalize_start(q: &[C64]) -> Result<Vec<C64>> {
    if !q.len().is_multiple_of(2) {
        return Err(BsepError::OddLength(q.len()));
    }
    let nq = norm2(q);
    if nq == 0.0 {
        return Err(BsepError::ZeroVector);
    }
    let f = gamma0_inner(q, q).re;
    if f <= START_TOL * nq * nq {
        return Err(BsepError::IsotropicStart);
    }
    let s = 1.0 / f.sqrt();
    Ok(q.iter().map(|z| z * s).collect())
}

/// Seeded Gaussian start vector with the lower half scaled by 1/2, so that
/// x^H S0 x is close to 3/4 |x|^2; draws with a form below |x|^2 / 4 are
/// redrawn.
pub fn random_start(n2: usize, seed: u64) -> Result<Vec<C64>> {
    if !n2.is_multiple_of(2) {
        return Err(BsepError::OddLength(n2));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let q: Vec<C64> = (0..n2)
            .map(|i| {
                let z = C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                if i < n2 / 2 {
                    z
                } else {
                    z * 0.5
                }
            })
            .collect();
        let nq = norm2(&q);
        if gamma0_inner(&q, &q).re >= 0.25 * nq * nq {
            return normalize_start(&q);
        }
    }
    Err(BsepError::IsotropicStart)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Reorth {
    None,
    /// Against every stored vector and partner, twice per step.
    Full,
    /// A full pass only when the monitored defect exceeds `tol_orth`.
    Selective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BreakdownKind {
    /// z vanished: the captured subspace is invariant.
    Lucky,
    /// z is nonzero but has zero length in the indefinite metric.
    Isotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Breakdown {
    /// 1-based step at which the new vector could not be formed.
    pub step: usize,
    pub kind: BreakdownKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LanczosOptions {
    pub reorth: Reorth,
    /// Isotropy threshold on |z^H S0 z| / |z|^2.
    pub tol_break: f64,
    /// z counts as vanished when |z| <= tol_lucky |M q_j|.
    pub tol_lucky: f64,
    /// Orthogonality level that is monitored and, for selective
    /// reorthogonalization, enforced.
    pub tol_orth: f64,
    /// Run the reorthogonalization passes from the newest vector back.
    pub reverse_order: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { reorth: Reorth::Full, tol_break: 1e-13, tol_lucky: 1e-10, tol_orth: 1e-8, reverse_order: false }
    }
}

#[derive(Debug, Clone)]
pub struct LanczosState {
    pub kind: PiKind,
    /// Generating vectors q_1 .. q_{k+1}; q_{k+1} is absent after a breakdown.
    pub q: Vec<Vec<C64>>,
    pub alpha: Vec<f64>,
    /// beta_1 .. beta_k, real and nonnegative.
    pub beta: Vec<f64>,
    pub gamma: Vec<C64>,
    pub delta: Vec<i8>,
    pub breakdown: Option<Breakdown>,
    pub apply_calls: usize,
    /// Largest |z^H S0 q_l| / |z| seen before reorthogonalization.
    pub max_z_orth: f64,
    /// Largest |Im alpha_j| / (1 + |alpha_j|) before it was discarded.
    pub max_alpha_imag: f64,
    /// Largest |Im z^H S0 z| / |z|^2.
    pub max_form_imag: f64,
    /// Set when orthogonality was lost beyond `tol_orth` without repair.
    pub orth_loss: bool,
}

impl LanczosState {
    /// Completed steps k.
    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    pub fn half_order(&self) -> usize {
        self.q.first().map_or(0, |v| v.len() / 2)
    }

    /// The Rayleigh block as a k x k tridiagonal pair.
    pub fn tridiagonal(&self) -> PiTridiagonal {
        let k = self.steps();
        let gamma = match self.kind {
            PiKind::PiMinus => self.gamma.clone(),
            PiKind::PiPlus => vec![ZERO; k],
        };
        PiTridiagonal {
            kind: self.kind,
            alpha: self.alpha.clone(),
            beta: self.beta[..k.saturating_sub(1)].iter().map(|&b| C64::new(b, 0.0)).collect(),
            gamma,
            delta: self.delta[..k].to_vec(),
        }
    }

    /// Q_2k = [q_1 .. q_k, P conj(q_1) .. P conj(q_k)].
    pub fn basis(&self) -> ComplexDense {
        self.basis_of(self.steps())
    }

    /// Q_{2k+2}, with a zero column for a missing q_{k+1}.
    pub fn extended_basis(&self) -> ComplexDense {
        self.basis_of(self.steps() + 1)
    }

    fn basis_of(&self, cols: usize) -> ComplexDense {
        let n2 = 2 * self.half_order();
        let zero = vec![ZERO; n2];
        let mut out = ComplexDense::zeros(n2, 2 * cols);
        for j in 0..cols {
            let q = self.q.get(j).unwrap_or(&zero);
            out.set_col(j, q);
            out.set_col(cols + j, &pi_conj(q));
        }
        out
    }

    /// The (2k+2) x 2k coefficient matrix with M Q_2k = Q_{2k+2} T.
    pub fn t_tilde(&self) -> ComplexDense {
        let k = self.steps();
        let s = self.kind.sign().sgn();
        let mut top = ComplexDense::zeros(k + 1, k);
        let mut bottom = ComplexDense::zeros(k + 1, k);
        for j in 0..k {
            top[(j, j)] = C64::new(self.alpha[j], 0.0);
            top[(j + 1, j)] = C64::new(self.beta[j], 0.0);
            if j + 1 < k {
                let ratio = (self.delta[j + 1] * self.delta[j]) as f64;
                top[(j, j + 1)] = C64::new(ratio * self.beta[j], 0.0);
            }
            bottom[(j, j)] = self.gamma[j];
        }
        let mut t = ComplexDense::zeros(2 * k + 2, 2 * k);
        t.set_block(0, 0, &top);
        t.set_block(k + 1, 0, &bottom);
        t.set_block(0, k, &bottom.conj().scale(C64::new(s, 0.0)));
        t.set_block(k + 1, k, &top.conj().scale(C64::new(s, 0.0)));
        t
    }

    /// max |Q^H S0 Q - diag(delta, -delta)| over the stored vectors.
    pub fn orthogonality_defect(&self) -> f64 {
        let cols = self.q.len();
        let qb = self.basis_of(cols);
        let mut dev: f64 = 0.0;
        for a in 0..2 * cols {
            for b in 0..2 * cols {
                let g = gamma0_inner(qb.col(a), qb.col(b));
                let target = if a == b {
                    let d = self.delta[a % cols] as f64;
                    if a < cols {
                        d
                    } else {
                        -d
                    }
                } else {
                    0.0
                };
                dev = dev.max((g - target).norm());
            }
        }
        dev
    }
}

/// Frobenius norm of M Q_2k - Q_{2k+2} T, using 2k operator applications.
pub fn decomposition_residual(op: &dyn Operator, state: &LanczosState) -> Result<f64> {
    let qk = state.basis();
    let lhs_cols: Vec<Vec<C64>> = (0..qk.cols()).map(|j| op.apply(qk.col(j))).collect::<Result<_>>()?;
    let lhs = ComplexDense::from_cols(qk.rows(), &lhs_cols);
    let rhs = state.extended_basis().matmul(&state.t_tilde());
    Ok(lhs.sub(&rhs).norm_fro())
}

/// Runs k steps of the structured recurrence from q1 (normalized first).
pub fn glanczos_decompose(op: &dyn Operator, q1: &[C64], k: usize, opts: &LanczosOptions) -> Result<LanczosState> {
    if q1.len() != op.dim() {
        return Err(BsepError::DimensionMismatch { expected: op.dim(), found: q1.len() });
    }
    let q1 = normalize_start(q1)?;
    let kind = op.kind();
    let mut st = LanczosState {
        kind,
        q: vec![q1],
        alpha: Vec::with_capacity(k),
        beta: Vec::with_capacity(k),
        gamma: Vec::with_capacity(k),
        delta: vec![1],
        breakdown: None,
        apply_calls: 0,
        max_z_orth: 0.0,
        max_alpha_imag: 0.0,
        max_form_imag: 0.0,
        orth_loss: false,
    };
    let mut partners = vec![pi_conj(&st.q[0])];
    for j in 0..k {
        let qj = &st.q[j];
        let w = op.apply(qj)?;
        st.apply_calls += 1;
        let dj = st.delta[j] as f64;
        let a = gamma0_inner(qj, &w) * dj;
        st.max_alpha_imag = st.max_alpha_imag.max(a.im.abs() / (1.0 + a.re.abs()));
        let alpha = a.re;
        let gamma = -gamma0_inner(&partners[j], &w) * dj;
        let mut z = w.clone();
        axpy(C64::new(-alpha, 0.0), qj, &mut z);
        axpy(-gamma, &partners[j], &mut z);
        if j > 0 {
            let ratio = (st.delta[j] * st.delta[j - 1]) as f64;
            axpy(C64::new(-ratio * st.beta[j - 1], 0.0), &st.q[j - 1], &mut z);
        }
        st.alpha.push(alpha);
        st.gamma.push(gamma);

        let nz = norm2(&z);
        let defect = z_defect(&st.q, &partners, &z) / nz.max(f64::MIN_POSITIVE);
        st.max_z_orth = st.max_z_orth.max(defect);
        let passes = match opts.reorth {
            Reorth::Full => 2,
            Reorth::Selective if defect > opts.tol_orth => 2,
            _ => 0,
        };
        for _ in 0..passes {
            reorthogonalize(&st.q, &partners, &st.delta, &mut z, opts.reverse_order);
        }
        if passes == 0 && defect > opts.tol_orth {
            st.orth_loss = true;
        }

        let nz = norm2(&z);
        if nz <= opts.tol_lucky * norm2(&w) {
            st.beta.push(0.0);
            st.breakdown = Some(Breakdown { step: j + 1, kind: BreakdownKind::Lucky });
            break;
        }
        let f = gamma0_inner(&z, &z);
        st.max_form_imag = st.max_form_imag.max(f.im.abs() / (nz * nz));
        if f.re.abs() <= opts.tol_break * nz * nz {
            st.beta.push(f.re.abs().sqrt());
            st.breakdown = Some(Breakdown { step: j + 1, kind: BreakdownKind::Isotropic });
            break;
        }
        let beta = f.re.abs().sqrt();
        let q_next: Vec<C64> = z.iter().map(|v| v / beta).collect();
        st.beta.push(beta);
        st.delta.push(if f.re > 0.0 { 1 } else { -1 });
        partners.push(pi_conj(&q_next));
        st.q.push(q_next);
    }
    Ok(st)
}

/// Largest |z^H S0 q_l| and |z^H S0 P conj(q_l)| over the stored vectors.
fn z_defect(q: &[Vec<C64>], p: &[Vec<C64>], z: &[C64]) -> f64 {
    q.iter().chain(p).map(|v| gamma0_inner(v, z).norm()).fold(0.0, f64::max)
}

/// One pass removing the components of z along every stored vector and
/// partner in the indefinite metric.
fn reorthogonalize(q: &[Vec<C64>], p: &[Vec<C64>], delta: &[i8], z: &mut [C64], reverse: bool) {
    let mut order: Vec<usize> = (0..q.len()).collect();
    if reverse {
        order.reverse();
    }
    for l in order {
        let d = delta[l] as f64;
        let c = gamma0_inner(&q[l], z) * d;
        axpy(-c, &q[l], z);
        let c2 = -gamma0_inner(&p[l], z) * d;
        axpy(-c2, &p[l], z);
    }
}

/// The 2k x 2k Rayleigh block.
pub fn assemble_rayleigh(state: &LanczosState) -> Result<ComplexDense> {
    if state.steps() == 0 {
        return Err(BsepError::EmptyState);
    }
    Ok(state.tridiagonal().to_dense())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Which {
    LargestModulus,
    SmallestModulus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RitzPair {
    pub nu: C64,
    /// Coefficients on Q_2k, scaled so that |z|_2 = 1.
    pub y: Vec<C64>,
    pub z: Vec<C64>,
    pub resid_estimate: f64,
    pub resid_true: Option<f64>,
}

fn partner_value(kind: PiKind, nu: C64) -> C64 {
    match kind {
        PiKind::PiMinus => -nu.conj(),
        PiKind::PiPlus => nu.conj(),
    }
}

/// Eigenvalues of the Rayleigh block, retrying with fresh exceptional-shift
/// seeds when the small solve breaks down.
fn small_eigenvalues(t: &PiTridiagonal) -> Result<Vec<C64>> {
    let mut last = None;
    for seed in 0..4 {
        let opts = GqrOptions { seed, ..GqrOptions::default() };
        match gqr_iterate(t, &opts) {
            Ok((_, eigs, _)) => return Ok(eigs),
            Err(e) => last = Some(e),
        }
    }
    Err(BsepError::SmallSolveFailure(last.map_or_else(String::new, |e| e.to_string())))
}

/// Groups eigenvalues into (value, partner) pairs by greedy nearest match.
fn partner_groups(kind: PiKind, eigs: &[C64]) -> Vec<(usize, Option<usize>)> {
    let mut used = vec![false; eigs.len()];
    let mut out = Vec::new();
    for i in 0..eigs.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let target = partner_value(kind, eigs[i]);
        let scale = eigs[i].norm().max(f64::MIN_POSITIVE);
        let best = (0..eigs.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| (eigs[a] - target).norm().total_cmp(&(eigs[b] - target).norm()));
        let partner = best.filter(|&j| (eigs[j] - target).norm() <= 1e-6 * scale);
        if let Some(j) = partner {
            used[j] = true;
        }
        out.push((i, partner));
    }
    out
}

/// Ritz pairs of the decomposition, `how_many` values sorted by modulus and
/// completed to whole (value, partner) pairs.
pub fn ritz_pairs(state: &LanczosState, how_many: usize, which: Which) -> Result<Vec<RitzPair>> {
    let k = state.steps();
    if k == 0 {
        return Err(BsepError::EmptyState);
    }
    let t = state.tridiagonal();
    let eigs = small_eigenvalues(&t)?;
    let mut groups = partner_groups(state.kind, &eigs);
    let key = |g: &(usize, Option<usize>)| eigs[g.0].norm();
    match which {
        Which::LargestModulus => groups.sort_by(|a, b| key(b).total_cmp(&key(a))),
        Which::SmallestModulus => groups.sort_by(|a, b| key(a).total_cmp(&key(b))),
    }
    let qk = state.basis();
    let q_next = state.q.get(k).cloned().unwrap_or_else(|| vec![ZERO; 2 * state.half_order()]);
    let p_next = pi_conj(&q_next);
    let beta_k = state.beta[k - 1];
    let s = state.kind.sign().sgn();
    let make = |nu: C64, y: Vec<C64>| -> RitzPair {
        let z = qk.matvec(&y);
        let nz = norm2(&z).max(f64::MIN_POSITIVE);
        let y: Vec<C64> = y.iter().map(|v| v / nz).collect();
        let z: Vec<C64> = z.iter().map(|v| v / nz).collect();
        let r: Vec<C64> = q_next.iter().zip(&p_next).map(|(a, b)| (a * y[k - 1] + b * (s * y[2 * k - 1])) * beta_k).collect();
        RitzPair { nu, y, z, resid_estimate: norm2(&r), resid_true: None }
    };
    let mut out = Vec::new();
    for (i, partner) in groups {
        if out.len() >= how_many {
            break;
        }
        let (mu, y, _) = tridiag_inverse_iteration_best(&t, eigs[i], 8);
        let py = pi_conj(&y);
        out.push(make(mu, y));
        if partner.is_some() {
            out.push(make(partner_value(state.kind, mu), py));
        }
    }
    Ok(out)
}

/// Fills `resid_true` with |M z - nu z|_2 for each pair.
pub fn true_residuals(op: &dyn Operator, pairs: &mut [RitzPair]) -> Result<()> {
    for p in pairs.iter_mut() {
        let mz = op.apply(&p.z)?;
        let r: Vec<C64> = mz.iter().zip(&p.z).map(|(a, b)| a - p.nu * b).collect();
        p.resid_true = Some(norm2(&r));
    }
    Ok(())
}

/// y <- W^{-1} x with W = prod (H - s I) over the shifts +-sigma (and
/// +-conj(sigma) for genuinely complex sigma).
pub struct ShiftInvert {
    n2: usize,
    pub sigma: C64,
    pub shifts: Vec<C64>,
    factors: Vec<Lu>,
}

impl std::fmt::Debug for ShiftInvert {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftInvert").field("n2", &self.n2).field("sigma", &self.sigma).field("shifts", &self.shifts).finish()
    }
}

impl ShiftInvert {
    /// Degree of W as a polynomial in H.
    pub fn degree(&self) -> usize {
        self.shifts.len()
    }

    /// p(lambda) with W = p(H).
    pub fn polynomial(&self, lambda: C64) -> C64 {
        self.shifts.iter().map(|s| lambda - s).product()
    }

    /// All lambda with p(lambda) = 1 / nu.
    pub fn back_transform(&self, nu: C64) -> Vec<C64> {
        let inv = nu.inv();
        let s2 = self.sigma * self.sigma;
        let squares = if self.degree() == 2 {
            vec![s2 + inv]
        } else {
            // t^2 - (s^2 + conj(s)^2) t + |s|^4 - 1/nu = 0 with t = lambda^2
            let b = s2 + s2.conj();
            let c = C64::new(self.sigma.norm_sqr().powi(2), 0.0) - inv;
            let disc = (b * b - c * 4.0).sqrt();
            vec![(b + disc) * 0.5, (b - disc) * 0.5]
        };
        squares.into_iter().flat_map(|t| [t.sqrt(), -t.sqrt()]).collect()
    }
}

impl Operator for ShiftInvert {
    fn dim(&self) -> usize {
        self.n2
    }

    fn kind(&self) -> PiKind {
        PiKind::PiPlus
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.n2 {
            return Err(BsepError::DimensionMismatch { expected: self.n2, found: x.len() });
        }
        let mut y = x.to_vec();
        for lu in &self.factors {
            lu.solve_in_place(&mut y);
        }
        Ok(y)
    }
}

/// Factors the linear pieces of W = (H - sigma)(H + sigma), extended by the
/// conjugate shifts when sigma is neither real nor purely imaginary.
pub fn build_shift_invert(h: &BsepHamiltonian, sigma: C64) -> Result<ShiftInvert> {
    if !sigma.re.is_finite() || !sigma.im.is_finite() {
        return Err(BsepError::NonFinite);
    }
    let hd = expand_dense(h)?;
    let n2 = hd.rows();
    let shifts = if sigma.re == 0.0 || sigma.im == 0.0 {
        vec![sigma, -sigma]
    } else {
        vec![sigma, -sigma, sigma.conj(), -sigma.conj()]
    };
    let tol = SHIFT_SINGULAR_TOL * h.norm_one();
    let mut factors = Vec::with_capacity(shifts.len());
    for &s in &shifts {
        let mut a = hd.clone();
        for i in 0..n2 {
            a[(i, i)] -= s;
        }
        let lu = lu_factor(&a, 0.0);
        if lu.min_pivot <= tol {
            return Err(BsepError::FactorizationFailure(format!("shift {s} is too close to the spectrum (pivot {:.3e})", lu.min_pivot)));
        }
        factors.push(lu);
    }
    Ok(ShiftInvert { n2, sigma, shifts, factors })
}

/// An eigenpair of H recovered from a shift-and-invert run.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredPair {
    pub lambda: C64,
    pub vector: Vec<C64>,
    /// r(lambda, z) in the normalized 1-norm sense.
    pub residual: f64,
    /// The Ritz value of W^{-1} it came from.
    pub nu: C64,
}

/// Eigenpairs of H near the shift from Ritz pairs of W^{-1}.
///
/// The W-eigenvector of nu mixes the H-eigenvectors of every lambda with
/// p(lambda) = 1/nu, so H is projected onto span{z, H z}. A projected value
/// is kept when it lies within `match_tol` (relative) of a back-transformed
/// candidate; duplicates keep the smaller residual.
pub fn recover_eigenpairs(h: &BsepHamiltonian, si: &ShiftInvert, pairs: &[RitzPair], match_tol: f64) -> Result<Vec<RecoveredPair>> {
    let mut out: Vec<RecoveredPair> = Vec::new();
    for p in pairs {
        let candidates = si.back_transform(p.nu);
        for (theta, x) in project_pair(h, &p.z)? {
            let close = candidates.iter().any(|c| (c - theta).norm() <= match_tol * theta.norm().max(f64::MIN_POSITIVE));
            if !close {
                continue;
            }
            let residual = residual_norm(h, theta, &x)?;
            let dup = out.iter_mut().find(|r| (r.lambda - theta).norm() <= 1e-8 * theta.norm().max(f64::MIN_POSITIVE));
            match dup {
                Some(r) if r.residual <= residual => {}
                Some(r) => *r = RecoveredPair { lambda: theta, vector: x, residual, nu: p.nu },
                None => out.push(RecoveredPair { lambda: theta, vector: x, residual, nu: p.nu }),
            }
        }
    }
    Ok(out)
}

/// Galerkin eigenpairs of H on span{z, H z} (orthonormalized).
fn project_pair(h: &BsepHamiltonian, z: &[C64]) -> Result<Vec<(C64, Vec<C64>)>> {
    let nz = norm2(z);
    if nz == 0.0 {
        return Err(BsepError::ZeroVector);
    }
    let v1: Vec<C64> = z.iter().map(|v| v / nz).collect();
    let hv1 = h.apply(&v1);
    let mut v2 = hv1.clone();
    for _ in 0..2 {
        let c = crate::matrix::dotc(&v1, &v2);
        axpy(-c, &v1, &mut v2);
    }
    let n2 = norm2(&v2);
    if n2 <= 1e-10 * norm2(&hv1) {
        let theta = crate::matrix::dotc(&v1, &hv1);
        return Ok(vec![(theta, v1)]);
    }
    let v2: Vec<C64> = v2.iter().map(|v| v / n2).collect();
    let hv2 = h.apply(&v2);
    let dot = crate::matrix::dotc;
    let m = [[dot(&v1, &hv1), dot(&v1, &hv2)], [dot(&v2, &hv1), dot(&v2, &hv2)]];
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - det * 4.0).sqrt();
    let mut out = Vec::with_capacity(2);
    for theta in [(tr + disc) * 0.5, (tr - disc) * 0.5] {
        // null vector of M - theta I from its better-conditioned row
        let c = if (m[0][1].norm() + (m[0][0] - theta).norm()) >= (m[1][0].norm() + (m[1][1] - theta).norm()) {
            [m[0][1], theta - m[0][0]]
        } else {
            [theta - m[1][1], m[1][0]]
        };
        let x: Vec<C64> = v1.iter().zip(&v2).map(|(a, b)| a * c[0] + b * c[1]).collect();
        let nx = norm2(&x);
        if nx == 0.0 {
            continue;
        }
        out.push((theta, x.into_iter().map(|v| v / nx).collect()));
    }
    Ok(out)
}

/// Columns [q1, H q1, .., H^{k-1} q1] and their partners P conj(H^j q1).
pub fn build_krylov_matrix(h: &BsepHamiltonian, q1: &[C64], k: usize) -> Result<PiMatrix> {
    let n = h.n();
    if n > KRYLOV_CAP {
        return Err(BsepError::SizeLimitExceeded { n, cap: KRYLOV_CAP });
    }
    if q1.len() != 2 * n {
        return Err(BsepError::DimensionMismatch { expected: 2 * n, found: q1.len() });
    }
    let mut g1 = ComplexDense::zeros(n, k);
    let mut g2 = ComplexDense::zeros(n, k);
    let mut v = q1.to_vec();
    for j in 0..k {
        for i in 0..n {
            g1[(i, j)] = v[i];
            g2[(i, j)] = v[n + i].conj();
        }
        if j + 1 < k {
            v = h.apply(&v);
        }
    }
    Ok(PiMatrix { sign: PiSign::Plus, g1, g2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::assemble_hamiltonian;
    use crate::structure::{check_structure, StructureClaim};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn ham(a: &[&[f64]], b: &[&[f64]]) -> BsepHamiltonian {
        assemble_hamiltonian(&ComplexDense::from_real_rows(a).unwrap(), &ComplexDense::from_real_rows(b).unwrap(), 1e-12).unwrap()
    }

    fn e(n2: usize, i: usize) -> Vec<C64> {
        let mut v = vec![ZERO; n2];
        v[i] = c(1.0, 0.0);
        v
    }

    #[test]
    fn start_normalization() {
        assert_eq!(normalize_start(&e(4, 0)).unwrap(), e(4, 0));
        let two: Vec<C64> = e(4, 0).iter().map(|z| z * 2.0).collect();
        assert_eq!(normalize_start(&two).unwrap(), e(4, 0));
        let iso: Vec<C64> = e(4, 0).iter().zip(e(4, 2)).map(|(a, b)| a + b).collect();
        assert_eq!(normalize_start(&iso), Err(BsepError::IsotropicStart));
    }

    #[test]
    fn random_start_is_deterministic_and_well_conditioned() {
        let a = random_start(40, 3).unwrap();
        assert_eq!(a, random_start(40, 3).unwrap());
        assert!((gamma0_inner(&a, &a).re - 1.0).abs() < 1e-14);
        assert!(norm2(&a) <= 2.0);
        assert_eq!(random_start(3, 1), Err(BsepError::OddLength(3)));
    }

    #[test]
    fn scalar_instance_breaks_down_luckily() {
        let h = ham(&[&[2.0]], &[&[1.0]]);
        let st = glanczos_decompose(&h, &e(2, 0), 3, &LanczosOptions::default()).unwrap();
        assert_eq!(st.alpha, vec![2.0]);
        assert_eq!(st.gamma, vec![c(-1.0, 0.0)]);
        assert_eq!(st.breakdown, Some(Breakdown { step: 1, kind: BreakdownKind::Lucky }));
        let r = assemble_rayleigh(&st).unwrap();
        assert_eq!(r, ComplexDense::from_real_rows(&[&[2.0, 1.0], &[-1.0, -2.0]]).unwrap());
        let pairs = ritz_pairs(&st, 2, Which::LargestModulus).unwrap();
        let mut vals: Vec<f64> = pairs.iter().map(|p| p.nu.re).collect();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] + 3f64.sqrt()).abs() < 1e-14 && (vals[1] - 3f64.sqrt()).abs() < 1e-14);
        assert!(pairs.iter().all(|p| p.resid_estimate == 0.0));
    }

    #[test]
    fn diagonal_instance_first_step() {
        let h = ham(&[&[1.0, 0.0], &[0.0, 3.0]], &[&[0.0, 0.0], &[0.0, 0.0]]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let q1 = vec![c(r, 0.0), c(r, 0.0), ZERO, ZERO];
        let st = glanczos_decompose(&h, &q1, 1, &LanczosOptions::default()).unwrap();
        assert!((st.alpha[0] - 2.0).abs() < 1e-15);
        assert!(st.gamma[0].norm() < 1e-15);
        assert_eq!(st.delta, vec![1, 1]);
        assert!((st.beta[0] - 1.0).abs() < 1e-15);
        let want = [c(-r, 0.0), c(r, 0.0), ZERO, ZERO];
        assert!(st.q[1].iter().zip(&want).all(|(a, b)| (a - b).norm() < 1e-15));
    }

    #[test]
    fn rayleigh_of_diagonal_step() {
        let h = ham(&[&[2.0, 0.0], &[0.0, 5.0]], &[&[0.0, 0.0], &[0.0, 0.0]]);
        let q1 = vec![c(0.8, 0.0), c(0.6, 0.0), ZERO, ZERO];
        let st = glanczos_decompose(&h, &q1, 1, &LanczosOptions::default()).unwrap();
        let a1 = 0.64 * 2.0 + 0.36 * 5.0;
        assert_eq!(assemble_rayleigh(&st).unwrap(), ComplexDense::from_real_rows(&[&[a1, 0.0], &[0.0, -a1]]).unwrap());
        let pairs = ritz_pairs(&st, 2, Which::LargestModulus).unwrap();
        let mut vals: Vec<f64> = pairs.iter().map(|p| p.nu.re).collect();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] + a1).abs() < 1e-14 && (vals[1] - a1).abs() < 1e-14);
    }

    fn sample_h(n: usize) -> BsepHamiltonian {
        let a = ComplexDense::from_fn(n, n, |i, j| {
            let x = c((1.0 + i as f64 + 2.0 * j as f64).sin(), (i as f64 - j as f64).cos() * 0.3);
            if i == j {
                c(2.0 + i as f64 * 0.5, 0.0)
            } else {
                x
            }
        });
        let a = a.add(&a.adjoint()).scale(c(0.5, 0.0));
        let b = ComplexDense::from_fn(n, n, |i, j| c(((i * j) as f64 + 0.3).cos() * 0.2, (i + j) as f64 * 0.05));
        let b = b.add(&b.transpose()).scale(c(0.5, 0.0));
        assemble_hamiltonian(&a, &b, 1e-12).unwrap()
    }

    fn sample_start(n2: usize) -> Vec<C64> {
        (0..n2).map(|i| if i < n2 / 2 { c(1.0 + 0.1 * i as f64, 0.2) } else { c(0.1, -0.05 * i as f64) }).collect()
    }

    #[test]
    fn rayleigh_block_has_the_operator_structure() {
        let h = sample_h(6);
        let st = glanczos_decompose(&h, &sample_start(12), 3, &LanczosOptions::default()).unwrap();
        let r = assemble_rayleigh(&st).unwrap();
        let s = crate::signature::Signature::new(st.delta[..3].to_vec()).unwrap();
        assert!(check_structure(&r, StructureClaim::PiMinusHermitian, &s, 1e-12).holds);
    }

    #[test]
    fn decomposition_identity_and_estimates() {
        let h = sample_h(10);
        let st = glanczos_decompose(&h, &sample_start(20), 5, &LanczosOptions::default()).unwrap();
        assert!(st.breakdown.is_none());
        let res = decomposition_residual(&h, &st).unwrap();
        assert!(res <= 1e-10 * (1.0 + h.norm_one()), "{res}");
        assert!(st.orthogonality_defect() <= 1e-8);
        let mut pairs = ritz_pairs(&st, 4, Which::LargestModulus).unwrap();
        true_residuals(&h, &mut pairs).unwrap();
        for p in &pairs {
            let t = p.resid_true.unwrap();
            assert!((t - p.resid_estimate).abs() <= 1e-8 * (1.0 + p.resid_estimate), "{t} {}", p.resid_estimate);
        }
    }

    #[test]
    fn shift_invert_on_diagonal_instance() {
        let h = ham(&[&[2.0, 0.0], &[0.0, 3.0]], &[&[0.0, 0.0], &[0.0, 0.0]]);
        let si = build_shift_invert(&h, ZERO).unwrap();
        assert_eq!(si.degree(), 2);
        let x = vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        let y = si.apply(&x).unwrap();
        let want = [0.25, 1.0 / 9.0, 0.25, 1.0 / 9.0];
        assert!(y.iter().zip(want).all(|(a, b)| (a.re - b).abs() < 1e-15 && a.im.abs() < 1e-15));
        let x0 = vec![c(1.0, 0.0), c(1.0, 0.0), c(0.3, 0.0), c(0.2, 0.0)];
        let st = glanczos_decompose(&si, &x0, 2, &LanczosOptions::default()).unwrap();
        assert!(st.gamma.iter().all(|g| g.norm() < 1e-15));
        let pairs = ritz_pairs(&st, 4, Which::LargestModulus).unwrap();
        let rec = recover_eigenpairs(&h, &si, &pairs, 1e-6).unwrap();
        let mut vals: Vec<f64> = rec.iter().map(|r| r.lambda.re).collect();
        vals.sort_by(f64::total_cmp);
        assert_eq!(vals.len(), 4);
        for (v, w) in vals.iter().zip([-3.0, -2.0, 2.0, 3.0]) {
            assert!((v - w).abs() < 1e-12);
        }
        assert!(matches!(build_shift_invert(&h, c(2.0, 0.0)), Err(BsepError::FactorizationFailure(_))));
    }

    #[test]
    fn back_transform_inverts_the_polynomial() {
        let h = sample_h(3);
        for sigma in [c(0.3, 0.0), c(0.0, 0.4), c(0.1, 0.2)] {
            let si = build_shift_invert(&h, sigma).unwrap();
            let lambda = c(1.3, -0.7);
            let nu = si.polynomial(lambda).inv();
            let cands = si.back_transform(nu);
            assert_eq!(cands.len(), si.degree());
            assert!(cands.iter().any(|z| (z - lambda).norm() < 1e-12));
            assert!(cands.iter().all(|z| (si.polynomial(*z) - nu.inv()).norm() < 1e-10 * nu.inv().norm()));
        }
    }

    #[test]
    fn krylov_matrix_columns() {
        let h = ham(&[&[1.0, 0.0], &[0.0, 3.0]], &[&[0.0, 0.0], &[0.0, 0.0]]);
        let q1 = vec![c(1.0, 0.0), c(1.0, 0.0), ZERO, ZERO];
        let k1 = build_krylov_matrix(&h, &q1, 1).unwrap().to_dense();
        assert_eq!(k1.col(0), q1.as_slice());
        assert_eq!(k1.col(1), pi_conj(&q1).as_slice());
        let k2 = build_krylov_matrix(&h, &q1, 2).unwrap().to_dense();
        assert_eq!(k2.col(1), &[c(1.0, 0.0), c(3.0, 0.0), ZERO, ZERO]);
        assert_eq!(k2.col(3), &[ZERO, ZERO, c(1.0, 0.0), c(3.0, 0.0)]);
    }
}
