//! Independent dense oracle, accuracy metrics, spectrum pairing and
//! subspace distances. The oracle uses nalgebra's unstructured complex
//! Schur decomposition and LU, sharing only the matrix container with the
//! structured solvers.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{BsepError, Result};
use crate::flops::Flops;
use crate::hamiltonian::BsepHamiltonian;
use crate::matrix::{norm1, ComplexDense, ZERO};

fn to_na(m: &ComplexDense) -> DMatrix<C64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.as_slice())
}

fn vnorm2(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// An oracle eigenpair with its residual |M x - lambda x|_2 (unit x).
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePair {
    pub value: C64,
    pub vector: Vec<C64>,
    pub residual: f64,
}

/// Eigenvalues from the unstructured complex Schur form.
pub fn reference_eigenvalues(m: &ComplexDense) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(BsepError::DimensionMismatch { expected: m.rows(), found: m.cols() });
    }
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(to_na(m), f64::EPSILON, 100 * m.rows().max(10))
        .ok_or_else(|| BsepError::ConvergenceFailure("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..m.rows()).map(|i| t[(i, i)]).collect())
}

/// Full eigendecomposition: Schur eigenvalues, then per eigenvalue one
/// shift-and-invert factorization used for up to three solves, with a
/// Rayleigh-quotient update kept only when it lowers the residual.
pub fn reference_spectrum(m: &ComplexDense) -> Result<Vec<OraclePair>> {
    let values = reference_eigenvalues(m)?;
    let n = m.rows();
    let a = to_na(m);
    let scale = m.norm_one().max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(n);
    for (idx, &lam) in values.iter().enumerate() {
        // a tiny offset keeps the factorization regular at an exact eigenvalue
        let shift = lam + C64::new(1e-14 * scale, 1e-14 * scale);
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] -= shift;
        }
        let lu = b.lu();
        let mut x: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0, 0.37 * (i + idx) as f64 + 0.11 * (i * i) as f64)).collect();
        let mut best: Option<OraclePair> = None;
        for _ in 0..3 {
            let rhs = nalgebra::DVector::from_column_slice(&x);
            let Some(y) = lu.solve(&rhs) else { break };
            let ny = y.norm();
            if !ny.is_finite() || ny == 0.0 {
                break;
            }
            x = y.iter().map(|z| z / ny).collect();
            let xv = nalgebra::DVector::from_column_slice(&x);
            let mx = &a * &xv;
            let rq = xv.dotc(&mx);
            for cand in [lam, rq] {
                let r = (&mx - &xv * cand).norm();
                if best.as_ref().is_none_or(|p| r < p.residual) {
                    best = Some(OraclePair { value: cand, vector: x.clone(), residual: r });
                }
            }
        }
        let p = best.ok_or_else(|| BsepError::ConvergenceFailure(format!("no eigenvector for eigenvalue {lam}")))?;
        out.push(p);
    }
    Ok(out)
}

/// e(mu) = |mu - lambda| / |lambda|.
pub fn relative_error(mu: C64, lambda: C64) -> Result<f64> {
    if lambda == ZERO {
        return Err(BsepError::ZeroReference);
    }
    Ok((mu - lambda).norm() / lambda.norm())
}

/// r(mu, z) = |H z - mu z|_1 / ((|H|_1 + |mu|) |z|_1), with |H|_1 taken
/// exactly from the blocks.
pub fn residual_norm(h: &BsepHamiltonian, mu: C64, z: &[C64]) -> Result<f64> {
    if z.len() != 2 * h.n() {
        return Err(BsepError::DimensionMismatch { expected: 2 * h.n(), found: z.len() });
    }
    let nz = norm1(z);
    if nz == 0.0 {
        return Err(BsepError::ZeroVector);
    }
    let hz = h.apply(z);
    let num: f64 = hz.iter().zip(z).map(|(a, b)| (a - mu * b).norm()).sum();
    Ok(num / ((h.norm_one() + mu.norm()) * nz))
}

/// Minimum-cost perfect assignment on a square cost matrix (row -> column).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // potentials formulation with 1-based sentinel column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Optimal matching of computed values to reference values by |mu - lambda|.
/// Returns, for each computed index, the matched reference index. A subset
/// of the spectrum may be matched; zero-cost dummy rows fill the rest.
pub fn match_spectra(computed: &[C64], reference: &[C64]) -> Result<Vec<usize>> {
    if computed.len() > reference.len() {
        return Err(BsepError::DimensionMismatch { expected: reference.len(), found: computed.len() });
    }
    let mut cost: Vec<Vec<f64>> = computed.iter().map(|m| reference.iter().map(|l| (m - l).norm()).collect()).collect();
    cost.resize(reference.len(), vec![0.0; reference.len()]);
    let mut assign = hungarian(&cost);
    assign.truncate(computed.len());
    Ok(assign)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GroupKind {
    /// {lambda, -lambda} with lambda real.
    RealPair,
    /// {i y, -i y}.
    ImaginaryPair,
    /// {lambda, -lambda, conj(lambda), -conj(lambda)}.
    Quadruple,
    /// Any other grouping (repeated or nearly degenerate values).
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpectrumGroup {
    pub kind: GroupKind,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairingReport {
    pub groups: Vec<SpectrumGroup>,
    /// Partner of each value under lambda -> -conj(lambda).
    pub partner: Vec<usize>,
    pub max_defect: f64,
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = i;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

/// Pairs every value with its nearest partner under lambda -> -conj(lambda)
/// by optimal assignment, then groups values into pairs and quadruples
/// using the additional conjugation partner.
pub fn pair_spectrum(eigs: &[C64], tol: f64) -> Result<PairingReport> {
    let n = eigs.len();
    let cost: Vec<Vec<f64>> = eigs.iter().map(|a| eigs.iter().map(|b| (a + b.conj()).norm()).collect()).collect();
    let partner = hungarian(&cost);
    let mut max_defect: f64 = 0.0;
    let mut worst = 0;
    for i in 0..n {
        let d = cost[i][partner[i]];
        if d > max_defect {
            max_defect = d;
            worst = i;
        }
    }
    if max_defect > tol {
        return Err(BsepError::UnpairedEigenvalue { value: format!("{}", eigs[worst]), defect: max_defect });
    }
    let conj_cost: Vec<Vec<f64>> = eigs.iter().map(|a| eigs.iter().map(|b| (a - b.conj()).norm()).collect()).collect();
    let conj_partner = hungarian(&conj_cost);
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in [partner[i], conj_partner[i]] {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut groups: Vec<SpectrumGroup> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_of[r] {
            Some(g) => groups[g].indices.push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(SpectrumGroup { kind: GroupKind::Other, indices: vec![i] });
            }
        }
    }
    let scale = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let slack = tol.max(1e-12 * scale);
    for g in &mut groups {
        let vals: Vec<C64> = g.indices.iter().map(|&i| eigs[i]).collect();
        g.kind = match vals.len() {
            2 if vals.iter().all(|z| z.im.abs() <= slack) => GroupKind::RealPair,
            2 if vals.iter().all(|z| z.re.abs() <= slack) => GroupKind::ImaginaryPair,
            4 => GroupKind::Quadruple,
            _ => GroupKind::Other,
        };
    }
    Ok(PairingReport { groups, partner, max_defect })
}

/// Orthonormal basis of the column space; fails when the columns are
/// numerically dependent.
fn orthonormal_basis(u: &ComplexDense) -> Result<DMatrix<C64>> {
    let svd = to_na(u).svd(true, false);
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if u.cols() == 0 || smax == 0.0 || smin <= 1e-12 * smax {
        return Err(BsepError::RankDeficient { ratio: if smax > 0.0 { smin / smax } else { 0.0 } });
    }
    let w = svd.u.expect("left singular vectors requested");
    Ok(w.columns(0, u.cols()).into_owned())
}

/// Largest principal-angle sine between span(U) and span(V), i.e. the
/// largest distance from a unit vector of span(U) to span(V).
pub fn subspace_distance(u: &ComplexDense, v: &ComplexDense) -> Result<f64> {
    if u.rows() != v.rows() {
        return Err(BsepError::DimensionMismatch { expected: u.rows(), found: v.rows() });
    }
    if u.cols() > v.cols() {
        return Err(BsepError::DimensionMismatch { expected: v.cols(), found: u.cols() });
    }
    let qu = orthonormal_basis(u)?;
    let qv = orthonormal_basis(v)?;
    let proj = &qv * (qv.adjoint() * &qu);
    let resid = &qu - proj;
    let s = resid.singular_values();
    Ok(s.iter().cloned().fold(0.0, f64::max).min(1.0))
}

/// Textbook unitary Householder reduction of a general complex matrix to
/// upper Hessenberg form, with the same operation-counting convention as
/// the structured solvers. Returns the Hessenberg matrix and the count.
pub fn hessenberg_reduce(m: &ComplexDense) -> (ComplexDense, u64) {
    let n = m.rows();
    let mut a = m.clone();
    let mut f = Flops::new();
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let x: Vec<C64> = a.col(k)[k + 1..].to_vec();
        let xn = vnorm2(&x);
        f.cma(len);
        if xn == 0.0 {
            continue;
        }
        let ph = if x[0] == ZERO { C64::new(1.0, 0.0) } else { x[0] / x[0].norm() };
        let mut v = x;
        v[0] += ph * xn;
        let vn2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let tau = 2.0 / vn2;
        // left: A[k+1.., j] -= tau v (v^H A[k+1.., j])
        for j in k..n {
            let col = &mut a.col_mut(j)[k + 1..];
            let mut s = ZERO;
            for (vi, ci) in v.iter().zip(col.iter()) {
                s += vi.conj() * ci;
            }
            let s = s * tau;
            for (vi, ci) in v.iter().zip(col.iter_mut()) {
                *ci -= s * vi;
            }
            f.cma(2 * len);
        }
        // right: A[i, k+1..] -= tau (A[i, k+1..] v) v^H
        let mut t = vec![ZERO; n];
        for (q, vq) in v.iter().enumerate() {
            let col = a.col(k + 1 + q);
            for (ti, ci) in t.iter_mut().zip(col) {
                *ti += ci * vq;
            }
        }
        for (q, vq) in v.iter().enumerate() {
            let fct = tau * vq.conj();
            let col = a.col_mut(k + 1 + q);
            for (ci, ti) in col.iter_mut().zip(&t) {
                *ci -= fct * ti;
            }
        }
        f.cma(2 * len * n);
        for i in k + 2..n {
            a[(i, k)] = ZERO;
        }
    }
    (a, f.get())
}

/// One computed eigenvalue matched to the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchedPair {
    pub computed: C64,
    pub reference: C64,
    /// e(mu); absent when the reference value is zero.
    pub relative_error: Option<f64>,
    /// r(mu, z) when a vector is available.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EigReport {
    pub pairs: Vec<MatchedPair>,
    pub max_relative_error: f64,
    pub max_residual: Option<f64>,
    pub max_pairing_defect: f64,
    /// Seconds per named phase.
    pub timing: Vec<(String, f64)>,
}

/// Matches computed eigenvalues (and optional eigenvectors) to the oracle
/// spectrum and evaluates both metrics.
pub fn eig_report(h: &BsepHamiltonian, computed: &[C64], vectors: Option<&[Vec<C64>]>, reference: &[C64]) -> Result<EigReport> {
    let assign = match_spectra(computed, reference)?;
    let mut pairs = Vec::with_capacity(computed.len());
    let mut max_e: f64 = 0.0;
    let mut max_r: Option<f64> = None;
    for (i, &mu) in computed.iter().enumerate() {
        let lam = reference[assign[i]];
        let e = relative_error(mu, lam).ok();
        if let Some(e) = e {
            max_e = max_e.max(e);
        }
        let r = match vectors {
            Some(vs) => Some(residual_norm(h, mu, &vs[i])?),
            None => None,
        };
        if let Some(r) = r {
            max_r = Some(max_r.map_or(r, |m: f64| m.max(r)));
        }
        pairs.push(MatchedPair { computed: mu, reference: lam, relative_error: e, residual: r });
    }
    let defect = pair_spectrum(computed, f64::INFINITY)?.max_defect;
    Ok(EigReport { pairs, max_relative_error: max_e, max_residual: max_r, max_pairing_defect: defect, timing: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::assemble_hamiltonian;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn reference_examples() {
        let d = ComplexDense::from_real_rows(&[&[2.0, 0.0], &[0.0, -2.0]]).unwrap();
        let mut v: Vec<f64> = reference_spectrum(&d).unwrap().iter().map(|p| p.value.re).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(v, vec![-2.0, 2.0]);
        let r = ComplexDense::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
        let mut v: Vec<f64> = reference_spectrum(&r).unwrap().iter().map(|p| p.value.im).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((v[0] + 1.0).abs() < 1e-14 && (v[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(c(3.0, 0.0), c(3.0, 0.0)).unwrap(), 0.0);
        assert!((relative_error(c(1.01, 0.0), c(1.0, 0.0)).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(relative_error(c(0.0, 2.0), c(0.0, 1.0)).unwrap(), 1.0);
        assert_eq!(relative_error(c(1.0, 0.0), ZERO), Err(BsepError::ZeroReference));
    }

    #[test]
    fn residual_examples() {
        let a = ComplexDense::from_rows(&[vec![c(2.0, 0.0)]]).unwrap();
        let b = ComplexDense::zeros(1, 1);
        let h = assemble_hamiltonian(&a, &b, 1e-12).unwrap();
        assert_eq!(residual_norm(&h, ZERO, &[c(1.0, 0.0), ZERO]).unwrap(), 1.0);
        assert_eq!(residual_norm(&h, c(2.0, 0.0), &[c(1.0, 0.0), ZERO]).unwrap(), 0.0);
        assert_eq!(residual_norm(&h, ZERO, &[ZERO, ZERO]), Err(BsepError::ZeroVector));
    }

    #[test]
    fn pairing_examples() {
        let r = pair_spectrum(&[c(2.0, 0.0), c(-2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0)], 1e-12).unwrap();
        assert_eq!(r.max_defect, 0.0);
        assert_eq!(r.groups.len(), 2);
        let kinds: Vec<GroupKind> = r.groups.iter().map(|g| g.kind).collect();
        assert!(kinds.contains(&GroupKind::RealPair) && kinds.contains(&GroupKind::ImaginaryPair));
        let q = pair_spectrum(&[c(1.0, 1.0), c(-1.0, 1.0), c(1.0, -1.0), c(-1.0, -1.0)], 1e-12).unwrap();
        assert_eq!(q.groups.len(), 1);
        assert_eq!(q.groups[0].kind, GroupKind::Quadruple);
        assert!(matches!(pair_spectrum(&[c(1.0, 0.0), c(3.0, 0.0)], 1e-9), Err(BsepError::UnpairedEigenvalue { .. })));
    }

    #[test]
    fn subspace_examples() {
        let e1 = ComplexDense::from_real_rows(&[&[1.0], &[0.0]]).unwrap();
        let e2 = ComplexDense::from_real_rows(&[&[0.0], &[1.0]]).unwrap();
        assert!(subspace_distance(&e1, &e1).unwrap() < 1e-15);
        assert!((subspace_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let th = std::f64::consts::PI / 6.0;
        let v = ComplexDense::from_real_rows(&[&[th.cos()], &[th.sin()]]).unwrap();
        assert!((subspace_distance(&e1, &v).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hungarian_finds_optimum() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        assert_eq!(hungarian(&cost), vec![1, 0, 2]);
    }
}
