//! Small dense and banded direct solvers used by the structured solvers.

use num_complex::Complex64 as C64;

use crate::matrix::{phase, ComplexDense, ONE, ZERO};

/// LU factorization with partial pivoting, PA = LU.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: ComplexDense,
    piv: Vec<usize>,
    /// Number of pivots replaced by the floor value.
    pub perturbed: usize,
    /// Smallest pivot modulus before any replacement.
    pub min_pivot: f64,
}

/// Factors a square matrix. When `floor` is positive, pivots with modulus at
/// most `floor` are replaced by `floor` times their phase, which turns an exact singular shift into a
/// nearly singular one.
pub fn lu_factor(a: &ComplexDense, floor: f64) -> Lu {
    assert!(a.is_square());
    let n = a.rows();
    let mut lu = a.clone();
    let mut piv = vec![0; n];
    let mut perturbed = 0;
    let mut min_pivot = f64::INFINITY;
    for k in 0..n {
        let (mut p, mut best) = (k, lu[(k, k)].norm());
        for i in k + 1..n {
            let v = lu[(i, k)].norm();
            if v > best {
                p = i;
                best = v;
            }
        }
        piv[k] = p;
        if p != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = t;
            }
        }
        min_pivot = min_pivot.min(best);
        if floor > 0.0 && best <= floor {
            lu[(k, k)] = phase(lu[(k, k)]) * floor;
            perturbed += 1;
        }
        let d = lu[(k, k)];
        if d == ZERO {
            continue;
        }
        // divide through the modulus so tiny pivots do not underflow
        let (dm, dph) = (d.norm(), phase(d).conj());
        for i in k + 1..n {
            let l = lu[(i, k)] / dm * dph;
            lu[(i, k)] = l;
            if l == ZERO {
                continue;
            }
            for j in k + 1..n {
                let u = lu[(k, j)];
                lu[(i, j)] -= l * u;
            }
        }
    }
    Lu { lu, piv, perturbed, min_pivot }
}

impl Lu {
    pub fn n(&self) -> usize {
        self.lu.rows()
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n();
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for k in 0..n {
            let bk = b[k];
            if bk == ZERO {
                continue;
            }
            for i in k + 1..n {
                b[i] -= self.lu[(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            b[k] /= self.lu[(k, k)];
            let bk = b[k];
            for i in 0..k {
                b[i] -= self.lu[(i, k)] * bk;
            }
        }
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn det(&self) -> C64 {
        let n = self.n();
        let mut d = ONE;
        for k in 0..n {
            d *= self.lu[(k, k)];
            if self.piv[k] != k {
                d = -d;
            }
        }
        d
    }
}

/// Determinant by LU without pivot perturbation.
pub fn det(a: &ComplexDense) -> C64 {
    lu_factor(a, 0.0).det()
}

/// Banded LU with partial pivoting for matrices with `kl` sub- and `ku`
/// super-diagonals. Row i stores columns i-kl ..= i+ku+kl.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    rows: Vec<C64>,
    mult: Vec<C64>,
    piv: Vec<usize>,
    pub perturbed: usize,
}

impl BandLu {
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku + self.kl {
            None
        } else {
            Some(i * self.w + (j + self.kl - i))
        }
    }

    fn get(&self, i: usize, j: usize) -> C64 {
        self.slot(i, j).map_or(ZERO, |s| self.rows[s])
    }

    fn set(&mut self, i: usize, j: usize, v: C64) {
        let s = self.slot(i, j).expect("band entry out of range");
        self.rows[s] = v;
    }

    /// Factors the n x n band matrix given by `entry(i, j)` (called only
    /// inside the band).
    pub fn factor(n: usize, kl: usize, ku: usize, floor: f64, entry: impl Fn(usize, usize) -> C64) -> Self {
        let w = 2 * kl + ku + 1;
        let mut b = BandLu {
            n,
            kl,
            ku,
            w,
            rows: vec![ZERO; n * w],
            mult: vec![ZERO; n * kl.max(1)],
            piv: vec![0; n],
            perturbed: 0,
        };
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            for j in lo..=hi {
                b.set(i, j, entry(i, j));
            }
        }
        let reach = ku + kl;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let (mut p, mut best) = (k, b.get(k, k).norm());
            for i in k + 1..=last {
                let v = b.get(i, k).norm();
                if v > best {
                    p = i;
                    best = v;
                }
            }
            b.piv[k] = p;
            let jend = (k + reach).min(n - 1);
            if p != k {
                for j in k..=jend {
                    let t = b.get(k, j);
                    let u = b.get(p, j);
                    b.set(k, j, u);
                    b.set(p, j, t);
                }
            }
            if best <= floor {
                let d = phase(b.get(k, k)) * floor.max(f64::MIN_POSITIVE);
                b.set(k, k, d);
                b.perturbed += 1;
            }
            let d = b.get(k, k);
            for i in k + 1..=last {
                let l = if d == ZERO { ZERO } else { b.get(i, k) / d };
                b.mult[k * kl.max(1) + (i - k - 1)] = l;
                b.set(i, k, ZERO);
                if l == ZERO {
                    continue;
                }
                for j in k + 1..=jend {
                    let v = b.get(i, j) - l * b.get(k, j);
                    b.set(i, j, v);
                }
            }
        }
        b
    }

    pub fn solve_in_place(&self, x: &mut [C64]) {
        let n = self.n;
        assert_eq!(x.len(), n);
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let last = (k + self.kl).min(n - 1);
            let xk = x[k];
            for i in k + 1..=last {
                x[i] -= self.mult[k * self.kl.max(1) + (i - k - 1)] * xk;
            }
        }
        let reach = self.ku + self.kl;
        for k in (0..n).rev() {
            let jend = (k + reach).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=jend {
                s -= self.get(k, j) * x[j];
            }
            x[k] = s / self.get(k, k);
        }
    }
}

/// Ratio of the smallest to largest diagonal of R in a column-pivoted
/// Householder QR; a cheap numerical-rank indicator.
pub fn pivoted_qr_rank_ratio(a: &ComplexDense) -> f64 {
    let (m, n) = (a.rows(), a.cols());
    let mut r = a.clone();
    let mut norms: Vec<f64> = (0..n).map(|j| crate::matrix::norm2(r.col(j))).collect();
    let steps = m.min(n);
    let mut diag = Vec::with_capacity(steps);
    for k in 0..steps {
        let (mut p, mut best) = (k, -1.0);
        for (j, &v) in norms.iter().enumerate().skip(k) {
            if v > best {
                p = j;
                best = v;
            }
        }
        if p != k {
            for i in 0..m {
                let t = r[(i, k)];
                r[(i, k)] = r[(i, p)];
                r[(i, p)] = t;
            }
            norms.swap(k, p);
        }
        let x: Vec<C64> = (k..m).map(|i| r[(i, k)]).collect();
        let nx = crate::matrix::norm2(&x);
        diag.push(nx);
        if nx == 0.0 {
            continue;
        }
        let alpha = -phase(x[0]) * nx;
        let mut v = x.clone();
        v[0] -= alpha;
        let vn = crate::matrix::norm2(&v);
        if vn == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vn;
        }
        for j in k..n {
            let mut s = ZERO;
            for (t, i) in (k..m).enumerate() {
                s += v[t].conj() * r[(i, j)];
            }
            for (t, i) in (k..m).enumerate() {
                r[(i, j)] -= 2.0 * v[t] * s;
            }
        }
        for (j, nj) in norms.iter_mut().enumerate().skip(k + 1) {
            *nj = crate::matrix::norm2(&(k + 1..m).map(|i| r[(i, j)]).collect::<Vec<_>>());
        }
    }
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    diag.iter().cloned().fold(f64::INFINITY, f64::min) / max
}
