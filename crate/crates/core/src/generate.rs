//! Synthetic problem instances.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BsepError, Result};
use crate::matrix::ComplexDense;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum GenMode {
    /// Gaussian Hermitian A and symmetric B. `shift` is added to the
    /// diagonal of A.
    Random { shift: f64 },
    /// A = diag(values), B = 0; the spectrum is {+-values}.
    KnownSpectrum { values: Vec<f64> },
    /// A quadruple of modulus `lead`, a real pair of modulus `next`, and
    /// the remaining eigenvalues on moduli in [0.9, 1] `next` at spread-out
    /// angles, hidden by a random unitary congruence.
    GapControlled { lead: f64, next: f64 },
    /// The quadruple +-re +- i im, the rest at moduli in [1, 3], hidden by a
    /// random unitary congruence.
    Planted { re: f64, im: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenSpec {
    pub n: usize,
    /// Fraction of off-diagonal entries kept in random mode.
    pub density: f64,
    pub seed: u64,
    pub mode: GenMode,
}

fn gauss(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Random unitary matrix from the QR factorization of a Gaussian matrix.
fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> ComplexDense {
    let mut q = ComplexDense::from_fn(n, n, |_, _| gauss(rng));
    // modified Gram-Schmidt, twice
    for _ in 0..2 {
        for j in 0..n {
            for k in 0..j {
                let d: C64 = q.col(k).iter().zip(q.col(j)).map(|(a, b)| a.conj() * b).sum();
                let qk = q.col(k).to_vec();
                for (x, y) in q.col_mut(j).iter_mut().zip(&qk) {
                    *x -= d * y;
                }
            }
            let nj = crate::matrix::norm2(q.col(j));
            for x in q.col_mut(j) {
                *x /= nj;
            }
        }
    }
    q
}

/// Blocks (A, B) of a 2-index instance with eigenvalues +-x +- iy.
fn quadruple_block(x: f64, y: f64) -> (ComplexDense, ComplexDense) {
    let a = ComplexDense::from_real_rows(&[&[x, 0.0], &[0.0, -x]]).unwrap();
    let b = ComplexDense::from_real_rows(&[&[0.0, y], &[y, 0.0]]).unwrap();
    (a, b)
}

/// Block-diagonal (A0, B0) being filled index by index.
struct BlockBuilder {
    a: ComplexDense,
    b: ComplexDense,
    used: usize,
}

impl BlockBuilder {
    fn new(n: usize) -> Self {
        BlockBuilder { a: ComplexDense::zeros(n, n), b: ComplexDense::zeros(n, n), used: 0 }
    }

    fn remaining(&self) -> usize {
        self.a.rows() - self.used
    }

    fn quadruple(&mut self, x: f64, y: f64) {
        let (qa, qb) = quadruple_block(x, y);
        self.a.set_block(self.used, self.used, &qa);
        self.b.set_block(self.used, self.used, &qb);
        self.used += 2;
    }

    /// A pair on the real axis (+-r) or, when `imaginary`, on the imaginary
    /// axis (+-ir).
    fn pair(&mut self, r: f64, imaginary: bool) {
        let k = self.used;
        if imaginary {
            self.b[(k, k)] = C64::new(r, 0.0);
        } else {
            self.a[(k, k)] = C64::new(r, 0.0);
        }
        self.used += 1;
    }

    /// (U^H A0 U, U^H B0 conj(U)) for a random unitary U, which keeps the
    /// spectrum.
    fn hide(self, rng: &mut ChaCha8Rng) -> (ComplexDense, ComplexDense) {
        let n = self.a.rows();
        let u = random_unitary(n, rng);
        let uh = u.adjoint();
        let a = uh.matmul(&self.a).matmul(&u);
        let b = uh.matmul(&self.b).matmul(&u.conj());
        let mut a = a.add(&a.adjoint()).scale(C64::new(0.5, 0.0));
        for i in 0..n {
            a[(i, i)].im = 0.0;
        }
        let b = b.add(&b.transpose()).scale(C64::new(0.5, 0.0));
        (a, b)
    }
}

/// Generates (A, B), deterministic under the seed.
pub fn generate_problem(spec: &GenSpec) -> Result<(ComplexDense, ComplexDense)> {
    if !(0.0..=1.0).contains(&spec.density) || !spec.density.is_finite() {
        return Err(BsepError::InvalidSpec(format!("density {} outside [0, 1]", spec.density)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match &spec.mode {
        GenMode::Random { shift } => {
            let n = spec.n;
            if n == 0 {
                return Err(BsepError::InvalidSpec("n must be positive".into()));
            }
            let scale = 1.0 / (n as f64).sqrt();
            let mut a = ComplexDense::zeros(n, n);
            let mut b = ComplexDense::zeros(n, n);
            for j in 0..n {
                a[(j, j)] = C64::new(rng.sample::<f64, _>(StandardNormal) * scale + shift, 0.0);
                b[(j, j)] = gauss(&mut rng) * scale;
                for i in j + 1..n {
                    let keep_a = rng.random::<f64>() < spec.density;
                    let keep_b = rng.random::<f64>() < spec.density;
                    let za = gauss(&mut rng) * scale;
                    let zb = gauss(&mut rng) * scale;
                    if keep_a {
                        a[(i, j)] = za;
                        a[(j, i)] = za.conj();
                    }
                    if keep_b {
                        b[(i, j)] = zb;
                        b[(j, i)] = zb;
                    }
                }
            }
            Ok((a, b))
        }
        GenMode::KnownSpectrum { values } => {
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(BsepError::InvalidSpec("known spectrum needs finite values".into()));
            }
            let d: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
            let n = d.len();
            Ok((ComplexDense::from_diag(&d), ComplexDense::zeros(n, n)))
        }
        GenMode::GapControlled { lead, next } => {
            let n = spec.n;
            if n < 3 {
                return Err(BsepError::InvalidSpec("gap-controlled instances need n >= 3".into()));
            }
            if !(lead.is_finite() && *lead > *next && *next > 0.0) {
                return Err(BsepError::InvalidSpec("need lead > next > 0".into()));
            }
            let mut blk = BlockBuilder::new(n);
            let h = lead * std::f64::consts::FRAC_1_SQRT_2;
            blk.quadruple(h, h);
            blk.pair(*next, false);
            // the rest spreads over a thin annulus just inside |z| = next so
            // that no polynomial beats the ratio next / lead
            let quads = blk.remaining() / 2;
            for m in 0..quads {
                let angle = std::f64::consts::FRAC_PI_2 * (m as f64 + 0.5) / quads as f64;
                let r = next * (0.9 + 0.1 * rng.random::<f64>());
                blk.quadruple(r * angle.cos(), r * angle.sin());
            }
            if blk.remaining() == 1 {
                blk.pair(0.95 * next, true);
            }
            Ok(blk.hide(&mut rng))
        }
        GenMode::Planted { re, im } => {
            let n = spec.n;
            if n < 2 {
                return Err(BsepError::InvalidSpec("planted instances need n >= 2".into()));
            }
            if !(re.is_finite() && im.is_finite()) || *re <= 0.0 || *im <= 0.0 {
                return Err(BsepError::InvalidSpec("planted quadruple needs positive re and im".into()));
            }
            let mut blk = BlockBuilder::new(n);
            blk.quadruple(*re, *im);
            while blk.remaining() >= 2 {
                let r = 1.0 + 2.0 * rng.random::<f64>();
                if rng.random::<f64>() < 0.5 {
                    let angle = std::f64::consts::FRAC_PI_2 * rng.random::<f64>();
                    blk.quadruple(r * angle.cos(), r * angle.sin());
                } else {
                    blk.pair(r, false);
                }
            }
            if blk.remaining() == 1 {
                blk.pair(1.0 + 2.0 * rng.random::<f64>(), false);
            }
            Ok(blk.hide(&mut rng))
        }
    }
}

/// Parses a generator string:
/// `random:n=30,seed=1[,density=0.5][,shift=0]`, `knownSpectrum:2,3`,
/// `gapControlled:2,1[,n=60][,seed=1]`, or `planted:0.1,0.2[,n=40][,seed=1]`.
pub fn parse_gen_spec(s: &str) -> Result<GenSpec> {
    let (head, rest) = s.split_once(':').unwrap_or((s, ""));
    let mut positional = Vec::new();
    let mut n = None;
    let mut seed = 0u64;
    let mut density = 1.0;
    let mut shift = 0.0;
    let bad = |what: &str| BsepError::InvalidSpec(format!("cannot parse `{what}` in `{s}`"));
    for tok in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if let Some((k, v)) = tok.split_once('=') {
            match k.trim() {
                "n" => n = Some(v.trim().parse::<usize>().map_err(|_| bad(tok))?),
                "seed" => seed = v.trim().parse().map_err(|_| bad(tok))?,
                "density" => density = v.trim().parse().map_err(|_| bad(tok))?,
                "shift" => shift = v.trim().parse().map_err(|_| bad(tok))?,
                _ => return Err(bad(tok)),
            }
        } else {
            positional.push(tok.parse::<f64>().map_err(|_| bad(tok))?);
        }
    }
    let mode = match head.trim() {
        "random" => {
            if !positional.is_empty() {
                return Err(bad(rest));
            }
            GenMode::Random { shift }
        }
        "knownSpectrum" => GenMode::KnownSpectrum { values: positional.clone() },
        "gapControlled" => {
            if positional.len() != 2 {
                return Err(BsepError::InvalidSpec("gapControlled takes two moduli".into()));
            }
            GenMode::GapControlled { lead: positional[0], next: positional[1] }
        }
        "planted" => {
            if positional.len() != 2 {
                return Err(BsepError::InvalidSpec("planted takes the real and imaginary part".into()));
            }
            GenMode::Planted { re: positional[0], im: positional[1] }
        }
        other => return Err(BsepError::InvalidSpec(format!("unknown generator `{other}`"))),
    };
    let n = match &mode {
        GenMode::KnownSpectrum { values } => values.len(),
        GenMode::Random { .. } => n.ok_or_else(|| BsepError::InvalidSpec("random needs n=".into()))?,
        GenMode::GapControlled { .. } => n.unwrap_or(60),
        GenMode::Planted { .. } => n.unwrap_or(40),
    };
    Ok(GenSpec { n, density, seed, mode })
}
