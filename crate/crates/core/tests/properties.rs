use bsep::generate::{generate_problem, GenMode, GenSpec};
use bsep::glanczos::{
    build_krylov_matrix, decomposition_residual, glanczos_decompose, random_start, ritz_pairs, true_residuals, LanczosOptions, Which,
};
use bsep::gqr_factor::{gqr_factorize, FactorMode};
use bsep::gqr_solver::{gqr_eigenvalues, tridiagonalize, GqrOptions, TridiagInput};
use bsep::matrix::{norm2, ComplexDense};
use bsep::mtx::{format_matrix_market, parse_matrix_market, MtxLayout};
use bsep::validation::{match_spectra, pair_spectrum, reference_eigenvalues, subspace_distance};
use bsep::{assemble_hamiltonian, check_structure, expand_dense, BsepHamiltonian, PiKind, PiMatrix, PiSign, Signature, StructureClaim, C64};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config(cases: u32) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(0x5eed), failure_persistence: None, ..Config::default() }
}

fn random_h(n: usize, seed: u64) -> BsepHamiltonian {
    let spec = GenSpec { n, density: 1.0, seed, mode: GenMode::Random { shift: 0.0 } };
    let (a, b) = generate_problem(&spec).unwrap();
    assemble_hamiltonian(&a, &b, 1e-12).unwrap()
}

fn max_modulus(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest 2-norm among the generating vectors; the Lanczos bounds below
/// assume a basis that is not close to isotropic.
fn basis_growth(st: &bsep::glanczos::LanczosState) -> f64 {
    st.q.iter().map(|q| norm2(q)).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn spectra_come_in_pairs(n in 1usize..=8, seed in any::<u64>()) {
        let h = random_h(n, seed);
        let oracle = reference_eigenvalues(&expand_dense(&h).unwrap()).unwrap();
        let tol = 1e-9 * max_modulus(&oracle);
        prop_assert!(pair_spectrum(&oracle, tol).is_ok());
        let res = gqr_eigenvalues(&h, &GqrOptions::default()).unwrap();
        prop_assert!(pair_spectrum(&res.eigenvalues, tol).is_ok());
    }

    #[test]
    fn reduction_keeps_structure_and_spectrum(n in 2usize..=10, seed in any::<u64>()) {
        let h = random_h(n, seed);
        let red = tridiagonalize(TridiagInput::Hamiltonian(&h), PiKind::PiMinus, false).unwrap();
        let td = red.t.to_dense();
        let rep = check_structure(&td, StructureClaim::PiMinusHermitian, &red.t.signature(), f64::INFINITY);
        prop_assert!(rep.deviation <= 1e-12 * td.norm_one());
        let mu = reference_eigenvalues(&td).unwrap();
        let lam = reference_eigenvalues(&expand_dense(&h).unwrap()).unwrap();
        let assign = match_spectra(&mu, &lam).unwrap();
        let worst = mu.iter().zip(&assign).map(|(m, &j)| (m - lam[j]).norm()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-9 * h.norm_one() * red.growth_factor.max(1.0), "{worst}");
    }

    #[test]
    fn factorization_reproduces_input(n in 1usize..=6, extra in 0usize..=2, seed in any::<u64>(), signs in prop::collection::vec(any::<bool>(), 8)) {
        let m = n;
        let rows = n + extra;
        let h = random_h(rows.max(m), seed);
        let g = PiMatrix { sign: PiSign::Plus, g1: h.a().block(0, rows, 0, m), g2: h.b().block(0, rows, 0, m) };
        let s = Signature::new(signs[..rows].iter().map(|&b| if b { 1 } else { -1 }).collect()).unwrap();
        if let Ok(f) = gqr_factorize(&g, &s, FactorMode::Full) {
            let gd = g.to_dense();
            let q = f.q.to_dense();
            let qr = q.matmul(&f.r.to_dense());
            let growth = f.growth_factor.max(1.0);
            prop_assert!(qr.sub(&gd).norm_fro() <= 1e-10 * gd.norm_fro() * growth);
            let gram = q.adjoint().matmul(&f.s_in.to_dense()).matmul(&q);
            prop_assert!(gram.sub(&f.s_out.to_dense()).norm_max() <= 1e-10 * growth);
        }
    }

    #[test]
    fn lanczos_invariants(n in 3usize..=12, k in 1usize..=6, seed in any::<u64>()) {
        let h = random_h(n, seed);
        let q1 = random_start(2 * n, seed).unwrap();
        let k = k.min(n);
        let st = glanczos_decompose(&h, &q1, k, &LanczosOptions::default()).unwrap();
        prop_assert!(st.max_alpha_imag <= 1e-10);
        prop_assert!(st.max_form_imag <= 1e-10);
        prop_assume!(st.breakdown.is_none() && basis_growth(&st) <= 10.0);
        prop_assert!(st.max_z_orth <= 1e-9, "{}", st.max_z_orth);
        prop_assert!(decomposition_residual(&h, &st).unwrap() <= 1e-10 * (1.0 + h.norm_one()));
        prop_assert!(st.orthogonality_defect() <= 1e-8);
        let mut pairs = ritz_pairs(&st, 2 * k, Which::LargestModulus).unwrap();
        true_residuals(&h, &mut pairs).unwrap();
        for p in &pairs {
            let t = p.resid_true.unwrap();
            prop_assert!((t - p.resid_estimate).abs() <= 1e-8 * (1.0 + p.resid_estimate));
        }
    }

    #[test]
    fn lanczos_spans_the_krylov_space(n in 3usize..=8, k in 1usize..=4, seed in any::<u64>()) {
        let h = random_h(n, seed);
        let q1 = random_start(2 * n, seed).unwrap();
        let st = glanczos_decompose(&h, &q1, k, &LanczosOptions::default()).unwrap();
        prop_assume!(st.breakdown.is_none() && basis_growth(&st) <= 10.0);
        let kry = build_krylov_matrix(&h, &q1, k + 1).unwrap().to_dense();
        prop_assert!(subspace_distance(&st.extended_basis(), &kry).unwrap() <= 1e-8);
    }

    #[test]
    fn reorthogonalization_order_does_not_matter(n in 3usize..=10, seed in any::<u64>()) {
        let h = random_h(n, seed);
        let q1 = random_start(2 * n, seed).unwrap();
        let k = n.min(5);
        let fwd = glanczos_decompose(&h, &q1, k, &LanczosOptions::default()).unwrap();
        let rev = glanczos_decompose(&h, &q1, k, &LanczosOptions { reverse_order: true, ..LanczosOptions::default() }).unwrap();
        prop_assume!(fwd.breakdown.is_none() && basis_growth(&fwd) <= 10.0);
        let (a, b) = (fwd.t_tilde(), rev.t_tilde());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x.norm() - y.norm()).abs() <= 1e-9);
        }
    }

    #[test]
    fn matrix_market_round_trip(rows in 1usize..=6, cols in 1usize..=6, data in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 36)) {
        let m = ComplexDense::from_fn(rows, cols, |i, j| {
            let (re, im) = data[i * 6 + j];
            C64::new(re, im)
        });
        for layout in [MtxLayout::Coordinate, MtxLayout::Array] {
            prop_assert_eq!(parse_matrix_market(&format_matrix_market(&m, layout)).unwrap(), m.clone());
        }
    }

    #[test]
    fn generator_is_deterministic_and_structured(n in 1usize..=12, seed in any::<u64>(), density in 0.0f64..=1.0) {
        let spec = GenSpec { n, density, seed, mode: GenMode::Random { shift: 0.5 } };
        let (a, b) = generate_problem(&spec).unwrap();
        let (a2, b2) = generate_problem(&spec).unwrap();
        prop_assert_eq!(&a, &a2);
        prop_assert_eq!(&b, &b2);
        prop_assert_eq!(a.adjoint(), a);
        prop_assert_eq!(b.transpose(), b);
    }
}
