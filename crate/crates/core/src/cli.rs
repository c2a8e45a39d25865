//! Batch commands behind the `bsep` binary: problem loading, solver runs and
//! JSON/CSV reports.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{BsepError, Result};
use crate::generate::{generate_problem, parse_gen_spec};
use crate::glanczos::{
    build_shift_invert, decomposition_residual, glanczos_decompose, random_start, recover_eigenpairs, ritz_pairs, true_residuals, Breakdown,
    BreakdownKind, LanczosOptions, Reorth, Which,
};
use crate::gqr_solver::{gqr_eigenpairs, gqr_eigenvalues, implicit_sweep_raw, tridiagonalize, Filter, GqrOptions, TridiagInput};
use crate::hamiltonian::{assemble_hamiltonian, expand_dense, BsepHamiltonian};
use crate::matrix::ComplexDense;
use crate::mtx::read_matrix_market;
use crate::pimatrix::PiKind;
use crate::structure::{check_structure, StructureClaim};
use crate::validation::{eig_report, hessenberg_reduce, pair_spectrum, reference_eigenvalues, residual_norm, SpectrumGroup};

pub const SCHEMA: u32 = 1;
/// Largest half order for which the dense oracle is run automatically.
pub const ORACLE_CAP: usize = 400;
/// Tolerance for accepting symmetric input data.
pub const INPUT_SYM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveDense,
    SolveLanczos,
    Validate,
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub command: Command,
    pub a: Option<PathBuf>,
    pub b: Option<PathBuf>,
    pub gen: Option<String>,
    /// Lanczos steps.
    pub k: usize,
    /// Shift for shift-and-invert Lanczos, as [re, im].
    pub sigma: Option<[f64; 2]>,
    pub which: Which,
    pub how_many: usize,
    pub reorth: Reorth,
    pub tol_deflate: f64,
    pub refine_steps: usize,
    pub seed: u64,
    /// Half orders for `bench`.
    pub sizes: Vec<usize>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::SolveDense,
            a: None,
            b: None,
            gen: None,
            k: 20,
            sigma: None,
            which: Which::LargestModulus,
            how_many: 6,
            reorth: Reorth::Full,
            tol_deflate: GqrOptions::default().tol_deflate,
            refine_steps: 3,
            seed: 1,
            sizes: vec![50, 100, 200],
            out: None,
            format: OutputFormat::Json,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    /// e(mu) per reported eigenvalue, when the oracle ran.
    pub e: Vec<Option<f64>>,
    /// r(mu, z) per reported eigenvalue.
    pub r: Vec<Option<f64>>,
    /// Residual estimates of Ritz pairs (Lanczos only).
    pub resid_estimate: Vec<f64>,
    pub max_relative_error: Option<f64>,
    pub max_residual: Option<f64>,
    /// Largest |lambda + conj(partner)| relative to max |lambda|.
    pub max_pairing_defect: Option<f64>,
    pub scalars: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Counters {
    pub flops: u64,
    pub reduction_flops: u64,
    pub sweep_flops: u64,
    pub sweeps: usize,
    pub exceptional_shifts: usize,
    pub deflations: usize,
    pub apply_calls: usize,
    pub lanczos_steps: usize,
    pub breakdown: Option<Breakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchRow {
    pub n: usize,
    pub tridiag_flops: u64,
    pub hessenberg_flops: u64,
    pub ratio: f64,
    pub sweep_flops: u64,
    pub tridiag_seconds: f64,
    pub hessenberg_seconds: f64,
    pub sweep_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorObject {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub schema: u32,
    pub config: RunConfig,
    pub status: String,
    pub eigenvalues: Vec<[f64; 2]>,
    pub pairs: Vec<SpectrumGroup>,
    pub metrics: Metrics,
    pub counters: Counters,
    pub timings: BTreeMap<String, f64>,
    pub bench: Vec<BenchRow>,
    pub error: Option<ErrorObject>,
}

impl Report {
    fn new(config: &RunConfig) -> Self {
        Report {
            schema: SCHEMA,
            config: config.clone(),
            status: "ok".into(),
            eigenvalues: Vec::new(),
            pairs: Vec::new(),
            metrics: Metrics::default(),
            counters: Counters::default(),
            timings: BTreeMap::new(),
            bench: Vec::new(),
            error: None,
        }
    }

    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        *self.timings.entry(phase.to_string()).or_default() += t0.elapsed().as_secs_f64();
        out
    }

    fn check(&mut self, name: &str, value: f64, bound: f64) {
        self.metrics.checks.push(Check { name: name.into(), value, bound, pass: value <= bound });
    }

    fn set_eigenvalues(&mut self, values: &[C64]) {
        self.eigenvalues = values.iter().map(|z| [z.re, z.im]).collect();
        let scale = values.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        if let Ok(rep) = pair_spectrum(values, f64::INFINITY) {
            self.metrics.max_pairing_defect = Some(rep.max_defect / scale);
            self.pairs = rep.groups;
        }
    }

    /// Tabular view: one row per eigenvalue, or per size for `bench`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.config.command == Command::Bench {
            out.push_str("n,tridiagFlops,hessenbergFlops,ratio,sweepFlops,tridiagSeconds,hessenbergSeconds,sweepSeconds\n");
            for r in &self.bench {
                out.push_str(&format!(
                    "{},{},{},{:.6},{},{:.6e},{:.6e},{:.6e}\n",
                    r.n, r.tridiag_flops, r.hessenberg_flops, r.ratio, r.sweep_flops, r.tridiag_seconds, r.hessenberg_seconds, r.sweep_seconds
                ));
            }
            return out;
        }
        let opt = |v: Option<&Option<f64>>| v.copied().flatten().map_or(String::new(), |x| format!("{x:.6e}"));
        out.push_str("index,re,im,e,r,residEstimate\n");
        for (i, z) in self.eigenvalues.iter().enumerate() {
            let est = self.metrics.resid_estimate.get(i).map_or(String::new(), |x| format!("{x:.6e}"));
            out.push_str(&format!("{i},{:.17e},{:.17e},{},{},{est}\n", z[0], z[1], opt(self.metrics.e.get(i)), opt(self.metrics.r.get(i))));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Variant name of an error, for the machine-readable error object.
pub fn error_kind(e: &BsepError) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

pub fn exit_code_for(e: &BsepError) -> i32 {
    match e {
        BsepError::Io(_) | BsepError::ParseError { .. } | BsepError::UnsupportedField(_) => 4,
        BsepError::InvalidSpec(_)
        | BsepError::DimensionMismatch { .. }
        | BsepError::StructureViolation { .. }
        | BsepError::NonFinite
        | BsepError::SizeLimitExceeded { .. }
        | BsepError::OddLength(_) => 1,
        _ => 2,
    }
}

pub fn load_problem(config: &RunConfig) -> Result<BsepHamiltonian> {
    let (a, b) = match (&config.gen, &config.a) {
        (Some(g), None) => generate_problem(&parse_gen_spec(g)?)?,
        (None, Some(pa)) => {
            let a = read_matrix_market(pa)?;
            let b = match &config.b {
                Some(pb) => read_matrix_market(pb)?,
                None => ComplexDense::zeros(a.rows(), a.cols()),
            };
            (a, b)
        }
        (Some(_), Some(_)) => return Err(BsepError::InvalidSpec("give either --gen or --a/--b, not both".into())),
        (None, None) => return Err(BsepError::InvalidSpec("no input: give --gen or --a/--b".into())),
    };
    assemble_hamiltonian(&a, &b, INPUT_SYM_TOL)
}

fn oracle(h: &BsepHamiltonian, report: &mut Report) -> Result<Option<Vec<C64>>> {
    if h.n() > ORACLE_CAP {
        return Ok(None);
    }
    let hd = expand_dense(h)?;
    report.time("oracle", || reference_eigenvalues(&hd)).map(Some)
}

fn attach_oracle_metrics(h: &BsepHamiltonian, report: &mut Report, values: &[C64], vectors: &[Vec<C64>]) -> Result<()> {
    let residuals: Vec<Option<f64>> = values.iter().zip(vectors).map(|(v, z)| residual_norm(h, *v, z).ok()).collect();
    report.metrics.max_residual = residuals.iter().flatten().copied().reduce(f64::max);
    report.metrics.r = residuals;
    if let Some(reference) = oracle(h, report)? {
        let rep = eig_report(h, values, None, &reference)?;
        report.metrics.e = rep.pairs.iter().map(|p| p.relative_error).collect();
        report.metrics.max_relative_error = Some(rep.max_relative_error);
    }
    Ok(())
}

fn solve_dense(config: &RunConfig, report: &mut Report) -> Result<()> {
    let h = report.time("assemble", || load_problem(config))?;
    let opts = GqrOptions { tol_deflate: config.tol_deflate, keep_accumulator: true, seed: config.seed, ..GqrOptions::default() };
    let res = report.time("solve", || gqr_eigenvalues(&h, &opts))?;
    let pairs = report.time("refine", || gqr_eigenpairs(&h, &res, config.refine_steps))?;
    let values: Vec<C64> = pairs.iter().map(|p| p.value).collect();
    let vectors: Vec<Vec<C64>> = pairs.iter().map(|p| p.vector.clone()).collect();
    report.set_eigenvalues(&values);
    let st = res.stats;
    report.counters = Counters {
        flops: st.reduction_flops + st.sweep_flops,
        reduction_flops: st.reduction_flops,
        sweep_flops: st.sweep_flops,
        sweeps: st.sweeps,
        exceptional_shifts: st.exceptional_shifts,
        deflations: st.deflations,
        ..Counters::default()
    };
    report.metrics.scalars.insert("growthFactor".into(), res.reduction.growth_factor);
    report.metrics.scalars.insert("maxStage1Residual".into(), pairs.iter().map(|p| p.residual_stage1).fold(0.0, f64::max));
    attach_oracle_metrics(&h, report, &values, &vectors)
}

fn lanczos_options(config: &RunConfig) -> LanczosOptions {
    LanczosOptions { reorth: config.reorth, ..LanczosOptions::default() }
}

fn solve_lanczos(config: &RunConfig, report: &mut Report) -> Result<()> {
    let h = report.time("assemble", || load_problem(config))?;
    let q1 = random_start(2 * h.n(), config.seed)?;
    let opts = lanczos_options(config);
    let (values, vectors, state) = match config.sigma {
        Some([re, im]) => {
            let si = report.time("factor", || build_shift_invert(&h, C64::new(re, im)))?;
            let st = report.time("lanczos", || glanczos_decompose(&si, &q1, config.k, &opts))?;
            let mut pairs = report.time("ritz", || ritz_pairs(&st, config.how_many, Which::LargestModulus))?;
            true_residuals(&si, &mut pairs)?;
            let rec = report.time("recover", || recover_eigenpairs(&h, &si, &pairs, 1e-6))?;
            report.metrics.scalars.insert("shiftInvertDegree".into(), si.degree() as f64);
            let values: Vec<C64> = rec.iter().map(|r| r.lambda).collect();
            let vectors: Vec<Vec<C64>> = rec.into_iter().map(|r| r.vector).collect();
            (values, vectors, st)
        }
        None => {
            let st = report.time("lanczos", || glanczos_decompose(&h, &q1, config.k, &opts))?;
            let mut pairs = report.time("ritz", || ritz_pairs(&st, config.how_many, config.which))?;
            true_residuals(&h, &mut pairs)?;
            report.metrics.resid_estimate = pairs.iter().map(|p| p.resid_estimate).collect();
            let values: Vec<C64> = pairs.iter().map(|p| p.nu).collect();
            let vectors: Vec<Vec<C64>> = pairs.into_iter().map(|p| p.z).collect();
            (values, vectors, st)
        }
    };
    report.set_eigenvalues(&values);
    report.counters.apply_calls = state.apply_calls;
    report.counters.lanczos_steps = state.steps();
    report.counters.breakdown = state.breakdown;
    report.metrics.scalars.insert("orthogonalityDefect".into(), state.orthogonality_defect());
    attach_oracle_metrics(&h, report, &values, &vectors)?;
    if matches!(state.breakdown, Some(Breakdown { kind: BreakdownKind::Isotropic, .. })) {
        report.status = "breakdown".into();
    }
    Ok(())
}

fn validate(config: &RunConfig, report: &mut Report) -> Result<()> {
    let h = report.time("assemble", || load_problem(config))?;
    let hd = expand_dense(&h)?;
    let reference = report.time("oracle", || reference_eigenvalues(&hd))?;
    let scale = reference.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let oracle_defect = pair_spectrum(&reference, f64::INFINITY)?.max_defect / scale;
    report.check("oraclePairingDefect", oracle_defect, 1e-9);

    let opts = GqrOptions { tol_deflate: config.tol_deflate, keep_accumulator: true, seed: config.seed, ..GqrOptions::default() };
    let res = report.time("solve", || gqr_eigenvalues(&h, &opts))?;
    let solver_defect = pair_spectrum(&res.eigenvalues, f64::INFINITY)?.max_defect / scale;
    report.check("solverPairingDefect", solver_defect, 1e-9);
    report.metrics.max_pairing_defect = Some(oracle_defect.max(solver_defect));

    let t = &res.reduction.t;
    let td = t.to_dense();
    let dev = check_structure(&td, StructureClaim::PiMinusHermitian, &t.signature(), f64::INFINITY).deviation;
    report.check("tridiagonalStructure", dev / td.norm_one().max(f64::MIN_POSITIVE), 1e-9);

    let pairs = report.time("refine", || gqr_eigenpairs(&h, &res, config.refine_steps))?;
    let values: Vec<C64> = pairs.iter().map(|p| p.value).collect();
    let vectors: Vec<Vec<C64>> = pairs.iter().map(|p| p.vector.clone()).collect();
    let rep = eig_report(&h, &values, Some(&vectors), &reference)?;
    report.check("maxRelativeError", rep.max_relative_error, 1e-8);
    report.check("maxResidual", rep.max_residual.unwrap_or(f64::INFINITY), 1e-12);

    let k = config.k.min(h.n()).max(1);
    let q1 = random_start(2 * h.n(), config.seed)?;
    let st = report.time("lanczos", || glanczos_decompose(&h, &q1, k, &LanczosOptions::default()))?;
    let ident = decomposition_residual(&h, &st)?;
    report.check("lanczosIdentity", ident / (1.0 + h.norm_one()), 1e-10);
    report.check("lanczosOrthogonality", st.orthogonality_defect(), 1e-8);

    report.eigenvalues = values.iter().map(|z| [z.re, z.im]).collect();
    report.pairs = pair_spectrum(&values, f64::INFINITY)?.groups;
    report.metrics.e = rep.pairs.iter().map(|p| p.relative_error).collect();
    report.metrics.r = rep.pairs.iter().map(|p| p.residual).collect();
    report.metrics.max_relative_error = Some(rep.max_relative_error);
    report.metrics.max_residual = rep.max_residual;
    report.counters.flops = res.stats.reduction_flops + res.stats.sweep_flops;
    report.counters.reduction_flops = res.stats.reduction_flops;
    report.counters.sweep_flops = res.stats.sweep_flops;
    report.counters.sweeps = res.stats.sweeps;
    report.counters.apply_calls = st.apply_calls;
    report.counters.lanczos_steps = st.steps();
    if report.metrics.checks.iter().any(|c| !c.pass) {
        report.status = "validationFailure".into();
    }
    Ok(())
}

/// Least-squares c for f = c x and its coefficient of determination.
pub fn fit_through_origin(x: &[f64], f: &[f64]) -> (f64, f64) {
    let c = x.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|a| a * a).sum::<f64>();
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    let ss_res: f64 = x.iter().zip(f).map(|(a, b)| (b - c * a).powi(2)).sum();
    let ss_tot: f64 = f.iter().map(|b| (b - mean).powi(2)).sum();
    (c, if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 })
}

fn bench(config: &RunConfig, report: &mut Report) -> Result<()> {
    if config.sizes.is_empty() {
        return Err(BsepError::InvalidSpec("bench needs at least one size".into()));
    }
    let base = config.gen.clone().unwrap_or_else(|| format!("random:n=1,seed={}", config.seed));
    for &n in &config.sizes {
        let mut spec = parse_gen_spec(&base)?;
        spec.n = n;
        let (a, b) = generate_problem(&spec)?;
        let h = assemble_hamiltonian(&a, &b, INPUT_SYM_TOL)?;
        let t0 = Instant::now();
        let red = tridiagonalize(TridiagInput::Hamiltonian(&h), PiKind::PiMinus, false)?;
        let tridiag_seconds = t0.elapsed().as_secs_f64();
        let hd = expand_dense(&h)?;
        let t0 = Instant::now();
        let (_, hess_flops) = hessenberg_reduce(&hd);
        let hessenberg_seconds = t0.elapsed().as_secs_f64();
        let shift = C64::new(red.t.alpha[n - 1], 0.0);
        let t0 = Instant::now();
        let (_, sweep) = implicit_sweep_raw(&red.t, Filter::from_shift(PiKind::PiMinus, shift))?;
        let sweep_seconds = t0.elapsed().as_secs_f64();
        report.bench.push(BenchRow {
            n,
            tridiag_flops: red.flops,
            hessenberg_flops: hess_flops,
            ratio: red.flops as f64 / hess_flops as f64,
            sweep_flops: sweep.flops,
            tridiag_seconds,
            hessenberg_seconds,
            sweep_seconds,
        });
    }
    let ns: Vec<f64> = report.bench.iter().map(|r| r.n as f64).collect();
    let cubes: Vec<f64> = ns.iter().map(|n| n.powi(3)).collect();
    let (c, r2) = fit_through_origin(&cubes, &report.bench.iter().map(|r| r.tridiag_flops as f64).collect::<Vec<_>>());
    let (c_sweep, r2_sweep) = fit_through_origin(&ns, &report.bench.iter().map(|r| r.sweep_flops as f64).collect::<Vec<_>>());
    let s = &mut report.metrics.scalars;
    s.insert("tridiagCubicCoefficient".into(), c);
    s.insert("tridiagFitR2".into(), r2);
    s.insert("sweepLinearCoefficient".into(), c_sweep);
    s.insert("sweepFitR2".into(), r2_sweep);
    report.counters.flops = report.bench.iter().map(|r| r.tridiag_flops).sum();
    Ok(())
}

/// Runs one command; the report carries either results or an error object.
pub fn run(config: &RunConfig) -> (i32, Report) {
    let mut report = Report::new(config);
    let res = match config.command {
        Command::SolveDense => solve_dense(config, &mut report),
        Command::SolveLanczos => solve_lanczos(config, &mut report),
        Command::Validate => validate(config, &mut report),
        Command::Bench => bench(config, &mut report),
    };
    let code = match res {
        Ok(()) => match report.status.as_str() {
            "breakdown" => 2,
            "validationFailure" => 3,
            _ => 0,
        },
        Err(e) => {
            let code = exit_code_for(&e);
            report.status = "error".into();
            report.error = Some(ErrorObject { kind: error_kind(&e), message: e.to_string() });
            code
        }
    };
    (code, report)
}

/// Serializes the report to `config.out` (or stdout) in the chosen format.
pub fn emit(report: &Report) -> Result<()> {
    let text = match report.config.format {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Csv => report.to_csv(),
    };
    match &report.config.out {
        Some(p) => std::fs::write(p, text).map_err(|e| BsepError::Io(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_and_codes() {
        assert_eq!(error_kind(&BsepError::ZeroVector), "ZeroVector");
        assert_eq!(error_kind(&BsepError::ParseError { line: 3, msg: "x".into() }), "ParseError");
        assert_eq!(exit_code_for(&BsepError::Io("x".into())), 4);
        assert_eq!(exit_code_for(&BsepError::InvalidSpec("x".into())), 1);
        assert_eq!(exit_code_for(&BsepError::PrincipalMinorBreakdown { column: 0 }), 2);
    }

    #[test]
    fn fit_recovers_exact_coefficient() {
        let (c, r2) = fit_through_origin(&[1.0, 8.0, 27.0], &[2.0, 16.0, 54.0]);
        assert!((c - 2.0).abs() < 1e-15 && (r2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lanczos_on_known_spectrum_orders_by_modulus() {
        let config = RunConfig {
            command: Command::SolveLanczos,
            gen: Some("knownSpectrum:2,3".into()),
            k: 4,
            which: Which::SmallestModulus,
            how_many: 2,
            ..RunConfig::default()
        };
        let (code, report) = run(&config);
        assert_eq!(code, 0, "{:?}", report.error);
        let mut first: Vec<f64> = report.eigenvalues[..2].iter().map(|z| z[0]).collect();
        first.sort_by(f64::total_cmp);
        assert!((first[0] + 2.0).abs() < 1e-12 && (first[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn validate_random_instance() {
        let config = RunConfig { command: Command::Validate, gen: Some("random:n=30,seed=1".into()), ..RunConfig::default() };
        let (code, report) = run(&config);
        assert_eq!(code, 0, "{:?}", report.metrics.checks);
        assert!(report.metrics.max_pairing_defect.unwrap() <= 1e-9);
    }

    #[test]
    fn missing_input_is_a_usage_error() {
        let (code, report) = run(&RunConfig::default());
        assert_eq!(code, 1);
        assert_eq!(report.error.unwrap().kind, "InvalidSpec");
    }
}
