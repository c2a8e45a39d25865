use std::path::PathBuf;
use std::process::ExitCode;

use bsep::cli::{emit, exit_code_for, run, Command, OutputFormat, RunConfig};
use bsep::glanczos::{Reorth, Which};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bsep", version, about = "Structure-preserving eigensolvers for Bethe-Salpeter Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full spectrum by structured tridiagonal reduction and QR iteration.
    SolveDense(Common),
    /// A few eigenvalues by the structured Lanczos process.
    SolveLanczos(Common),
    /// Run the invariant checks on one instance.
    Validate(Common),
    /// Operation counts and timings over a range of sizes.
    Bench(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichArg {
    Largest,
    Smallest,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReorthArg {
    None,
    Full,
    Selective,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Matrix Market file for A (Hermitian).
    #[arg(long)]
    a: Option<PathBuf>,
    /// Matrix Market file for B (complex symmetric); zero when omitted.
    #[arg(long)]
    b: Option<PathBuf>,
    /// Generator spec, e.g. random:n=30,seed=1 or knownSpectrum:2,3.
    #[arg(long)]
    gen: Option<String>,
    /// Lanczos steps.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Shift-and-invert target as re,im (Lanczos only).
    #[arg(long, value_delimiter = ',', num_args = 1..=2)]
    sigma: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "largest")]
    which: WhichArg,
    /// Number of Ritz values to report (completed to whole pairs).
    #[arg(long, default_value_t = 6)]
    howmany: usize,
    #[arg(long, value_enum, default_value = "full")]
    reorth: ReorthArg,
    #[arg(long, default_value_t = 1e-14)]
    tol: f64,
    /// Refinement steps on the Hamiltonian after inverse iteration.
    #[arg(long, default_value_t = 3)]
    refine: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Half orders for bench.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    sizes: Vec<usize>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format; inferred from the --out extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

fn config_from(command: Command, c: Common) -> Result<RunConfig, String> {
    let sigma = match c.sigma.as_deref() {
        None => None,
        Some([re]) => Some([*re, 0.0]),
        Some([re, im]) => Some([*re, *im]),
        Some(_) => return Err("--sigma takes re[,im]".into()),
    };
    let format = match c.format {
        Some(FormatArg::Json) => OutputFormat::Json,
        Some(FormatArg::Csv) => OutputFormat::Csv,
        None if c.out.as_ref().and_then(|p| p.extension()).is_some_and(|e| e == "csv") => OutputFormat::Csv,
        None => OutputFormat::Json,
    };
    let threads = match std::env::var("BSEP_THREADS") {
        Ok(v) => v.parse().map_err(|_| format!("BSEP_THREADS must be a positive integer, got `{v}`"))?,
        Err(_) => 1,
    };
    Ok(RunConfig {
        command,
        a: c.a,
        b: c.b,
        gen: c.gen,
        k: c.k,
        sigma,
        which: match c.which {
            WhichArg::Largest => Which::LargestModulus,
            WhichArg::Smallest => Which::SmallestModulus,
        },
        how_many: c.howmany,
        reorth: match c.reorth {
            ReorthArg::None => Reorth::None,
            ReorthArg::Full => Reorth::Full,
            ReorthArg::Selective => Reorth::Selective,
        },
        tol_deflate: c.tol,
        refine_steps: c.refine,
        seed: c.seed,
        sizes: c.sizes,
        out: c.out,
        format,
        threads,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, common) = match cli.command {
        Cmd::SolveDense(c) => (Command::SolveDense, c),
        Cmd::SolveLanczos(c) => (Command::SolveLanczos, c),
        Cmd::Validate(c) => (Command::Validate, c),
        Cmd::Bench(c) => (Command::Bench, c),
    };
    let config = match config_from(command, common) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{}", serde_json::json!({ "schema": 1, "error": { "kind": "Usage", "message": msg } }));
            return ExitCode::from(1);
        }
    };
    let (mut code, report) = run(&config);
    if let Some(err) = &report.error {
        eprintln!("{}", serde_json::json!({ "schema": 1, "error": err }));
    }
    if let Err(e) = emit(&report) {
        eprintln!("{}", serde_json::json!({ "schema": 1, "error": { "kind": "Io", "message": e.to_string() } }));
        code = exit_code_for(&e);
    }
    ExitCode::from(code as u8)
}
