//! `detlab`: batch runner for the determinantal point process suites.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! contract violation, 1 I/O failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::output::{sha256_hex, Manifest, OutputDir};

/// Environment variable overriding the output directory.
const OUT_ENV: &str = "DETLAB_OUT";
const DEFAULT_OUT: &str = "detlab-out";
const DEFAULT_SEED: u64 = 1;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Module(detlab::Error),
    Io(String),
}

impl From<detlab::Error> for CliError {
    fn from(e: detlab::Error) -> Self {
        CliError::Module(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Module(e) if e.is_numerical() => 3,
            CliError::Module(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    fn payload(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m.clone()),
            CliError::Module(e) => (error_kind(e), e.to_string()),
            CliError::Io(m) => ("io", m.clone()),
        };
        serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": self.exit_code() } })
    }
}

fn error_kind(e: &detlab::Error) -> &'static str {
    use detlab::Error::*;
    match e {
        Dimension { .. } => "dimension",
        DegenerateBasis { .. } => "degenerate_basis",
        AngleDegeneracy { .. } => "angle_degeneracy",
        Inducibility { .. } => "inducibility",
        ConditioningImpossible { .. } => "conditioning_impossible",
        Size { .. } => "size",
        Domain(_) => "domain",
        Contract(_) => "contract",
        Argument(_) => "argument",
        Precondition(_) => "precondition",
        Format(_) => "format",
        Io(_) => "io",
        Json(_) => "json",
    }
}

#[derive(Debug, Parser)]
#[command(name = "detlab", version, about = "Determinantal point process experiment runner")]
struct Cli {
    /// JSON experiment config: {"suite", "seed", "out", "params"}.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory (overrides DETLAB_OUT and the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Conditioning oracle-equivalence battery.
    Oracle {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Induced kernel B~(g, Pi) with inducibility and ideal-bound report.
    Induce,
    /// Finite-rank perturbation convergence suite.
    Perturb,
    /// Exhaustion suite Pi^{E0 u Bn} -> Q.
    Exhaust,
    /// Jacobi to Bessel hard-edge scaling suite.
    Scaling {
        /// Jacobi parameters, comma separated.
        #[arg(long, value_delimiter = ',')]
        s: Option<Vec<f64>>,
        /// Polynomial degrees, comma separated and increasing.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
    },
    /// Tightness report and Chebyshev mass checks for a kernel family.
    Tightness,
    /// Two-sample weak-convergence suite and its calibration.
    Weakconv {
        #[arg(long)]
        skip_calibration: bool,
    },
    /// Raw exact samples of one kernel.
    Sample {
        #[arg(long)]
        count: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Oracle { .. } => "oracle",
            Command::Induce => "induce",
            Command::Perturb => "perturb",
            Command::Exhaust => "exhaust",
            Command::Scaling { .. } => "scaling",
            Command::Tightness => "tightness",
            Command::Weakconv { .. } => "weakconv",
            Command::Sample { .. } => "sample",
        }
    }
}

fn configure_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    let Some(n) = jobs else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("--jobs must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    eprintln!("detlab: built without parallel support; --jobs {n} ignored");
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    configure_jobs(cli.jobs)?;
    let loaded = cli.config.as_deref().map(config::load).transpose()?;
    let envelope = loaded.as_ref().map(|c| &c.envelope);
    let seed = cli
        .seed
        .or(envelope.and_then(|e| e.seed))
        .unwrap_or(DEFAULT_SEED);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or(envelope.and_then(|e| e.out.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut out = OutputDir::create(out_dir)?;
    let name = cli.command.name();
    let ctx = Context {
        seed,
        config: loaded.as_ref(),
        out: &mut out,
    };
    let outcome = match cli.command {
        Command::Oracle { trials } => commands::oracle(ctx, trials),
        Command::Induce => commands::induce(ctx),
        Command::Perturb => commands::perturb(ctx),
        Command::Exhaust => commands::exhaust(ctx),
        Command::Scaling { s, n } => commands::scaling(ctx, s, n),
        Command::Tightness => commands::tightness(ctx),
        Command::Weakconv { skip_calibration } => commands::weakconv(ctx, skip_calibration),
        Command::Sample { count } => commands::sample(ctx, count),
    }?;
    let params_text = serde_json::to_string(&outcome.params).expect("JSON value serializes");
    let manifest = Manifest {
        tool: "detlab",
        cli_version: env!("CARGO_PKG_VERSION"),
        core_version: detlab::VERSION,
        subcommand: name.to_string(),
        args: std::env::args().skip(1).collect(),
        seed,
        rng: detlab::rng::ALGORITHM_ID,
        parallel: detlab::par::is_parallel(),
        jobs: cli.jobs,
        config_path: loaded.as_ref().map(|c| c.path.clone()),
        config_sha256: loaded.as_ref().map(|c| sha256_hex(&c.bytes)),
        effective_params_sha256: sha256_hex(params_text.as_bytes()),
        effective_params: outcome.params,
        files: Vec::new(),
    };
    let dir = out.dir().to_path_buf();
    out.finish(manifest)?;
    println!("{}", outcome.summary);
    println!("outputs in {}", dir.display());
    Ok(if outcome.contract_failed {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.payload());
            ExitCode::from(e.exit_code())
        }
    }
}
