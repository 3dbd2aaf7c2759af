//! `contour-opt`: data-driven probability-contour optimization from the shell.

// `!(x > 0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{FileConfig, ZetaArg};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "contour-opt", version, about = "Solve probability-contour-constrained programs from historical data")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Write `<command>.json` (and CSV tables) here instead of printing to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Omit wall-clock fields so identical runs give identical bytes.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    /// Seed for every randomized stage. Falls back to CONTOUR_OPT_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate vicinity densities and drop points below the α-level.
    Alpha(AlphaArgs),
    /// Filter, subsample, and thin a dataset.
    Reduce(ReduceArgs),
    /// Run the DC optimal power flow pipeline and report every stage.
    Opf(OpfArgs),
    /// Run a verification experiment.
    Verify(VerifyArgs),
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset file (CSV or JSON).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of leading integer-valued columns.
    #[arg(long)]
    pub integer_cols: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// α-level in [0, 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Vicinity radius, or `auto` to pick the smoothest of a grid.
    #[arg(long, value_parser = ZetaArg::parse)]
    pub zeta: Option<ZetaArg>,
    /// Comma-separated candidate radii for `--zeta auto`.
    #[arg(long, value_delimiter = ',')]
    pub zeta_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Target probability of keeping the optimum, in [0, 1).
    #[arg(long)]
    pub rho: Option<f64>,
    /// SDS radius; 0 keeps every sampled point, absent skips thinning.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Boundary-point bound; defaults to the data dimension.
    #[arg(long)]
    pub b_bar: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageSel {
    /// `D_α`, `D_α^z`, and the thinned set.
    All,
    /// Skip thinning.
    ZOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceSel {
    Shared,
    PerStage,
}

#[derive(Debug, Args)]
pub struct OpfArgs {
    /// Case JSON path, or a bundled name (`case6`, `case39`).
    #[arg(long)]
    pub case: Option<String>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub filter: FilterArgs,
    #[arg(long)]
    pub rho: Option<f64>,
    /// SDS radius; defaults to the chosen ζ.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Boundary-point bound; defaults to the number of decision variables.
    #[arg(long)]
    pub b_bar: Option<usize>,
    #[arg(long, value_enum, default_value_t = StageSel::All)]
    pub stage: StageSel,
    #[arg(long, value_enum, default_value_t = VarianceSel::Shared)]
    pub variance: VarianceSel,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub eps_abs: Option<f64>,
    #[arg(long)]
    pub eps_rel: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Subsample success frequency against its lower bound.
    Varrho,
    /// Solution proximity after thinning against its lower bound.
    Phi,
    /// Monotonicity of the thinning success rate in the radius.
    Omega,
    /// Contour proxy against scenario feasible sets.
    Scenario,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Trials per setting.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated subsample sizes (varrho).
    #[arg(long, value_delimiter = ',')]
    pub zs: Option<Vec<usize>>,
    /// Radii as `start:stop:count`, evenly spaced (phi, omega).
    #[arg(long, value_parser = parse_sweep)]
    pub eta_sweep: Option<Sweep>,
    /// Subsample size drawn before thinning (omega).
    #[arg(long)]
    pub z: Option<usize>,
    /// Gaussian instances for phi; dataset size for phi and omega.
    #[arg(long)]
    pub size: Option<usize>,
    /// Scenario count (scenario).
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// α-level of the contour proxy (scenario).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Print the sweep table as CSV instead of JSON (phi, omega).
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    Normal,
    Uniform,
    StudentT,
    Integer,
    Mixture,
    /// The bundled six-bus deviation sample.
    Case6,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    /// Output file; `.json` selects JSON. Prints CSV to stdout when absent.
    #[arg(long)]
    pub file: Option<PathBuf>,
}

/// Output written by a command: a JSON result plus optional CSV tables.
pub struct Output {
    pub name: String,
    pub config: serde_json::Value,
    pub result: serde_json::Value,
    pub tables: Vec<(String, String)>,
    /// Print this table on stdout instead of the JSON envelope.
    pub stdout_table: Option<usize>,
    /// Raw text for stdout, bypassing the envelope.
    pub raw: Option<String>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
    command: &'a str,
    config: &'a serde_json::Value,
    result: &'a serde_json::Value,
}

fn emit(cli: &Cli, file: &FileConfig, out: Output) -> Result<(), CliError> {
    if let Some(raw) = out.raw {
        print!("{raw}");
        return Ok(());
    }
    let generated_at_unix = (!cli.no_timestamp).then(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
    });
    let env = Envelope {
        tool_version: env!("CARGO_PKG_VERSION"),
        generated_at_unix,
        command: &out.name,
        config: &out.config,
        result: &out.result,
    };
    let json = serde_json::to_string_pretty(&env).map_err(|e| CliError::compute(e.to_string()))? + "\n";
    match cli.out.clone().or_else(|| file.out.clone()) {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join(format!("{}.json", out.name)), json)?;
            for (name, text) in &out.tables {
                std::fs::write(dir.join(name), text)?;
            }
            eprintln!("wrote {}", dir.join(format!("{}.json", out.name)).display());
        }
        None => match out.stdout_table {
            Some(i) => print!("{}", out.tables[i].1),
            None => print!("{json}"),
        },
    }
    Ok(())
}

/// Evenly spaced radii.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep(pub Vec<f64>);

/// `start:stop:count`, endpoints included.
fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, k] = parts.as_slice() else {
        return Err(format!("expected start:stop:count, got {s:?}"));
    };
    let a: f64 = a.parse().map_err(|_| format!("bad start {a:?}"))?;
    let b: f64 = b.parse().map_err(|_| format!("bad stop {b:?}"))?;
    let k: usize = k.parse().map_err(|_| format!("bad count {k:?}"))?;
    match k {
        0 => Err("count must be at least 1".into()),
        1 => Ok(Sweep(vec![a])),
        _ => Ok(Sweep((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect())),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::compute(format!("thread pool: {e}")))?;
    }
    let out = match &cli.command {
        Command::Alpha(a) => commands::alpha(cli, &file, a)?,
        Command::Reduce(a) => commands::reduce(cli, &file, a)?,
        Command::Opf(a) => commands::opf(cli, &file, a)?,
        Command::Verify(a) => commands::verify(cli, &file, a)?,
        Command::Generate(a) => commands::generate(cli, &file, a)?,
    };
    emit(cli, &file, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
