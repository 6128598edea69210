use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use sphere_energy::manifest::RunManifest;

mod commands;
mod output;
mod report;

/// Exit code for a check that ran and failed.
pub const EXIT_FAIL: u8 = 1;
/// Exit code for malformed input.
pub const EXIT_USAGE: u8 = 2;

pub const SEED_ENV: &str = "SPHERE_ENERGY_SEED";

#[derive(Debug, Parser)]
#[command(name = "sphere-energy", version, about = "Volume energies, k-point kernels and their optimizers on spheres")]
pub struct Cli {
    /// Base seed for every random stream (overridden by SPHERE_ENERGY_SEED).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the available cores. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Also write the run manifest to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energy integral of a kernel against a measure.
    Energy(EnergyArgs),
    /// Maximize a discrete energy by multistart gradient ascent.
    Optimize(OptimizeArgs),
    /// Check a polynomial identity, kernel positive definiteness, or measure moments.
    #[command(name = "verify-identity", alias = "verify")]
    Verify(VerifyArgs),
    /// Gegenbauer expansions and Maclaurin sign tests.
    #[command(subcommand)]
    Gegenbauer(GegenbauerCommand),
    /// Empirical k-positive-definiteness of a kernel.
    PsdCheck(PsdArgs),
    /// Aggregate run manifests into a table and summary.
    Report(ReportArgs),
    /// Rerun a manifest single-threaded and compare outputs.
    Replay(ReplayArgs),
}

/// Accepts `1000000` as well as `1e6`.
fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if x >= 0.0 && x.fract() == 0.0 && x <= usize::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(format!("`{s}` is not a whole nonnegative number"))
    }
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Kernel spec, compact (`A2:k=3`) or JSON.
    #[arg(long, allow_hyphen_values = true)]
    pub kernel: String,
    /// Measure: `sigma:3`, `simplex:4`, `onb:5`, `pair:3`, `cross:4`, `polygon:5`, or JSON.
    #[arg(long)]
    pub measure: String,
    /// Monte-Carlo samples for continuous measures.
    #[arg(long, default_value = "100000", value_parser = parse_count)]
    pub mc: usize,
    /// Fail unless the estimate matches this value (3 standard errors plus 1e-3 for
    /// Monte-Carlo, 1e-10 relative for exact values).
    #[arg(long)]
    pub expect: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, allow_hyphen_values = true, required_unless_present_any = ["face_functional", "phase_table"])]
    pub kernel: Option<String>,
    /// Number of points.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Ambient dimension.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub restarts: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long, default_value_t = 0.5)]
    pub backtrack: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub armijo: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub certificate_trials: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub certificate_radius: f64,
    /// Relative gap to the known maximum that still counts as recovered.
    #[arg(long, default_value_t = 1e-5)]
    pub gap_tol: f64,
    /// Maximize the sum of s-th powers of j-face volumes of an inscribed
    /// simplex: `j=1 s=1 d=2`.
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    pub face_functional: Option<Vec<String>>,
    /// Two-input energies of σ and the standard candidates for each power.
    #[arg(long)]
    pub phase_table: bool,
    /// Volume kinds for the phase table.
    #[arg(long, value_delimiter = ',', default_value = "A,V")]
    pub kinds: Vec<String>,
    /// Powers for the phase table.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub s: Vec<f64>,
    /// Monte-Carlo samples for σ in the phase table.
    #[arg(long, default_value = "1000000", value_parser = parse_count)]
    pub mc: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Identity name (`heron`, `q41_explicit`, ...; `all` runs every one at d = 3..6).
    #[arg(long, visible_alias = "name", conflicts_with_all = ["psd", "moments"])]
    pub identity: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value = "10000", value_parser = parse_count)]
    pub trials: usize,
    /// Empirical positive-definiteness mode; needs --kernel.
    #[arg(long, requires = "kernel")]
    pub psd: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub kernel: Option<String>,
    #[arg(long, default_value_t = 60)]
    pub points: usize,
    #[arg(long, default_value_t = 20)]
    pub tails: usize,
    /// Moment (balanced / isotropic) report for --measure.
    #[arg(long, requires = "measure")]
    pub moments: bool,
    #[arg(long)]
    pub measure: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum GegenbauerCommand {
    /// Gegenbauer coefficients of a two-input potential.
    Expand(ExpandArgs),
    /// Sign pattern of the Maclaurin coefficients of A^s or V^s, 0 < s < 2.
    SignTest(SignTestArgs),
    /// Evaluate P_m^d(t).
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// `A` for |x-y|^s, `V` for (1-t²)^{s/2}, `frame` for t².
    #[arg(long)]
    pub potential: String,
    #[arg(long, default_value_t = 2.0)]
    pub s: f64,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 20)]
    pub degree: usize,
}

#[derive(Debug, Args)]
pub struct SignTestArgs {
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub s: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub t: f64,
}

#[derive(Debug, Args)]
pub struct PsdArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub kernel: String,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 60)]
    pub points: usize,
    #[arg(long, default_value_t = 20)]
    pub tails: usize,
    /// Expected verdict; the run fails when the observed verdict differs.
    #[arg(long, value_enum, default_value_t = Expectation::Consistent)]
    pub expect: Expectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Expectation {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Manifest files or directories holding `*.json` manifests.
    pub inputs: Vec<PathBuf>,
    /// Write the CSV table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Write the text summary here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// What a command produced, before it is wrapped into a manifest.
pub struct Outcome {
    pub params: Value,
    pub claim: String,
    pub pass: Option<bool>,
    pub outputs: Value,
    /// Header and rows for `--format csv`; `None` flattens `outputs`.
    pub table: Option<(Vec<String>, Vec<Vec<String>>)>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<sphere_energy::Error> for CliError {
    fn from(e: sphere_energy::Error) -> Self {
        use sphere_energy::Error as E;
        match e {
            E::Parse(_)
            | E::InvalidArgument { .. }
            | E::InvalidArity { .. }
            | E::UnknownIdentity(_)
            | E::DimensionMismatch { .. }
            | E::UndefinedGegenbauer { .. }
            | E::InvalidBlock { .. }
            | E::InvalidWeights { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub fn resolve_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map_err(|_| CliError::Usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))
        }
        _ => Ok(flag),
    }
}

/// Runs a parsed command on a pool of `workers` threads and wraps the result
/// into a manifest.
pub fn run(cli: &Cli, argv: Vec<String>, seed: u64) -> Result<(RunManifest, Option<(Vec<String>, Vec<Vec<String>>)>), CliError> {
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let outcome = pool.install(|| commands::dispatch(&cli.command, seed))?;
    let mut manifest = RunManifest::new(commands::name(&cli.command), outcome.params, seed);
    manifest.argv = argv;
    manifest.workers = workers;
    manifest.claim = outcome.claim;
    manifest.pass = outcome.pass;
    manifest.outputs = outcome.outputs;
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    Ok((manifest, outcome.table))
}

/// Argument vector with the resolved seed made explicit, so a manifest
/// replays without the environment.
fn canonical_argv(raw: &[String], seed: u64) -> Vec<String> {
    let mut out = Vec::with_capacity(raw.len() + 2);
    let mut skip = false;
    for a in raw {
        if skip {
            skip = false;
            continue;
        }
        // Where the manifest is written is not part of the run.
        if a == "--seed" || a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--seed=") || a.starts_with("--out=") {
            continue;
        }
        out.push(a.clone());
    }
    out.push("--seed".into());
    out.push(seed.to_string());
    out
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let result = resolve_seed(cli.seed).and_then(|seed| run(&cli, canonical_argv(&raw, seed), seed));
    match result {
        Ok((manifest, table)) => match output::emit(&cli, &manifest, table) {
            Ok(()) => match manifest.pass {
                Some(false) => ExitCode::from(EXIT_FAIL),
                _ => ExitCode::SUCCESS,
            },
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_FAIL)
            }
        },
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}
