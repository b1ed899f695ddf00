//! `qdgf`: command-line front end.
//!
//! Each subcommand resolves a flat [`RunConfig`] (config file overlaid with
//! flags), runs one experiment in its own thread pool and writes its
//! artifacts plus `manifest.json` into the output directory. A failed run
//! removes everything it wrote.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

pub mod config;
mod experiments;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

pub use config::{Experiment, RunConfig};
use output::Outputs;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QDGF_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "qdgf-out";

#[derive(Debug, Parser)]
#[command(name = "qdgf", version, about = "Gaussian random fields conditioned on a large quadratic observable")]
pub struct Cli {
    /// JSON config file with the flat schema; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment named by `experiment` in the config.
    Run(RunConfig),
    /// Signed spectrum of M and the fundamental bases.
    Spectrum(RunConfig),
    /// Unconditional realisations.
    Sample(RunConfig),
    /// Conditional ensemble at one threshold.
    Condition(RunConfig),
    /// Mismatch probability P_u(D > ε) across thresholds.
    Concentration(RunConfig),
    /// Tail probabilities of Q = Σ λ|t|² for a given eigenvalue list.
    Tail(RunConfig),
    /// Point-intensity exemplar against its closed-form prediction.
    ExemplarPoint(RunConfig),
    /// Helicity exemplar against its closed-form prediction.
    ExemplarHelicity(RunConfig),
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(qdgf_core::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "i/o failure: {e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<qdgf_core::Error> for CliError {
    fn from(e: qdgf_core::Error) -> Self {
        use qdgf_core::Error as E;
        match e {
            E::InvalidGrid(_)
            | E::InvalidCovariance(_)
            | E::InvalidArgument(_)
            | E::StencilOutOfDomain(_)
            | E::KindMismatch(_)
            | E::DimensionMismatch { .. }
            | E::GridMismatch
            | E::Format(_) => CliError::Config(e.to_string()),
            E::Io(io) => CliError::Io(io),
            other => CliError::Numerical(other),
        }
    }
}

fn resolve(config: Option<&PathBuf>, flags: RunConfig, fixed: Option<Experiment>) -> Result<(Experiment, RunConfig), CliError> {
    let base = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            RunConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let mut cfg = base.overlay(&flags);
    let experiment = match (fixed, cfg.experiment) {
        (Some(f), Some(c)) if f != c => {
            return Err(CliError::Config(format!("config names experiment `{}` but `{}` was invoked", c.name(), f.name())))
        }
        (Some(f), _) => f,
        (None, Some(c)) => c,
        (None, None) => return Err(CliError::Config("no experiment given; set `experiment` or use a subcommand".into())),
    };
    cfg.experiment = Some(experiment);
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)));
    }
    Ok((experiment, cfg))
}

fn execute(experiment: Experiment, cfg: &mut RunConfig, out: &mut Outputs) -> Result<Value, CliError> {
    use experiments as x;
    match experiment {
        Experiment::Spectrum => x::spectrum(cfg, out),
        Experiment::Sample => x::sample(cfg, out),
        Experiment::Condition => x::condition(cfg, out),
        Experiment::Concentration => x::concentration(cfg, out),
        Experiment::Tail => x::tail(cfg, out),
        Experiment::ExemplarPoint => x::exemplar_point(cfg, out),
        Experiment::ExemplarHelicity => x::exemplar_helicity(cfg, out),
    }
}

/// Summary of a successful run.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<RunOutcome, CliError> {
    let (flags, fixed) = match cli.command {
        Command::Run(c) => (c, None),
        Command::Spectrum(c) => (c, Some(Experiment::Spectrum)),
        Command::Sample(c) => (c, Some(Experiment::Sample)),
        Command::Condition(c) => (c, Some(Experiment::Condition)),
        Command::Concentration(c) => (c, Some(Experiment::Concentration)),
        Command::Tail(c) => (c, Some(Experiment::Tail)),
        Command::ExemplarPoint(c) => (c, Some(Experiment::ExemplarPoint)),
        Command::ExemplarHelicity(c) => (c, Some(Experiment::ExemplarHelicity)),
    };
    let (experiment, mut cfg) = resolve(cli.config.as_ref(), flags, fixed)?;
    if cli.workers == Some(0) {
        return Err(CliError::Config("`workers` must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let out_dir = cfg.out_dir.clone().expect("resolved above");
    let mut out = Outputs::create(&out_dir)?;
    let result = pool.install(|| execute(experiment, &mut cfg, &mut out)).and_then(|summary| {
        let manifest = json!({
            "tool": "qdgf",
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": qdgf_core::VERSION,
            "experiment": experiment.name(),
            "config": cfg,
            "seed": cfg.seed,
            "workers": pool.current_num_threads(),
            "outputs": out.names(),
            "summary": summary,
            "created_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        });
        out.write("manifest.json", serde_json::to_string_pretty(&manifest).expect("plain JSON"))?;
        Ok(())
    });
    match result {
        Ok(()) => Ok(RunOutcome { out_dir, files: out.names() }),
        Err(e) => {
            out.rollback();
            Err(e)
        }
    }
}

/// Parses `args`, runs, reports and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(o) => {
            println!("wrote {} files to {}", o.files.len(), o.out_dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
