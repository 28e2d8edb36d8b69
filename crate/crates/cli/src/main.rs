//! `lspkit` — simulate a water network, train a leak detector on its
//! sensors, and find the least sensitive point: the junction where the
//! largest leak slips past the detector.
//!
//! Every run is driven by one flat JSON config (see `ExperimentConfig`);
//! any key can be overridden on the command line. Runs are deterministic
//! for a given config, independent of thread count, and each one writes a
//! manifest with content hashes of its inputs and outputs.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CmdError;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "lspkit",
    version,
    about = "Least-sensitive-point analysis for water networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate demands, simulate, and write sensor measurements.
    Simulate(RunArgs),
    /// Train the leak detector and write detector.json.
    Train(RunArgs),
    /// Search for the least sensitive point; write outcome, trace, and
    /// per-node plot data.
    Lsp(RunArgs),
    /// Run the configured method and the brute-force oracle, then compare.
    /// Exits 1 if they disagree.
    OracleCheck(RunArgs),
}

/// Config file plus per-key overrides. Flags win over file keys; file
/// keys win over built-in defaults.
#[derive(Args)]
struct RunArgs {
    /// JSON config file with flat ExperimentConfig keys.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Worker threads for parallel evaluation (0 = one per core).
    /// Falls back to the LSPKIT_THREADS environment variable.
    #[arg(long)]
    threads: Option<usize>,

    #[arg(long)]
    network: Option<String>,
    #[arg(long)]
    sensors: Option<String>,
    /// Seed for demand noise (and the GA methods, unless --ga-seed).
    #[arg(long)]
    seed: Option<u64>,
    /// GA trial seed; leaves the simulated demands untouched.
    #[arg(long)]
    ga_seed: Option<u64>,
    #[arg(long)]
    train_days: Option<usize>,
    #[arg(long)]
    val_days: Option<usize>,
    #[arg(long)]
    search_days: Option<usize>,
    /// Hydraulic timestep in seconds.
    #[arg(long)]
    timestep: Option<u64>,
    #[arg(long)]
    demand_sigma: Option<f64>,
    /// Alarm rule: weighted-sum | max-threshold.
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    threshold_factor: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    /// Leak window length in hours.
    #[arg(long)]
    k_hours: Option<u64>,
    /// Search method: bisection | ga-basic | ga-spectral | oracle.
    #[arg(long)]
    method: Option<String>,
    /// Bisection: prune dominated candidates (true/false).
    #[arg(long)]
    prune: Option<bool>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    tournament_size: Option<usize>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    #[arg(long)]
    mutation_sigma: Option<f64>,
    /// Smallest candidate leak area, cm².
    #[arg(long)]
    area_lo: Option<f64>,
    /// Largest candidate leak area, cm².
    #[arg(long)]
    area_hi: Option<f64>,
    /// Area search resolution, cm².
    #[arg(long)]
    area_tol: Option<f64>,
    #[arg(long)]
    discharge_coeff: Option<f64>,
    /// Junction ids to exclude from the candidate set.
    #[arg(long, value_delimiter = ',')]
    exclude_nodes: Option<Vec<String>>,
    #[arg(long)]
    out_dir: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CmdError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        set!(
            network,
            sensors,
            seed,
            train_days,
            val_days,
            search_days,
            timestep,
            demand_sigma,
            rule,
            gamma,
            threshold_factor,
            ridge,
            k_hours,
            method,
            prune,
            population,
            generations,
            tournament_size,
            mutation_rate,
            mutation_sigma,
            area_lo,
            area_hi,
            area_tol,
            discharge_coeff,
            exclude_nodes,
            out_dir,
        );
        if let Some(v) = self.ga_seed {
            cfg.ga_seed = Some(v);
        }
        Ok(cfg)
    }

    /// Cap the global worker pool. Must run before any parallel work; a
    /// run without the flag or env var keeps rayon's default.
    fn init_threads(&self) -> Result<(), CmdError> {
        let n = match self.threads {
            Some(n) => Some(n),
            None => match std::env::var("LSPKIT_THREADS") {
                Ok(v) => Some(v.parse().map_err(|_| {
                    lspkit::Error::Invalid(format!("LSPKIT_THREADS is not a thread count: '{v}'"))
                })?),
                Err(_) => None,
            },
        };
        if let Some(n) = n {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| lspkit::Error::Invalid(format!("thread pool: {e}")))?;
        }
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<(), CmdError> {
    let (args, run): (&RunArgs, fn(&ExperimentConfig) -> Result<(), CmdError>) = match &cli.cmd {
        Cmd::Simulate(a) => (a, commands::cmd_simulate),
        Cmd::Train(a) => (a, commands::cmd_train),
        Cmd::Lsp(a) => (a, commands::cmd_lsp),
        Cmd::OracleCheck(a) => (a, commands::cmd_oracle_check),
    };
    args.init_threads()?;
    run(&args.resolve()?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
