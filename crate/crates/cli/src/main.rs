//! `gtr`: runs tension-reduction measurement experiments and writes CSV or
//! JSON results.

mod config;
mod error;
mod run;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{float_list, point_list, Command, End, ExperimentConfig, Format, Geometry, TargetDensity};
use error::CliError;

/// Environment variable consulted for the thread count when neither the
/// command line nor the config file sets one.
const THREADS_ENV: &str = "GTR_THREADS";

#[derive(Parser)]
#[command(name = "gtr", version, about = "Tension-reduction measurement experiments")]
struct Cli {
    /// TOML file with experiment settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: GTR_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Subcommand)]
enum Sub {
    /// Monte Carlo transition probabilities for one state.
    Simulate(SimulateArgs),
    /// Exact average over all cellular masks of a one-dimensional elastic.
    UniversalExact(UniversalArgs),
    /// Exact checks of the two binomial summation identities.
    Identities(IdentitiesArgs),
    /// Cellular approximation of a target density on the elastic.
    Approximate(ApproximateArgs),
    /// Sensitivity of a controlled measurement to a small state change.
    Robustness(RobustnessArgs),
    /// Outcome distribution as the breakable zone shrinks to points.
    DiracLimit(DiracArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Barycentric coordinates, comma-separated.
    #[arg(long)]
    state: Option<String>,
    /// uniform | cellular:MASK | grid:RES[:MASK] | dirac:A;B;.. | corner:V:EPS | centroid:EPS | balls:EPS:C;C;..
    #[arg(long)]
    density: Option<String>,
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Args)]
struct UniversalArgs {
    #[arg(long)]
    cells: Option<usize>,
    /// Contact point of the particle (all interior points if omitted).
    #[arg(long)]
    position: Option<usize>,
    #[arg(long, value_enum)]
    target: Option<End>,
    #[arg(long)]
    max_cells: Option<usize>,
}

#[derive(Args)]
struct IdentitiesArgs {
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args)]
struct ApproximateArgs {
    /// ramp | uniform | cut:Y
    #[arg(long)]
    target_density: Option<String>,
    /// Number of blocks.
    #[arg(long)]
    m: Option<usize>,
    /// Cells per block.
    #[arg(long)]
    ell: Option<usize>,
    /// Evaluation points in (0, 1).
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long)]
    state: Option<String>,
    /// State perturbation, comma-separated, summing to 0.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    /// Tracked outcome, numbered from 1.
    #[arg(long)]
    outcome: Option<usize>,
    #[arg(long, value_enum)]
    geometry: Option<Geometry>,
    /// Breakable fractions, comma-separated.
    #[arg(long)]
    epsilons: Option<String>,
    /// Monte Carlo samples per grid point; 0 keeps only exact values.
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Args)]
struct DiracArgs {
    #[arg(long)]
    state: Option<String>,
    /// Ball centers, points separated by ';'.
    #[arg(long)]
    centers: Option<String>,
    #[arg(long)]
    epsilons: Option<String>,
    #[arg(long)]
    samples: Option<u64>,
}

fn parsed<T>(value: Option<String>, flag: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, CliError> {
    value.map(|v| parse(&v).map_err(|e| CliError::Validation(format!("--{flag}: {e}")))).transpose()
}

impl Sub {
    fn into_config(self) -> Result<ExperimentConfig, CliError> {
        let mut c = ExperimentConfig::default();
        match self {
            Sub::Simulate(a) => {
                c.command = Some(Command::Simulate);
                c.state = parsed(a.state, "state", float_list)?;
                c.density = parsed(a.density, "density", str::parse)?;
                c.samples = a.samples;
            }
            Sub::UniversalExact(a) => {
                c.command = Some(Command::UniversalExact);
                (c.cells, c.position, c.target, c.max_cells) = (a.cells, a.position, a.target, a.max_cells);
            }
            Sub::Identities(a) => {
                c.command = Some(Command::Identities);
                c.n_max = a.n_max;
            }
            Sub::Approximate(a) => {
                c.command = Some(Command::Approximate);
                c.target_density = parsed(a.target_density, "target-density", str::parse::<TargetDensity>)?;
                (c.m, c.ell, c.points) = (a.m, a.ell, a.points);
            }
            Sub::Robustness(a) => {
                c.command = Some(Command::Robustness);
                c.state = parsed(a.state, "state", float_list)?;
                c.delta = parsed(a.delta, "delta", float_list)?;
                c.epsilons = parsed(a.epsilons, "epsilons", float_list)?;
                (c.outcome, c.geometry, c.samples) = (a.outcome, a.geometry, a.samples);
            }
            Sub::DiracLimit(a) => {
                c.command = Some(Command::DiracLimit);
                c.state = parsed(a.state, "state", float_list)?;
                c.centers = parsed(a.centers, "centers", point_list)?;
                c.epsilons = parsed(a.epsilons, "epsilons", float_list)?;
                c.samples = a.samples;
            }
        }
        Ok(c)
    }
}

fn resolve(cli: Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(sub) = cli.command {
        let flags = sub.into_config()?;
        if config.command.is_some_and(|c| Some(c) != flags.command) {
            // A different subcommand replaces the file's experiment entirely.
            config = ExperimentConfig { seed: config.seed, threads: config.threads, ..Default::default() };
        }
        config.override_with(flags);
    }
    config.override_with(ExperimentConfig {
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out,
        format: cli.format,
        ..Default::default()
    });
    if config.threads.is_none() {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            let n = v.parse().map_err(|_| CliError::Validation(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
            config.threads = Some(n);
        }
    }
    Ok(config)
}

fn execute(config: &ExperimentConfig) -> Result<(), CliError> {
    if let Some(n) = config.threads.filter(|n| *n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let (command, output) = run::run(config)?;
    let text = run::render(config, command, &output)?;
    match &config.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|source| CliError::Write { path: path.clone(), source })?;
            let mut stdout = std::io::stdout().lock();
            for line in &output.summary {
                let _ = writeln!(stdout, "{line}");
            }
        }
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|source| CliError::Write { path: "<stdout>".into(), source })?;
            for line in &output.summary {
                eprintln!("{line}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match resolve(cli).and_then(|config| execute(&config)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
