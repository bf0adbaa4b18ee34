use gtr_core::density::cellular_approximation;
use gtr_core::montecarlo::estimate;
use gtr_core::report::format_float;
use gtr_core::robustness::{dirac_limit_demo, robustness_sweep, ControlGeometry, SweepSettings};
use gtr_core::universal::{
    binomial_identity_a, binomial_identity_b, format_ratio, universal_average_1d_with_limit, uniform_value,
    IdentityCheck, Target, UniversalRow, UniversalTable, DEFAULT_MAX_CELLS,
};
use gtr_core::BarycentricState;
use serde::{Deserialize, Serialize};

use crate::config::{required, Command, DensitySpec, ExperimentConfig, Format, TargetDensity};
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_SAMPLES: u64 = 1_000_000;
const DEFAULT_N_MAX: usize = 60;
const DEFAULT_POINTS: usize = 999;

/// What a command produced, in both output formats.
#[derive(Debug)]
pub struct Output {
    pub result: serde_json::Value,
    pub csv: String,
    pub summary: Vec<String>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    command: Command,
    config: &'a ExperimentConfig,
    result: &'a serde_json::Value,
}

pub fn render(config: &ExperimentConfig, command: Command, output: &Output) -> Result<String, CliError> {
    Ok(match config.format.unwrap_or_default() {
        Format::Csv => output.csv.clone(),
        Format::Json => {
            let env = Envelope { schema_version: SCHEMA_VERSION, command, config, result: &output.result };
            let mut s = serde_json::to_string_pretty(&env).map_err(|e| CliError::Runtime(e.to_string()))?;
            s.push('\n');
            s
        }
    })
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Runtime(e.to_string()))
}

fn seed_for(config: &ExperimentConfig, command: Command) -> Result<u64, CliError> {
    required(&config.seed, "seed", command)
}

pub fn run(config: &ExperimentConfig) -> Result<(Command, Output), CliError> {
    let command = config
        .command
        .ok_or_else(|| CliError::Validation("no command given on the command line or in the config file".into()))?;
    let output = match command {
        Command::Simulate => simulate(config)?,
        Command::UniversalExact => universal_exact(config)?,
        Command::Identities => identities(config)?,
        Command::Approximate => approximate(config)?,
        Command::Robustness => robustness(config)?,
        Command::DiracLimit => dirac_limit(config)?,
    };
    Ok((command, output))
}

fn simulate(config: &ExperimentConfig) -> Result<Output, CliError> {
    let c = Command::Simulate;
    let x = BarycentricState::new(required(&config.state, "state", c)?)?;
    let rho = config.density.clone().unwrap_or(DensitySpec::Uniform).build(x.n_outcomes())?;
    let seed = seed_for(config, c)?;
    let est = estimate(&x, &rho, config.samples.unwrap_or(DEFAULT_SAMPLES), seed)?;
    let summary = (0..est.n_outcomes())
        .map(|i| {
            format!(
                "outcome {}: p_hat = {:.6} (95% CI {:.6} .. {:.6}), count {} of {}",
                i + 1,
                est.probabilities[i],
                est.ci_lower[i],
                est.ci_upper[i],
                est.counts[i],
                est.n_samples
            )
        })
        .collect();
    Ok(Output { result: to_value(&est)?, csv: est.to_csv(), summary })
}

fn universal_exact(config: &ExperimentConfig) -> Result<Output, CliError> {
    let c = Command::UniversalExact;
    let n = required(&config.cells, "cells", c)?;
    let target: Target = config.target.unwrap_or_default().into();
    let limit = config.max_cells.unwrap_or(DEFAULT_MAX_CELLS);
    let positions: Vec<usize> = match config.position {
        Some(p) => vec![p],
        None => (1..n).collect(),
    };
    let rows = positions
        .into_iter()
        .map(|position| {
            let average = universal_average_1d_with_limit(n, position, target, limit)?;
            let uniform = uniform_value(n, position, target);
            let equal = average == uniform;
            Ok(UniversalRow { position, average, uniform, equal })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let table = UniversalTable { cells: n, target, rows };
    let mut csv = String::from("position,average,uniform,equal\n");
    let mut summary = Vec::new();
    for r in &table.rows {
        csv.push_str(&format!("{},{},{},{}\n", r.position, r.average, r.uniform, r.equal));
        summary.push(format!(
            "position {}: average = {}, uniform = {}, equal = {}",
            r.position, r.average, r.uniform, r.equal
        ));
    }
    Ok(Output { result: to_value(&table)?, csv, summary })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IdentitiesResult {
    pub n_max: usize,
    pub identity_a: Vec<IdentityCheck>,
    pub identity_b: Vec<IdentityCheck>,
    pub all_hold: bool,
}

fn identities(config: &ExperimentConfig) -> Result<Output, CliError> {
    let n_max = config.n_max.unwrap_or(DEFAULT_N_MAX);
    let identity_a: Vec<IdentityCheck> = (0..=n_max).map(binomial_identity_a).collect();
    let identity_b: Vec<IdentityCheck> = (0..=n_max).map(binomial_identity_b).collect();
    let all_hold = identity_a.iter().chain(&identity_b).all(|c| c.holds);
    let mut csv = String::from("identity,n,lhs,rhs,holds\n");
    let mut summary = Vec::new();
    for (name, checks) in [("a", &identity_a), ("b", &identity_b)] {
        for ch in checks {
            csv.push_str(&format!("{name},{},{},{},{}\n", ch.n, format_ratio(&ch.lhs), format_ratio(&ch.rhs), ch.holds));
        }
        let held = checks.iter().filter(|c| c.holds).count();
        summary.push(format!("identity {name}: {held}/{} hold for n = 0..={n_max}", checks.len()));
    }
    let result = IdentitiesResult { n_max, identity_a, identity_b, all_hold };
    Ok(Output { result: to_value(&result)?, csv, summary })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApproximationRow {
    pub x1: f64,
    pub cellular: f64,
    pub exact: f64,
    pub error: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApproximationResult {
    pub target: TargetDensity,
    pub m: usize,
    pub ell: usize,
    pub breakable_cells: usize,
    pub max_error: f64,
    pub rows: Vec<ApproximationRow>,
}

fn approximate(config: &ExperimentConfig) -> Result<Output, CliError> {
    let c = Command::Approximate;
    let target = config.target_density.unwrap_or(TargetDensity::Ramp);
    let (m, ell) = (required(&config.m, "m", c)?, required(&config.ell, "ell", c)?);
    let points = config.points.unwrap_or(DEFAULT_POINTS);
    if points == 0 {
        return Err(CliError::Validation("--points must be positive".into()));
    }
    let density = target.as_density();
    let elastic = cellular_approximation(density.as_ref(), m, ell)?;
    let rows = (1..=points)
        .map(|j| {
            let x1 = j as f64 / (points + 1) as f64;
            let exact = density
                .collapse_probability(x1)
                .ok_or_else(|| CliError::Runtime(format!("target {target} has no closed form at {x1}")))?;
            let cellular = elastic.mass_below(x1);
            Ok(ApproximationRow { x1, cellular, exact, error: (cellular - exact).abs() })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let max_error = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    let mut csv = String::from("x1,p_cell,p_exact,abs_error\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            format_float(r.x1),
            format_float(r.cellular),
            format_float(r.exact),
            format_float(r.error)
        ));
    }
    let summary = vec![format!("target {target}, (m, ell) = ({m}, {ell}): max |P_cell - P_exact| = {max_error:.6}")];
    let result = ApproximationResult {
        target,
        m,
        ell,
        breakable_cells: elastic.mask().n_breakable(),
        max_error,
        rows,
    };
    Ok(Output { result: to_value(&result)?, csv, summary })
}

fn sweep_settings(config: &ExperimentConfig, command: Command) -> Result<SweepSettings, CliError> {
    let n_samples = config.samples.unwrap_or(DEFAULT_SAMPLES);
    let seed = if n_samples > 0 { seed_for(config, command)? } else { config.seed.unwrap_or(0) };
    Ok(SweepSettings { n_samples, seed })
}

/// `eps~` followed by the tenths above it.
fn default_grid(tilde: f64) -> Vec<f64> {
    std::iter::once(tilde).chain((1..=10).map(|k| k as f64 / 10.0).filter(|e| *e > tilde)).collect()
}

fn robustness(config: &ExperimentConfig) -> Result<Output, CliError> {
    let c = Command::Robustness;
    let x = BarycentricState::new(required(&config.state, "state", c)?)?;
    let delta = required(&config.delta, "delta", c)?;
    let outcome = config.outcome.unwrap_or(1);
    if outcome == 0 || outcome > x.n_outcomes() {
        return Err(CliError::Validation(format!("--outcome {outcome} not in 1..={}", x.n_outcomes())));
    }
    let geometry: ControlGeometry = config.geometry.unwrap_or_default().into();
    let grid = match &config.epsilons {
        Some(g) => g.clone(),
        None => default_grid(geometry.epsilon_tilde(&x, &x.perturbed(&delta)?, outcome - 1)),
    };
    let report = robustness_sweep(&x, &delta, outcome - 1, geometry, &grid, sweep_settings(config, c)?)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
    let mut summary: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "eps = {:.6}: measured = {}, predicted = {:.6}, ratio = {}{}",
                r.epsilon,
                opt(r.measured()),
                r.predicted,
                opt(r.ratio()),
                if r.in_regime { "" } else { " (below eps~)" }
            )
        })
        .collect();
    summary.push(format!(
        "eps~ = {:.6} from geometry, agreement from eps = {}",
        report.epsilon_tilde,
        opt(report.empirical_epsilon_tilde)
    ));
    Ok(Output { result: to_value(&report)?, csv: report.to_csv(), summary })
}

fn dirac_limit(config: &ExperimentConfig) -> Result<Output, CliError> {
    let c = Command::DiracLimit;
    let x = BarycentricState::new(required(&config.state, "state", c)?)?;
    let centers = required(&config.centers, "centers", c)?
        .into_iter()
        .map(BarycentricState::new)
        .collect::<Result<Vec<_>, _>>()?;
    let eps = config.epsilons.clone().unwrap_or_else(|| vec![0.1, 0.01, 0.001]);
    let report = dirac_limit_demo(&x, &centers, &eps, sweep_settings(config, c)?)?;
    let mut summary: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            let dist: Vec<String> = r.distribution().iter().map(|p| format!("{p:.6}")).collect();
            format!("eps = {}: distribution ({}), TV to limit = {:.3e}", r.epsilon, dist.join(", "), r.total_variation)
        })
        .collect();
    summary.push(format!("limit distribution {:?}, TV non-increasing: {}", report.limit, report.non_increasing));
    Ok(Output { result: to_value(&report)?, csv: report.to_csv(), summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn universal_position_seven_of_ten() {
        let (_, out) = run(&cfg("command = \"universal-exact\"\ncells = 10\nposition = 7")).unwrap();
        assert_eq!(out.csv, "position,average,uniform,equal\n7,3/10,3/10,true\n");
        assert_eq!(out.result["rows"][0]["average"], "3/10");
    }

    #[test]
    fn stochastic_commands_need_a_seed() {
        let err = run(&cfg("command = \"simulate\"\nstate = [0.5, 0.5]")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(run(&cfg("command = \"robustness\"\nstate = [0.5, 0.5]\ndelta = [0.01, -0.01]\nsamples = 0")).is_ok());
    }

    #[test]
    fn default_robustness_grid_starts_at_threshold() {
        assert_eq!(default_grid(0.75), vec![0.75, 0.8, 0.9, 1.0]);
    }

    #[test]
    fn missing_command() {
        assert_eq!(run(&ExperimentConfig::default()).unwrap_err().exit_code(), 2);
    }
}
