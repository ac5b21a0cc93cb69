//! Flags, the JSON config file, and their merge into a validated [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use gradtest::functionals::FUNCTIONAL_REGISTRY;
use gradtest::montecarlo::{Localization, DEFAULT_N_GRID, DEFAULT_REPS};
use gradtest::{CriticalValueSource, Functional, Measure, Sided};
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Test,
    SimLevel,
    SimPower,
    SimJoint,
    SimLan,
    SimDscan,
    PowerTable,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Test => "test",
            Command::SimLevel => "sim-level",
            Command::SimPower => "sim-power",
            Command::SimJoint => "sim-joint",
            Command::SimLan => "sim-lan",
            Command::SimDscan => "sim-dscan",
            Command::PowerTable => "power-table",
        }
    }

    fn needs_footpoint(self) -> bool {
        !matches!(self, Command::Test)
    }

    fn needs_tangent(self) -> bool {
        matches!(self, Command::SimPower | Command::SimJoint | Command::SimLan | Command::SimDscan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Two-sample tests and Monte Carlo studies of functional-gradient tests.
#[derive(Debug, Parser, Default)]
#[command(name = "gradtest", version)]
pub struct Cli {
    /// What to run.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// First sample (one value per line), or both samples as `sample_id,value` when --y is absent.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Second sample, one value per line.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// `wilcoxon`, `vonmises:<kernel>`, `invariant:<h>`, `composite:<op>:<f1>:<f2>`, or a JSON descriptor.
    #[arg(long)]
    pub functional: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `one` or `two`.
    #[arg(long)]
    pub sided: Option<String>,
    /// `exact`, `plugin_sum`, `plugin_product`, `ustat_w` or `permutation(B)`.
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Replications per grid point.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated total sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    /// Fraction of observations in the second sample.
    #[arg(long)]
    pub d: Option<f64>,
}

/// Tangent of a simulation: explicit per-cell values, or derived from the gradient.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TangentSpec {
    Values { g1: Vec<f64>, g2: Vec<f64> },
    Named(NamedTangent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedTangent {
    /// `(k̃1, k̃2)`.
    Gradient,
    /// `(k̃1/(1−d), k̃2/d)`, the canonical direction.
    KHat,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    command: Option<Command>,
    x: Option<PathBuf>,
    y: Option<PathBuf>,
    functional: Option<Value>,
    alpha: Option<f64>,
    sided: Option<String>,
    source: Option<String>,
    null_value: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<Format>,
    reps: Option<usize>,
    n_grid: Option<Vec<usize>>,
    d: Option<f64>,
    p0: Option<Value>,
    q0: Option<Value>,
    tangent: Option<TangentSpec>,
    theta: Option<Vec<f64>>,
    d_grid: Option<Vec<f64>>,
    localization: Option<Localization>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Split { x: PathBuf, y: PathBuf },
    Combined(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub data: Option<DataSource>,
    pub functional: Functional<f64>,
    pub alpha: f64,
    pub sided: Sided,
    pub source: CriticalValueSource,
    pub null_value: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub reps: usize,
    pub n_grid: Vec<usize>,
    pub d: f64,
    pub footpoint: Option<(Measure<f64>, Measure<f64>)>,
    pub tangent: Option<TangentSpec>,
    pub theta: Vec<f64>,
    pub d_grid: Vec<f64>,
    pub localization: Localization,
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

/// Parses `wilcoxon`, `vonmises:<kernel>`, `invariant:<h>`, `composite:<op>:<f1>:<f2>` or JSON.
pub fn parse_functional(text: &str) -> Result<Functional<f64>, CliError> {
    let text = text.trim();
    let value = if text.starts_with('{') {
        serde_json::from_str(text).map_err(|e| config_err("functional", e))?
    } else {
        let parts: Vec<&str> = text.split(':').collect();
        match parts.as_slice() {
            ["wilcoxon"] => serde_json::json!({"kind": "wilcoxon"}),
            ["vonmises", h] => serde_json::json!({"kind": "vonmises", "h": h}),
            ["invariant", h] => serde_json::json!({"kind": "invariant", "h": h}),
            ["composite", op, f1, f2] => serde_json::json!({"kind": "composite", "op": op, "f1": f1, "f2": f2}),
            [kind, ..] => serde_json::json!({"kind": kind}),
            [] => unreachable!("split yields at least one part"),
        }
    };
    functional_from_value(value)
}

fn functional_from_value(value: Value) -> Result<Functional<f64>, CliError> {
    let kind = value.get("kind").and_then(Value::as_str).unwrap_or("");
    if !["wilcoxon", "vonmises", "invariant", "composite"].contains(&kind) {
        return Err(config_err(
            "functional",
            format!("unknown functional kind `{kind}`; registry: {FUNCTIONAL_REGISTRY}"),
        ));
    }
    serde_json::from_value(value).map_err(|e| config_err("functional", e))
}

fn measure(field: &str, value: Value) -> Result<Measure<f64>, CliError> {
    serde_json::from_value(value).map_err(|e| config_err(field, e))
}

fn resolve(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

fn existing(field: &str, p: PathBuf) -> Result<PathBuf, CliError> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(config_err(field, format!("file `{}` does not exist", p.display())))
    }
}

/// Merges the config file (if any) with flags, applies defaults and validates.
pub fn parse_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let (file, base) = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config_err("config", format!("cannot read `{}`: {e}", path.display())))?;
            let file: FileConfig = serde_json::from_str(&text).map_err(|e| config_err("config", e))?;
            (file, path.parent().map(Path::to_path_buf))
        }
        None => (FileConfig::default(), None),
    };
    let base = base.as_deref();

    let command = cli
        .command
        .or(file.command)
        .ok_or_else(|| config_err("command", "missing; pass it as the first argument or in the config"))?;

    let x = cli.x.clone().or_else(|| file.x.map(|p| resolve(base, p)));
    let y = cli.y.clone().or_else(|| file.y.map(|p| resolve(base, p)));
    let data = match (x, y) {
        (Some(x), Some(y)) => Some(DataSource::Split { x: existing("x", x)?, y: existing("y", y)? }),
        (Some(x), None) => Some(DataSource::Combined(existing("x", x)?)),
        (None, Some(_)) => return Err(config_err("y", "given without --x")),
        (None, None) => None,
    };
    if command == Command::Test && data.is_none() {
        return Err(config_err("x", "the test command needs data files"));
    }

    let functional = match (&cli.functional, file.functional) {
        (Some(text), _) => parse_functional(text)?,
        (None, Some(v)) => functional_from_value(v)?,
        (None, None) => Functional::Wilcoxon,
    };

    let alpha = cli.alpha.or(file.alpha).unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(config_err("alpha", format!("{alpha} is not in (0, 1)")));
    }
    let sided = match cli.sided.clone().or(file.sided) {
        Some(s) => s.parse().map_err(|e| config_err("sided", e))?,
        None => Sided::One,
    };

    let footpoint = match (file.p0, file.q0) {
        (Some(p), Some(q)) => Some((measure("p0", p)?, measure("q0", q)?)),
        (None, None) => None,
        _ => return Err(config_err("p0", "p0 and q0 must be given together")),
    };
    if command.needs_footpoint() && footpoint.is_none() {
        return Err(config_err("p0", format!("the {} command needs footpoint measures p0 and q0", command.name())));
    }

    let source = match cli.source.clone().or(file.source) {
        Some(s) => s.parse().map_err(|e| config_err("source", e))?,
        None if footpoint.is_some() => CriticalValueSource::Exact,
        None => CriticalValueSource::UstatW,
    };

    let reps = cli.reps.or(file.reps).unwrap_or(DEFAULT_REPS);
    if command != Command::Test && command != Command::PowerTable && reps < 100 {
        return Err(config_err("reps", format!("{reps} is below the minimum of 100")));
    }
    let n_grid = cli.n_grid.clone().or(file.n_grid).unwrap_or_else(|| DEFAULT_N_GRID.to_vec());
    if n_grid.is_empty() {
        return Err(config_err("n_grid", "empty"));
    }
    let d = cli.d.or(file.d).unwrap_or(0.5);
    if !(d > 0.0 && d < 1.0) {
        return Err(config_err("d", format!("{d} is not in (0, 1)")));
    }
    let d_grid = file.d_grid.unwrap_or_else(|| (1..10).map(|i| f64::from(i) / 10.0).collect());
    if d_grid.is_empty() || d_grid.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(config_err("d_grid", "values must lie in (0, 1)"));
    }
    let theta = file.theta.unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    if theta.is_empty() || theta.iter().any(|t| !t.is_finite()) {
        return Err(config_err("theta", "needs finite values"));
    }
    let tangent = file.tangent;
    if command.needs_tangent() && tangent.is_none() {
        return Err(config_err("tangent", format!("the {} command needs a tangent", command.name())));
    }

    Ok(RunConfig {
        command,
        data,
        functional,
        alpha,
        sided,
        source,
        null_value: file.null_value,
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| file.out.map(|p| resolve(base, p))),
        format: cli.format.or(file.format).unwrap_or_default(),
        reps,
        n_grid,
        d,
        footpoint,
        tangent,
        theta,
        d_grid,
        localization: file.localization.unwrap_or(Localization::Implicit),
    })
}
