//! Runs a validated config and renders its artifact.

use std::fs;

use gradtest::asymptotics::{d_opt, power_one_sided, power_two_sided};
use gradtest::montecarlo::{
    simulate_d_scan, simulate_joint, simulate_lan, simulate_level, simulate_power, SimConfig, SimResult,
};
use gradtest::tangents::{DWeightedGradient, TangentLiteral};
use gradtest::testing::sigma1_exact;
use gradtest::{run_test, Error, ProductTangent, TestReport, TestSpec};
use serde::Serialize;

use crate::config::{Command, Format, NamedTangent, RunConfig, TangentSpec};
use crate::{data, CliError};

/// Asymptotic power at the configured footpoint and allocation.
#[derive(Debug, Serialize)]
pub struct PowerTable {
    pub alpha: f64,
    pub d: f64,
    pub sigma1: f64,
    pub d_opt: Option<f64>,
    pub rows: Vec<PowerRow>,
}

#[derive(Debug, Serialize)]
pub struct PowerRow {
    pub theta: f64,
    pub power_one_sided: f64,
    pub power_two_sided: f64,
}

impl PowerTable {
    fn to_csv(&self) -> String {
        let mut out = String::from("theta,power_one_sided,power_two_sided\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.theta, r.power_one_sided, r.power_two_sided));
        }
        out
    }
}

/// Problems with what the user asked for map to the config exit code; the rest are runtime failures.
fn lib_err(e: Error) -> CliError {
    match e {
        Error::InvalidArgument(_)
        | Error::DomainError(_)
        | Error::Unsupported(_)
        | Error::InvalidTangent(_)
        | Error::InvalidMeasure(_)
        | Error::BaseMismatch => CliError::Config(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn report_csv(r: &TestReport<f64>) -> String {
    let sigma1 = r.sigma1.map(|v| v.to_string()).unwrap_or_default();
    format!(
        "statistic,critical_value,gamma,reject,sigma1,source\n{},{},{},{},{},{}\n",
        r.statistic, r.critical_value, r.gamma, r.reject, sigma1, r.source
    )
}

fn sim_config(cfg: &RunConfig) -> Result<SimConfig, CliError> {
    let (p0, q0) = cfg.footpoint.clone().expect("validated footpoint");
    let mut sim = SimConfig::new(p0, q0, cfg.functional.clone());
    sim.n_grid = cfg.n_grid.clone();
    sim.d = cfg.d;
    sim.reps = cfg.reps;
    sim.alpha = cfg.alpha;
    sim.sided = cfg.sided;
    sim.seed = cfg.seed;
    sim.source = cfg.source;
    sim.null_value = cfg.null_value;
    sim.tangent = match &cfg.tangent {
        None => None,
        Some(TangentSpec::Values { g1, g2 }) => Some(ProductTangent::new(
            TangentLiteral { values: g1.clone() }.attach(sim.p0.clone()).map_err(lib_err)?,
            TangentLiteral { values: g2.clone() }.attach(sim.q0.clone()).map_err(lib_err)?,
        )),
        Some(TangentSpec::Named(name)) => {
            let gp = sim.functional.gradient(&sim.p0, &sim.q0).map_err(lib_err)?;
            Some(match name {
                NamedTangent::Gradient => gp.as_product_tangent(),
                NamedTangent::KHat => DWeightedGradient::new(&gp, cfg.d).map_err(lib_err)?.k_hat,
            })
        }
    };
    Ok(sim)
}

fn simulation(cfg: &RunConfig) -> Result<SimResult, CliError> {
    let sim = sim_config(cfg)?;
    let theta = cfg.theta[0];
    match cfg.command {
        Command::SimLevel => simulate_level(&sim),
        Command::SimPower => simulate_power(&sim, &cfg.theta, cfg.localization),
        Command::SimJoint => simulate_joint(&sim),
        Command::SimLan => simulate_lan(&sim, theta),
        Command::SimDscan => simulate_d_scan(&sim, &cfg.d_grid, theta),
        Command::Test | Command::PowerTable => unreachable!("not a simulation"),
    }
    .map_err(lib_err)
}

fn power_table(cfg: &RunConfig) -> Result<PowerTable, CliError> {
    let (p0, q0) = cfg.footpoint.as_ref().expect("validated footpoint");
    let gp = cfg.functional.gradient(p0, q0).map_err(lib_err)?;
    let sigma1 = sigma1_exact(&gp, cfg.d).map_err(lib_err)?;
    let (a, b) = gp.norms_sq();
    let rows = cfg
        .theta
        .iter()
        .map(|&theta| {
            Ok(PowerRow {
                theta,
                power_one_sided: power_one_sided(theta, sigma1, cfg.alpha)?,
                power_two_sided: power_two_sided(theta, sigma1, cfg.alpha)?,
            })
        })
        .collect::<Result<_, Error>>()
        .map_err(lib_err)?;
    Ok(PowerTable { alpha: cfg.alpha, d: cfg.d, sigma1, d_opt: d_opt(a.sqrt(), b.sqrt()).ok(), rows })
}

/// Produces the artifact text and a one-line summary.
pub fn render(cfg: &RunConfig) -> Result<(String, String), CliError> {
    let name = cfg.command.name();
    match cfg.command {
        Command::Test => {
            let sample = data::load(cfg.data.as_ref().expect("validated data"))?;
            let spec = TestSpec {
                functional: cfg.functional.clone(),
                null_value: cfg.null_value,
                sided: cfg.sided,
                alpha: cfg.alpha,
                source: cfg.source,
            };
            let fp = cfg.footpoint.as_ref().map(|(p, q)| (p, q));
            let report = run_test(&spec, &sample, fp, cfg.seed).map_err(lib_err)?;
            let summary = format!(
                "test: {} (statistic {:.6}, critical value {:.6}, source {})",
                if report.reject { "reject" } else { "do not reject" },
                report.statistic,
                report.critical_value,
                report.source
            );
            let text = match cfg.format {
                Format::Json => json(&report)?,
                Format::Csv => report_csv(&report),
            };
            Ok((text, summary))
        }
        Command::PowerTable => {
            let table = power_table(cfg)?;
            let summary = format!(
                "{name}: sigma1 {:.6}, optimal d {}",
                table.sigma1,
                table.d_opt.map_or("undefined".to_string(), |d| format!("{d:.6}"))
            );
            let text = match cfg.format {
                Format::Json => json(&table)?,
                Format::Csv => table.to_csv(),
            };
            Ok((text, summary))
        }
        _ => {
            let result = simulation(cfg)?;
            let flagged = result.rows.iter().filter(|r| r.flagged).count();
            let summary = format!("{name}: {} rows, {flagged} flagged, {} replications each", result.rows.len(), cfg.reps);
            let text = match cfg.format {
                Format::Json => json(&result)?,
                Format::Csv => result.to_csv(),
            };
            Ok((text, summary))
        }
    }
}

/// Runs the command, writes the artifact, and returns the summary line.
pub fn execute(cfg: &RunConfig) -> Result<String, CliError> {
    let (text, summary) = render(cfg)?;
    match &cfg.out {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", path.display())))?;
            Ok(format!("{summary} -> {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(summary)
        }
    }
}
