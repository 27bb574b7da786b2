//! Scenario runner: resolves a configuration, evaluates one scenario and
//! writes `<scenario>.csv` plus `<scenario>.json` provenance into `--out`.

pub mod config;
pub mod output;
pub mod scenarios;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

pub use config::{InitSpec, Overrides, Scenario, ScenarioConfig};

#[derive(Debug)]
pub enum RunError {
    /// Exit 1: the configuration cannot be run.
    Config(String),
    /// Exit 2: a compare scenario ran outside its tolerances.
    Tolerance(String),
    /// Exit 3.
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Tolerance(_) => 2,
            RunError::Io(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "invalid configuration: {m}"),
            RunError::Tolerance(m) => write!(f, "tolerance failure: {m}"),
            RunError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

/// Integrator rejections are tolerance failures; everything else the core
/// refuses traces back to the inputs.
pub(crate) fn core_err(e: ddx_core::Error) -> RunError {
    match e {
        ddx_core::Error::StepSize(_) | ddx_core::Error::Truncation(_) => RunError::Tolerance(e.to_string()),
        other => RunError::Config(other.to_string()),
    }
}

#[derive(Parser, Debug)]
#[command(name = "ddx", version, about = "Driven atoms in a damped cavity: scenario runner")]
pub struct Cli {
    /// Scenario to run; may instead come from the config file.
    #[arg(value_enum)]
    pub scenario: Option<Scenario>,
    /// JSON file with any of the flag values; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

impl Cli {
    pub fn resolve(&self) -> Result<ScenarioConfig, RunError> {
        let file = match &self.config {
            Some(path) => config::ConfigFile::load(path)?,
            None => config::ConfigFile::default(),
        };
        ScenarioConfig::resolve(self.scenario, &self.overrides, file)
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub scenario: Scenario,
    pub pass: Option<bool>,
    pub verdict: String,
    pub csv: PathBuf,
    pub provenance: PathBuf,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass == Some(false) {
            2
        } else {
            0
        }
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    scenario: &'static str,
    config: &'a ScenarioConfig,
    cutoff: Option<usize>,
    tolerances: &'a std::collections::BTreeMap<&'static str, f64>,
    wall_time_s: f64,
    csv: String,
    csv_rows: usize,
    pass: Option<bool>,
    verdict: &'a str,
    summary: &'a serde_json::Value,
}

pub fn run(config: &ScenarioConfig) -> Result<Outcome, RunError> {
    let out = &config.out;
    if !out.is_dir() {
        return Err(RunError::Io(format!("output directory {} does not exist", out.display())));
    }
    let start = Instant::now();
    let artifact = scenarios::dispatch(config)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let stem = config.scenario.stem();
    let csv_path = out.join(format!("{stem}.csv"));
    let json_path = out.join(format!("{stem}.json"));
    write(&csv_path, &artifact.csv.render())?;
    let provenance = Provenance {
        tool: "ddx",
        version: env!("CARGO_PKG_VERSION"),
        scenario: config.scenario.name(),
        config,
        cutoff: artifact.cutoff,
        tolerances: &artifact.tolerances,
        wall_time_s,
        csv: format!("{stem}.csv"),
        csv_rows: artifact.csv.rows(),
        pass: artifact.pass,
        verdict: &artifact.verdict,
        summary: &artifact.summary,
    };
    let json = serde_json::to_string_pretty(&provenance).map_err(|e| RunError::Io(e.to_string()))?;
    write(&json_path, &(json + "\n"))?;
    Ok(Outcome {
        scenario: config.scenario,
        pass: artifact.pass,
        verdict: artifact.verdict,
        csv: csv_path,
        provenance: json_path,
    })
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|e| RunError::Io(format!("writing {}: {e}", path.display())))
}
