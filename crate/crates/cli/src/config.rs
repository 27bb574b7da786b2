use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use ddx_core::entangle::{bell_gem_state, BellGem};
use ddx_core::model::{csd_state, parse_half};
use ddx_core::{AtomicAmplitudes, Basis, C64};
use serde::{Deserialize, Serialize};

use crate::RunError;

/// Largest atom count handled by closed-form scenarios without `--allow-large`.
pub const CLOSED_FORM_MAX_ATOMS: usize = 12;
/// Largest atom count handed to the Lindblad integrator without `--allow-large`.
pub const ORACLE_MAX_ATOMS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    PuritySweep,
    PurityVsMaxmixed,
    JointProbSurface,
    WignerCat,
    DfsTable,
    OracleCompare,
    EntangleReport,
    DecoherenceMonitor,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::PuritySweep => "purity-sweep",
            Scenario::PurityVsMaxmixed => "purity-vs-maxmixed",
            Scenario::JointProbSurface => "joint-prob-surface",
            Scenario::WignerCat => "wigner-cat",
            Scenario::DfsTable => "dfs-table",
            Scenario::OracleCompare => "oracle-compare",
            Scenario::EntangleReport => "entangle-report",
            Scenario::DecoherenceMonitor => "decoherence-monitor",
        }
    }

    /// File stem shared by the CSV body and its JSON provenance.
    pub fn stem(&self) -> String {
        self.name().replace('-', "_")
    }

    fn atom_limit(&self) -> usize {
        match self {
            Scenario::OracleCompare => ORACLE_MAX_ATOMS,
            _ => CLOSED_FORM_MAX_ATOMS,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Initial atomic preparation, field always in vacuum.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    Ground,
    Excited,
    /// Symmetric Dicke state with spin `twice_s / 2`.
    Csd { twice_s: i32 },
    /// Explicit amplitudes, rescaled to unit norm.
    Amplitudes { basis: Basis, coefficients: Vec<C64> },
    Gem(BellGem),
}

impl FromStr for InitSpec {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let text = text.trim();
        match text {
            "ground" => return Ok(InitSpec::Ground),
            "excited" => return Ok(InitSpec::Excited),
            _ => {}
        }
        if let Ok(gem) = BellGem::parse(text) {
            return Ok(InitSpec::Gem(gem));
        }
        let Some((head, body)) = text.split_once(':') else {
            return Err(format!("unrecognized initial state {text:?}"));
        };
        let basis = match head {
            "csd" => {
                let twice_s = parse_half(body).map_err(|e| e.to_string())?;
                return Ok(InitSpec::Csd { twice_s });
            }
            "rotated" => Basis::Rotated,
            "energy" => Basis::Energy,
            _ => return Err(format!("unrecognized initial state {text:?}")),
        };
        let coefficients = body
            .split(',')
            .map(|c| C64::from_str(c.trim()).map_err(|_| format!("bad amplitude {c:?}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(InitSpec::Amplitudes { basis, coefficients })
    }
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::Ground => f.write_str("ground"),
            InitSpec::Excited => f.write_str("excited"),
            InitSpec::Csd { twice_s } => write!(f, "csd:{}", ddx_core::model::format_half(*twice_s)),
            InitSpec::Amplitudes { basis, coefficients } => {
                let parts: Vec<String> = coefficients.iter().map(|c| format!("{c}")).collect();
                write!(f, "{basis}:{}", parts.join(","))
            }
            InitSpec::Gem(g) => f.write_str(g.label()),
        }
    }
}

impl InitSpec {
    pub fn amplitudes(&self, n_atoms: usize) -> Result<AtomicAmplitudes, RunError> {
        let out = match self {
            InitSpec::Ground => AtomicAmplitudes::ground(n_atoms),
            InitSpec::Excited => AtomicAmplitudes::excited(n_atoms),
            InitSpec::Csd { twice_s } => csd_state(n_atoms, *twice_s),
            InitSpec::Amplitudes { basis, coefficients } => {
                AtomicAmplitudes::normalized(n_atoms, *basis, coefficients.clone())
            }
            InitSpec::Gem(gem) => {
                let psi = bell_gem_state(*gem);
                if psi.n_atoms() != n_atoms {
                    return Err(RunError::Config(format!(
                        "{} is a {}-atom state, not {n_atoms}",
                        gem.label(),
                        psi.n_atoms()
                    )));
                }
                Ok(psi)
            }
        };
        out.map_err(|e| RunError::Config(format!("initial state {self}: {e}")))
    }

    /// Ground and excited starts are defined for every atom count.
    pub fn is_uniform(&self) -> bool {
        matches!(self, InitSpec::Ground | InitSpec::Excited)
    }
}

/// Command-line flags; every field left unset falls back to the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Number of atoms (upper end of the range for the sweep scenarios).
    #[arg(long)]
    pub n: Option<usize>,
    /// Coupling over decay rate (upper end of the range for joint-prob-surface).
    #[arg(long, allow_negative_numbers = true)]
    pub gk: Option<f64>,
    /// Last time point, in units of 1/k.
    #[arg(long, allow_negative_numbers = true)]
    pub kt_max: Option<f64>,
    /// Number of time intervals; the grid has steps + 1 points from 0.
    #[arg(long)]
    pub steps: Option<usize>,
    /// ground | excited | csd:<s> | rotated:<c,..> | energy:<c,..> | gem2 | gem3 | gem4
    #[arg(long)]
    pub init: Option<String>,
    /// Existing directory receiving the CSV and JSON artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fock cutoff for scenarios that build matrices.
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Lift the atom-count resource guards.
    #[arg(long)]
    pub allow_large: bool,
    /// Detected energy pattern for wigner-cat, atom 1 first (default all ground).
    #[arg(long)]
    pub pattern: Option<String>,
    /// Number of coupling intervals for joint-prob-surface.
    #[arg(long)]
    pub gk_steps: Option<usize>,
    /// Wigner grid points per axis.
    #[arg(long)]
    pub points: Option<usize>,
}

/// Contents of a `--config` JSON file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<Scenario>,
    pub n: Option<usize>,
    pub gk: Option<f64>,
    pub kt_max: Option<f64>,
    pub steps: Option<usize>,
    /// Explicit time grid; superseded by `--kt-max` or `--steps` on the command line.
    pub kt: Option<Vec<f64>>,
    pub init: Option<String>,
    pub out: Option<PathBuf>,
    pub cutoff: Option<usize>,
    pub allow_large: Option<bool>,
    pub pattern: Option<String>,
    pub gk_steps: Option<usize>,
    pub points: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Io(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved configuration, echoed into every provenance file.
#[derive(Clone, Debug, Serialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub gk: f64,
    pub kt: Vec<f64>,
    #[serde(serialize_with = "display")]
    pub init: InitSpec,
    pub out: PathBuf,
    pub cutoff: Option<usize>,
    pub allow_large: bool,
    pub pattern: Option<String>,
    pub gk_steps: usize,
    pub points: usize,
}

fn display<S: serde::Serializer>(v: &InitSpec, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

const DEFAULT_N: usize = 3;
const DEFAULT_GK: f64 = 5.0;
const DEFAULT_KT_MAX: f64 = 4.0;
const DEFAULT_STEPS: usize = 40;
const DEFAULT_GK_STEPS: usize = 50;
const DEFAULT_POINTS: usize = 201;

impl ScenarioConfig {
    /// Merge flags over file values over defaults, then validate.
    pub fn resolve(
        scenario: Option<Scenario>,
        flags: &Overrides,
        file: ConfigFile,
    ) -> Result<Self, RunError> {
        let scenario = scenario
            .or(file.scenario)
            .ok_or_else(|| RunError::Config("no scenario given".into()))?;
        let grid_flags = flags.kt_max.is_some() || flags.steps.is_some();
        let kt = match (file.kt, grid_flags) {
            (Some(kt), false) => kt,
            _ => {
                let kt_max = flags.kt_max.or(file.kt_max).unwrap_or(DEFAULT_KT_MAX);
                let steps = flags.steps.or(file.steps).unwrap_or(DEFAULT_STEPS);
                uniform_grid(kt_max, steps)?
            }
        };
        let init_text = flags.init.clone().or(file.init).unwrap_or_else(|| "ground".into());
        let init = init_text.parse::<InitSpec>().map_err(RunError::Config)?;
        let out = flags
            .out
            .clone()
            .or(file.out)
            .ok_or_else(|| RunError::Config("no output directory given (--out)".into()))?;
        let config = ScenarioConfig {
            scenario,
            n: flags.n.or(file.n).unwrap_or(DEFAULT_N),
            gk: flags.gk.or(file.gk).unwrap_or(DEFAULT_GK),
            kt,
            init,
            out,
            cutoff: flags.cutoff.or(file.cutoff),
            allow_large: flags.allow_large || file.allow_large.unwrap_or(false),
            pattern: flags.pattern.clone().or(file.pattern),
            gk_steps: flags.gk_steps.or(file.gk_steps).unwrap_or(DEFAULT_GK_STEPS),
            points: flags.points.or(file.points).unwrap_or(DEFAULT_POINTS),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::Config(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        let limit = self.scenario.atom_limit();
        if self.n > limit && !self.allow_large {
            return bad(format!(
                "{} with n = {} exceeds the resource guard of {limit} atoms; pass --allow-large to run anyway",
                self.scenario, self.n
            ));
        }
        if !(self.gk.is_finite() && self.gk >= 0.0) {
            return bad(format!("g/k = {} must be finite and nonnegative", self.gk));
        }
        if self.kt.is_empty() {
            return bad("time grid is empty".into());
        }
        if self.kt.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return bad("time grid must be finite and nonnegative".into());
        }
        if self.kt.windows(2).any(|w| w[1] <= w[0]) {
            return bad("time grid must be strictly increasing".into());
        }
        if self.cutoff == Some(0) {
            return bad("cutoff must be at least 1".into());
        }
        if self.gk_steps == 0 {
            return bad("gk-steps must be at least 1".into());
        }
        if self.points < 2 {
            return bad("points must be at least 2".into());
        }
        Ok(())
    }

    pub fn kt_max(&self) -> f64 {
        *self.kt.last().expect("validated grid is nonempty")
    }
}

fn uniform_grid(kt_max: f64, steps: usize) -> Result<Vec<f64>, RunError> {
    if steps == 0 {
        return Err(RunError::Config("steps must be at least 1".into()));
    }
    if !(kt_max.is_finite() && kt_max > 0.0) {
        return Err(RunError::Config(format!("kt-max = {kt_max} must be finite and positive")));
    }
    Ok((0..=steps).map(|i| kt_max * i as f64 / steps as f64).collect())
}
