//! Run configuration: TOML on disk, resolved into concrete model and grid
//! parameters before any numerics run.

use serde::{Deserialize, Serialize};

use qbm::model::{BathState, CaseParams, Model, SpectralDensity, SystemSpec};
use qbm::propagator::{SolverOptions, TimeGrid};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub bath: BathBlock,
    pub grid: GridBlock,
    #[serde(default)]
    pub task: TaskBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// System oscillators. Either `frequencies` explicitly, or `delta` for the
/// two-oscillator model with `Omega_1^2 + Omega_2^2 = norm^2`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub n: Option<usize>,
    pub masses: Option<Vec<f64>>,
    pub frequencies: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub norm: Option<f64>,
}

/// Ohmic-family bath. Exactly one of `temperature` and `theta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathBlock {
    pub gamma: f64,
    pub cutoff: f64,
    #[serde(default = "one")]
    pub reference_frequency: f64,
    #[serde(default)]
    pub exponent: f64,
    pub mass: Option<f64>,
    pub temperature: Option<f64>,
    pub theta: Option<f64>,
    #[serde(default = "yes")]
    pub counterterm: bool,
}

/// `t_max` is in units of `1/gamma` (absolute time when `gamma = 0`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub t_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    pub initial: Option<InitialState>,
    /// Oscillators whose momenta the partial transpose flips (0-based).
    #[serde(default = "second")]
    pub subset: Vec<usize>,
    #[serde(default)]
    pub tripartite: bool,
    #[serde(default)]
    pub theta_sweep: Vec<f64>,
    #[serde(default)]
    pub delta_sweep: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: usize,
    pub max_frequency: Option<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

impl Default for TaskBlock {
    fn default() -> Self {
        Self {
            initial: None,
            subset: second(),
            tripartite: false,
            theta_sweep: Vec::new(),
            delta_sweep: Vec::new(),
            modes: default_modes(),
            max_frequency: None,
            threshold: default_threshold(),
            rel_tol: default_rel_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    Vacuum,
    Thermal {
        nu: f64,
    },
    TwoModeSqueezed {
        r: f64,
    },
    FactorizedSqueezed {
        r1: f64,
        r2: f64,
    },
    /// Drawn from the `--seed` stream.
    RandomPure {
        max_squeeze: f64,
    },
    Matrix {
        matrix: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// File stem; defaults to the subcommand name.
    pub stem: Option<String>,
    #[serde(default)]
    pub svg: bool,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn second() -> Vec<usize> {
    vec![1]
}
fn default_modes() -> usize {
    400
}
fn default_threshold() -> f64 {
    5e-3
}
fn default_rel_tol() -> f64 {
    1e-6
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Check the invariants and fill in every derived quantity.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let b = &self.bath;
        let norm = self.model.norm.unwrap_or(1.0);
        let (frequencies, temperature) = match (&self.model.frequencies, self.model.delta) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "model: give either `frequencies` or `delta`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "model: missing field `frequencies` (or `delta`)".into(),
                ))
            }
            (Some(f), None) => (f.clone(), None),
            (None, Some(d)) => {
                let p = CaseParams::new(d, b.theta.unwrap_or(0.0))
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let (w1, w2) = p.frequencies(norm);
                (vec![w1, w2], Some(p.temperature(norm)))
            }
        };
        let temperature = match (b.temperature, b.theta) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "bath: give exactly one of `temperature` and `theta`".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "bath: missing field `temperature` (or `theta`)".into(),
                ))
            }
            (Some(t), None) => t,
            (None, Some(theta)) => temperature.unwrap_or(theta * norm),
        };
        let n = frequencies.len();
        if let Some(k) = self.model.n {
            if k != n {
                return Err(CliError::Config(format!(
                    "model: n = {k} but {n} frequencies"
                )));
            }
        }
        let masses = self.model.masses.clone().unwrap_or_else(|| vec![1.0; n]);
        let weights = self.model.weights.clone().unwrap_or_else(|| vec![1.0; n]);
        if !(self.grid.t_max > 0.0) {
            return Err(CliError::Config("grid: t_max must be positive".into()));
        }
        if self.grid.points < 2 {
            return Err(CliError::Config("grid: points must be at least 2".into()));
        }
        let t_end = if b.gamma > 0.0 {
            self.grid.t_max / b.gamma
        } else {
            self.grid.t_max
        };
        let bath_mass = b.mass.unwrap_or(masses[0]);
        let resolved = Resolved {
            masses,
            frequencies,
            weights,
            gamma: b.gamma,
            cutoff: b.cutoff,
            reference_frequency: b.reference_frequency,
            exponent: b.exponent,
            bath_mass,
            temperature,
            counterterm: b.counterterm,
            t_end,
            points: self.grid.points,
            delta: self.model.delta,
            norm,
            task: self.task.clone(),
        };
        resolved.model()?;
        Ok(resolved)
    }
}

/// Fully explicit run description, recorded in every CSV header.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub masses: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub cutoff: f64,
    pub reference_frequency: f64,
    pub exponent: f64,
    pub bath_mass: f64,
    pub temperature: f64,
    pub counterterm: bool,
    pub t_end: f64,
    pub points: usize,
    pub delta: Option<f64>,
    pub norm: f64,
    pub task: TaskBlock,
}

impl Resolved {
    pub fn model(&self) -> Result<Model, CliError> {
        let cfg = |e: qbm::Error| CliError::Config(e.to_string());
        let system = SystemSpec::new(
            self.masses.clone(),
            self.frequencies.clone(),
            self.weights.clone(),
        )
        .map_err(cfg)?;
        let density = SpectralDensity::new(
            self.gamma,
            self.cutoff,
            self.reference_frequency,
            self.exponent,
            self.bath_mass,
        )
        .map_err(cfg)?;
        let mut model = Model::new(
            system,
            density,
            BathState::new(self.temperature).map_err(cfg)?,
        );
        model.counterterm = self.counterterm;
        Ok(model)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::with_len(self.t_end / (self.points - 1) as f64, self.points)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            rel_tol: self.task.rel_tol,
            ..Default::default()
        }
    }

    /// The same run at another `(delta, theta)` point of the two-oscillator
    /// model.
    pub fn at_case_point(&self, delta: f64, theta: f64) -> Result<Self, CliError> {
        let p = CaseParams::new(delta, theta).map_err(|e| CliError::Config(e.to_string()))?;
        let (w1, w2) = p.frequencies(self.norm);
        let mut out = self.clone();
        out.frequencies = vec![w1, w2];
        out.temperature = p.temperature(self.norm);
        out.delta = Some(delta);
        Ok(out)
    }

    /// Single-line JSON for the CSV comment header.
    pub fn provenance(&self, command: &str, seed: u64) -> String {
        let body = serde_json::json!({ "command": command, "seed": seed, "config": self });
        body.to_string()
    }
}
