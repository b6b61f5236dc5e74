//! Experiment configuration files.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spectral_law::kernel::{SolverConfig, ZGrid};
use spectral_law::simulate::{ModelSpec, Seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    #[serde(alias = "m")]
    pub p: usize,
    #[serde(alias = "T")]
    pub n: usize,
    /// Observation indices of a matrix-AR trajectory.
    #[serde(default)]
    pub t: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub count: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            tol: d.tol,
            max_iter: d.max_iter,
            damping: d.damping,
        }
    }
}

fn default_seeds() -> Vec<Seed> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub dims: Dims,
    /// When absent the grid spans the problem's support bound with 800
    /// points at `eta = 0.01`.
    #[serde(default)]
    pub zgrid: Option<GridConfig>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<Seed>,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub outputs: Option<String>,
}

/// Why a configuration was rejected.
#[derive(Debug)]
pub enum ConfigError {
    /// Bad JSON, a wrong type or an unknown key, with the key path.
    Parse(String),
    /// Well-formed but outside the allowed ranges.
    Invalid(String),
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                ConfigError::Parse(e.into_inner().to_string())
            } else {
                ConfigError::Parse(format!("at `{path}`: {}", e.into_inner()))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dims.p == 0 || self.dims.n == 0 {
            return Err(ConfigError::Invalid("dims.p and dims.n must be positive".into()));
        }
        if let Some(ts) = &self.dims.t {
            if ts.is_empty() || ts.contains(&0) {
                return Err(ConfigError::Invalid("dims.t must list indices >= 1".into()));
            }
        }
        if let Some(g) = &self.zgrid {
            if g.count < 2 || !(g.x_min < g.x_max) || !(g.eta > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "zgrid needs count >= 2, x_min < x_max and eta > 0 (got count {}, [{}, {}], eta {})",
                    g.count, g.x_min, g.x_max, g.eta
                )));
            }
        }
        self.solver_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("solver: {e}")))?;
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            damping: self.solver.damping,
            ..SolverConfig::default()
        }
    }

    /// The configured grid, or `None` to use the problem's default grid.
    pub fn grid(&self) -> Option<Result<ZGrid, spectral_law::Error>> {
        self.zgrid
            .as_ref()
            .map(|g| ZGrid::line(g.x_min, g.x_max, g.count, g.eta))
    }
}

/// Lowercase hex SHA-256 of the raw config bytes.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
