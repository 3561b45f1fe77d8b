use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ebk_core::chart::ModelParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Everything a run needs. Physical inputs are in the user's units; they
/// are balanced once when the model is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub hbar: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub model: ModelSection,
    #[serde(default)]
    pub states: StatesSection,
    #[serde(default)]
    pub grids: GridsSection,
    #[serde(default)]
    pub tolerances: TolerancesSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Registered potential family: isotropic, quartic, polynomial.
    pub name: String,
    pub mass: f64,
    pub omega0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quartic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sextic: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub higher: Vec<f64>,
}

impl ModelSection {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            mass: self.mass,
            omega0: self.omega0,
            quartic: self.quartic,
            sextic: self.sextic,
            higher: self.higher.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesSection {
    pub n_r_max: u32,
    pub m_min: u32,
    pub m_max: u32,
    /// Also tabulate `-m` for every `m`.
    pub both_signs: bool,
}

impl Default for StatesSection {
    fn default() -> Self {
        Self {
            n_r_max: 3,
            m_min: 1,
            m_max: 3,
            both_signs: true,
        }
    }
}

impl StatesSection {
    pub fn quantum_numbers(&self) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        for n in 0..=self.n_r_max as i64 {
            for m in self.m_min as i64..=self.m_max as i64 {
                out.push(vec![n, m]);
                if self.both_signs && m != 0 {
                    out.push(vec![n, -m]);
                }
            }
        }
        out
    }

    pub fn m_values(&self) -> Vec<i64> {
        let mut ms: Vec<i64> = Vec::new();
        for m in self.m_min as i64..=self.m_max as i64 {
            ms.push(m);
            if self.both_signs && m != 0 {
                ms.push(-m);
            }
        }
        ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsSection {
    /// Starting points per angle for torus averages.
    pub averaging: usize,
    pub averaging_rel_tol: f64,
    /// Hard-term route: direct, connection.
    pub route: String,
    /// Radial solver: fd-conservative, fd-plain, oscillator-basis.
    pub oracle_solver: String,
    pub oracle_points: usize,
    /// Chart points for the identity suite.
    pub identity_points: usize,
}

impl Default for GridsSection {
    fn default() -> Self {
        Self {
            averaging: 16,
            averaging_rel_tol: 1e-6,
            route: "direct".into(),
            oracle_solver: ebk_core::oracle::DEFAULT_SOLVER.into(),
            oracle_points: 2000,
            identity_points: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesSection {
    pub identities: f64,
    pub normal_form: f64,
}

impl Default for TolerancesSection {
    fn default() -> Self {
        Self {
            identities: 1e-5,
            normal_form: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Existing tables for `compare`; default to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantize_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_csv: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            quantize_csv: None,
            oracle_csv: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.hbar > 0.0) {
            return bad(format!("hbar must be positive, got {}", self.hbar));
        }
        if self.states.m_min > self.states.m_max {
            return bad(format!(
                "states.m_min ({}) exceeds states.m_max ({})",
                self.states.m_min, self.states.m_max
            ));
        }
        if self.grids.averaging < 2 {
            return bad("grids.averaging needs at least 2 points per angle".into());
        }
        if self.grids.identity_points == 0 {
            return bad("grids.identity_points must be positive".into());
        }
        Ok(())
    }
}
