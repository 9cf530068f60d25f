//! Experiment configuration, stored as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::PriorSpec;
use crate::models::PanelConfig;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalConfig {
    pub t: usize,
    #[serde(default)]
    pub m: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Normal(NormalConfig),
    Panel(PanelConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// The auxiliary statistics themselves.
    Ml,
    Md,
    Smd,
    Rs,
    Abc,
    Lt,
    LtOpt,
    Slt,
    SltOpt,
    Bootstrap,
    /// Exact posterior mean by numerical integration (normal model only).
    Bc,
}

impl EstimatorKind {
    pub fn default_label(self) -> &'static str {
        match self {
            Self::Ml => "MLE",
            Self::Md => "MD",
            Self::Smd => "SMD",
            Self::Rs => "RS",
            Self::Abc => "ABC",
            Self::Lt => "LT",
            Self::LtOpt => "LT-opt",
            Self::Slt => "SLT",
            Self::SltOpt => "SLT-opt",
            Self::Bootstrap => "Bootstrap",
            Self::Bc => "BC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Inverse of the estimated asymptotic covariance of the statistics.
    #[default]
    Efficient,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Simulations (SMD, SLT).
    #[serde(default = "defaults::one")]
    pub s: usize,
    /// Draws (RS, optimization views, bootstrap) or kept chain draws.
    #[serde(default = "defaults::draws")]
    pub b: usize,
    #[serde(default = "defaults::infinite")]
    pub delta: f64,
    #[serde(default = "defaults::one")]
    pub thin: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub adapt_window: usize,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub solver: SolverConfig,
}

mod defaults {
    pub fn one() -> usize {
        1
    }
    pub fn draws() -> usize {
        500
    }
    pub fn infinite() -> f64 {
        f64::INFINITY
    }
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            label: None,
            s: 1,
            b: defaults::draws(),
            delta: f64::INFINITY,
            thin: 1,
            burn_in: 0,
            adapt_window: 0,
            prior: PriorSpec::Flat,
            weighting: Weighting::Efficient,
            solver: SolverConfig::default(),
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.default_label().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    #[serde(default)]
    pub estimators: Vec<EstimatorConfig>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        let normal = matches!(self.model, ModelConfig::Normal(_));
        let mut labels = std::collections::HashSet::new();
        for e in &self.estimators {
            if !labels.insert(e.label()) {
                return Err(Error::Config(format!("duplicate estimator label {}", e.label())));
            }
            if e.kind == EstimatorKind::Bc && !normal {
                return Err(Error::UnsupportedEstimator("bc is only available for the normal model".into()));
            }
            if e.s == 0 || e.b == 0 || e.thin == 0 {
                return Err(Error::Config(format!("{}: s, b and thin must be at least 1", e.label())));
            }
            if !(e.delta > 0.0) {
                return Err(Error::Config(format!("{}: delta must be positive", e.label())));
            }
            e.solver.validate()?;
        }
        Ok(())
    }
}

/// Settings of the RS-versus-exact-posterior figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureConfig {
    pub t: usize,
    pub b: usize,
    pub seed: u64,
}

/// Contents of a config file: a replication experiment, or a figure when
/// the file has a `[figure1]` table.
#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Experiment(ExperimentConfig),
    Figure1 { name: String, out_dir: PathBuf, figure: FigureConfig },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FigureFile {
    name: String,
    #[serde(default = "default_out_dir")]
    out_dir: PathBuf,
    figure1: FigureConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if value.contains_key("figure1") {
            let f: FigureFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            if f.figure1.t < 2 || f.figure1.b == 0 {
                return Err(Error::Config("figure1 needs t >= 2 and b >= 1".into()));
            }
            Ok(Self::Figure1 { name: f.name, out_dir: f.out_dir, figure: f.figure1 })
        } else {
            ExperimentConfig::from_toml(text).map(Self::Experiment)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
