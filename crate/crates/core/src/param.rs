use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a coordinate is mapped to the real line for unconstrained solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    /// `u = ln(theta)`, for strictly positive parameters.
    Log,
    /// `u = atanh(theta)`, for parameters in (-1, 1).
    Atanh,
}

impl Transform {
    pub fn to_unconstrained(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Atanh => x.atanh(),
        }
    }

    pub fn from_unconstrained(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp(),
            Transform::Atanh => u.tanh(),
        }
    }
}

/// Names, bounds and reparameterization of a model's structural parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub transforms: Vec<Transform>,
}

impl ParamSpace {
    pub fn new(entries: &[(&str, f64, f64, Transform)]) -> Arc<Self> {
        Arc::new(Self {
            names: entries.iter().map(|e| e.0.to_string()).collect(),
            lower: entries.iter().map(|e| e.1).collect(),
            upper: entries.iter().map(|e| e.2).collect(),
            transforms: entries.iter().map(|e| e.3).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Closed-box membership; infinite bounds are open.
    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x.is_finite() && x >= lo && x <= hi)
    }

    /// Strict interior membership, as needed by the log/atanh transforms.
    pub fn interior(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x.is_finite() && x > lo && x < hi)
    }

    pub fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.transforms)
            .map(|(&x, t)| t.to_unconstrained(x))
            .collect()
    }

    pub fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.transforms)
            .map(|(&x, t)| t.from_unconstrained(x))
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Structural parameters together with the space they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    space: Arc<ParamSpace>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(space: Arc<ParamSpace>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != space.dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                space.dim(),
                values.len()
            )));
        }
        if !space.contains(&values) {
            return Err(Error::InvalidParam(format!(
                "{values:?} outside bounds or not finite"
            )));
        }
        Ok(Self { space, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn space(&self) -> &Arc<ParamSpace> {
        &self.space
    }

    pub fn names(&self) -> &[String] {
        &self.space.names
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.space.index_of(name).map(|i| self.values[i])
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (n, v)) in self.space.names.iter().zip(&self.values).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{n}={v:.6}")?;
        }
        write!(f, ")")
    }
}

/// Auxiliary statistics computed from a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxVector(pub Vec<f64>);

impl AuxVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("auxiliary statistic {i} not finite")));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub estimator: String,
    pub draws: usize,
    pub simulations: usize,
    pub acceptance_rate: Option<f64>,
    pub solver_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub point: ParamVector,
    /// Posterior SD for samplers, frequentist SD for point estimators.
    pub spread: Vec<f64>,
    pub meta: EstimateMeta,
}

impl EstimateSummary {
    pub fn new(point: ParamVector, spread: Vec<f64>, meta: EstimateMeta) -> Result<Self> {
        if spread.len() != point.dim() {
            return Err(Error::ShapeMismatch("spread length".into()));
        }
        if spread.iter().any(|s| s.is_nan() || *s < 0.0) {
            return Err(Error::InvalidParam(format!("negative spread {spread:?}")));
        }
        Ok(Self { point, spread, meta })
    }
}
