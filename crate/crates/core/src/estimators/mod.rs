//! The estimation procedures and their shared configuration types.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamSpace;
use crate::rng::SeedSpec;
use crate::weights::WeightedDraws;

mod abc;
mod bootstrap;
mod md;
mod mh;
mod rs;
mod lt;
mod slt;
mod smd;

pub use abc::mcmc_abc_chain;
pub use bootstrap::bootstrap_bias_correct;
pub use lt::{lt_chain, lt_optimization};
pub use md::md_estimate;
pub use rs::{reverse_sampler, without_jacobian};
pub use slt::{slt_chain, slt_optimization};
pub use smd::{smd_estimate, SmdObjective};

/// Prior density on the structural parameters. Both variants include the
/// indicator of the parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    #[default]
    Flat,
    /// `theta[param]^(-alpha)` on `theta[param] > 0`.
    Power { param: String, alpha: f64 },
}

impl PriorSpec {
    pub fn power(param: &str, alpha: f64) -> Self {
        Self::Power { param: param.to_string(), alpha }
    }

    pub fn validate(&self, space: &ParamSpace) -> Result<()> {
        match self {
            Self::Flat => Ok(()),
            Self::Power { param, alpha } => {
                if space.index_of(param).is_none() {
                    return Err(Error::InvalidParam(format!("prior on unknown parameter {param}")));
                }
                if !alpha.is_finite() {
                    return Err(Error::InvalidParam(format!("prior exponent {alpha}")));
                }
                Ok(())
            }
        }
    }

    /// Log density up to a constant; `-inf` outside the support.
    pub fn log_density(&self, space: &ParamSpace, theta: &[f64]) -> f64 {
        if !space.interior(theta) {
            return f64::NEG_INFINITY;
        }
        match self {
            Self::Flat => 0.0,
            Self::Power { param, alpha } => match space.index_of(param) {
                Some(j) if theta[j] > 0.0 => -alpha * theta[j].ln(),
                _ => f64::NEG_INFINITY,
            },
        }
    }

    /// Finite-difference gradient of the log density (diagnostics only).
    pub fn log_gradient(&self, space: &ParamSpace, theta: &[f64]) -> Vec<f64> {
        let mut p = theta.to_vec();
        (0..theta.len())
            .map(|j| {
                let h = 1e-6 * theta[j].abs().max(1.0);
                p[j] = theta[j] + h;
                let up = self.log_density(space, &p);
                p[j] = theta[j] - h;
                let down = self.log_density(space, &p);
                p[j] = theta[j];
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

/// Gaussian random-walk proposal. During the first `adapt_window`
/// iterations of burn-in a common multiplier on `scale` is tuned toward a
/// moderate acceptance rate; it is frozen afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub scale: Vec<f64>,
    #[serde(default)]
    pub adapt_window: usize,
}

impl ProposalSpec {
    /// `2.38 / sqrt(K)` times a preliminary standard deviation per coordinate.
    pub fn from_sd(sd: &[f64], adapt_window: usize) -> Self {
        let c = 2.38 / (sd.len() as f64).sqrt();
        Self { scale: sd.iter().map(|s| c * s).collect(), adapt_window }
    }

    pub fn from_covariance(cov: &DMatrix<f64>, adapt_window: usize) -> Self {
        let sd: Vec<f64> = cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
        Self::from_sd(&sd, adapt_window)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.scale.len() != dim {
            return Err(Error::ShapeMismatch(format!("{} proposal scales for {dim} parameters", self.scale.len())));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParam(format!("proposal scales must be positive: {:?}", self.scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Draws kept.
    pub b: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// ABC tolerance.
    #[serde(default = "infinite")]
    pub delta: f64,
    /// Simulations per evaluation (SLT).
    #[serde(default = "one")]
    pub s: usize,
    pub seed: SeedSpec,
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn one() -> usize {
    1
}

impl ChainConfig {
    pub fn new(b: usize, burn_in: usize, thin: usize, seed: SeedSpec) -> Self {
        Self { b, burn_in, thin, delta: f64::INFINITY, s: 1, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::InvalidParam("B must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParam("thin must be at least 1".into()));
        }
        if self.s == 0 {
            return Err(Error::InvalidParam("S must be at least 1".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParam(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

fn check_square(w: &DMatrix<f64>, dim: usize) -> Result<()> {
    if w.nrows() != dim || w.ncols() != dim {
        return Err(Error::ShapeMismatch(format!("{}x{} matrix for {dim} statistics", w.nrows(), w.ncols())));
    }
    Ok(())
}

/// Lower Cholesky factor of a covariance matrix. A zero matrix yields a
/// zero factor (no perturbation).
fn covariance_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sigma.iter().all(|v| *v == 0.0) {
        return Ok(sigma.clone());
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    sym.cholesky().map(|c| c.l()).ok_or(Error::SingularCovariance)
}

/// Writes draws as CSV with columns `b, <names>, raw_weight, norm_weight,
/// converged, jac_logdet`.
pub fn write_draws_csv(draws: &WeightedDraws, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_draws(draws, file)
}

pub fn write_draws<W: Write>(draws: &WeightedDraws, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["b".to_string()];
    header.extend(draws.space().names.iter().cloned());
    header.extend(["raw_weight", "norm_weight", "converged", "jac_logdet"].map(String::from));
    wtr.write_record(&header)?;
    for (b, d) in draws.draws().iter().enumerate() {
        let diag = draws.diagnostics()[b];
        let mut row = vec![b.to_string()];
        row.extend(d.iter().map(|x| x.to_string()));
        row.push(draws.raw_weights()[b].to_string());
        row.push(draws.norm_weights()[b].to_string());
        row.push(diag.converged.to_string());
        row.push(diag.jac_logdet.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
