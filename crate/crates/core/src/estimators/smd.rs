use nalgebra::DMatrix;

use super::check_square;
use crate::error::{Error, Result};
use crate::models::{Model, Observed};
use crate::param::{EstimateMeta, EstimateSummary, ParamVector};
use crate::rng::{tags, SeedSpec};
use crate::solver::{minimize_j, SolveReport, SolverConfig};

/// Simulated binding function `(1/S) sum_s psi^s(theta)` with innovations
/// drawn once and held fixed.
pub struct SmdObjective<'a, M: Model> {
    model: &'a M,
    innovations: Vec<M::Innovations>,
}

impl<'a, M: Model> SmdObjective<'a, M> {
    /// Innovations `s = 0..S` come from `seed.sub(SMD, s)`.
    pub fn new(model: &'a M, s: usize, seed: SeedSpec) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidParam("S must be at least 1".into()));
        }
        let innovations = (0..s as u64).map(|i| model.innovations(seed.sub(tags::SMD, i))).collect();
        Ok(Self { model, innovations })
    }

    pub fn from_innovations(model: &'a M, innovations: Vec<M::Innovations>) -> Self {
        Self { model, innovations }
    }

    pub fn s(&self) -> usize {
        self.innovations.len()
    }

    pub fn innovations(&self) -> &[M::Innovations] {
        &self.innovations
    }

    pub fn mean_aux(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.model.space().dim()];
        for eps in &self.innovations {
            let psi = self.model.simulated_aux(theta, eps)?;
            if psi.len() != acc.len() {
                return Err(Error::ShapeMismatch("simulated statistics length".into()));
            }
            for (a, p) in acc.iter_mut().zip(&psi) {
                *a += p;
            }
        }
        let s = self.s() as f64;
        Ok(acc.into_iter().map(|a| a / s).collect())
    }

    /// `psi_hat - mean_aux(theta)`.
    pub fn residual(&self, psi_hat: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        Ok(psi_hat.iter().zip(self.mean_aux(theta)?).map(|(a, b)| a - b).collect())
    }

    /// `g' W g`; a deterministic function of `theta`.
    pub fn objective(&self, psi_hat: &[f64], w: &DMatrix<f64>, theta: &[f64]) -> Result<f64> {
        let g = nalgebra::DVector::from_vec(self.residual(psi_hat, theta)?);
        Ok((g.transpose() * w * &g)[(0, 0)])
    }

    pub fn solve(&self, psi_hat: &[f64], w: &DMatrix<f64>, theta0: &ParamVector, cfg: &SolverConfig) -> Result<SolveReport> {
        minimize_j(|theta| self.residual(psi_hat, theta), theta0, w, cfg)
    }
}

/// Simulated minimum distance with `S` fixed innovation draws.
pub fn smd_estimate<M: Model>(
    model: &M,
    obs: &Observed<M>,
    w: &DMatrix<f64>,
    s: usize,
    seed: SeedSpec,
    cfg: &SolverConfig,
) -> Result<EstimateSummary> {
    check_square(w, obs.psi_hat.len())?;
    let objective = SmdObjective::new(model, s, seed)?;
    let theta0 = ParamVector::new(model.space().clone(), model.initial_guess(&obs.psi_hat))?;
    let report = objective.solve(obs.psi_hat.as_slice(), w, &theta0, cfg)?;
    if !report.converged {
        return Err(Error::NoConvergence { best_objective: report.final_objective });
    }
    let cov = model.md_covariance(&obs.data, &obs.psi_hat)?;
    let inflate = 1.0 + 1.0 / s as f64;
    let spread = cov.diagonal().iter().map(|v| (inflate * v.max(0.0)).sqrt()).collect();
    let meta = EstimateMeta { estimator: "SMD".into(), simulations: s, ..Default::default() };
    EstimateSummary::new(report.solution, spread, meta)
}
