//! Data-generating processes with their auxiliary statistics.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::param::{AuxVector, ParamSpace};
use crate::rng::{derive_stream, SeedSpec, Stream};

pub mod normal;
pub mod panel;

pub use normal::{NormalData, NormalModel};
pub use panel::{PanelConfig, PanelData, PanelInnovations, PanelModel};

/// Moment function of a Laplace-type quasi-posterior together with the
/// matrices that define it.
///
/// The quasi-likelihood is `exp(-n/2 * g(theta)' W g(theta))`. The
/// optimization view perturbs the equation `g(theta) = a / sqrt(n)` with
/// `a ~ N(0, sigma)`.
#[derive(Clone)]
pub struct LtProblem {
    pub space: Arc<ParamSpace>,
    pub moments: Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>,
    pub weight: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub n: f64,
    /// Zero of the moment function (the MD point).
    pub center: Vec<f64>,
}

impl std::fmt::Debug for LtProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LtProblem")
            .field("weight", &self.weight)
            .field("sigma", &self.sigma)
            .field("n", &self.n)
            .field("center", &self.center)
            .finish()
    }
}

/// A simulable model with exactly identifying auxiliary statistics.
///
/// `aux_stats(simulate(theta, eps))` must be deterministic in
/// `(theta, eps)` and continuous in `theta`.
pub trait Model: Send + Sync {
    type Innovations: Send + Sync + Clone;
    type Data: Send + Sync;

    fn name(&self) -> &'static str;
    fn space(&self) -> &Arc<ParamSpace>;
    fn truth(&self) -> &[f64];
    /// Observations entering the auxiliary statistics (T, or N*T).
    fn sample_size(&self) -> usize;

    fn dim(&self) -> usize {
        self.space().dim()
    }

    fn draw_innovations(&self, rng: &mut Stream) -> Self::Innovations;

    fn innovations(&self, seed: SeedSpec) -> Self::Innovations {
        self.draw_innovations(&mut derive_stream(seed))
    }

    fn simulate(&self, theta: &[f64], eps: &Self::Innovations) -> Self::Data;

    fn aux_stats(&self, data: &Self::Data) -> Result<AuxVector>;

    /// `aux_stats(simulate(theta, eps))`; models override this with a fused
    /// path that skips materializing the dataset.
    fn simulated_aux(&self, theta: &[f64], eps: &Self::Innovations) -> Result<Vec<f64>> {
        self.aux_stats(&self.simulate(theta, eps)).map(|a| a.0)
    }

    /// Finite-sample expectation of the auxiliary statistics, when known.
    fn analytic_binding(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Closed-form root of `simulated_aux(theta, eps) = psi_hat`, when known.
    /// Used as a starting point; the generic solver still verifies it.
    fn exact_solve(&self, _psi_hat: &AuxVector, _eps: &Self::Innovations) -> Option<Vec<f64>> {
        None
    }

    /// Direct solution of the observed moment equations, when the auxiliary
    /// statistics are themselves the MD estimator.
    fn direct_md(&self, _psi_hat: &AuxVector) -> Option<Vec<f64>> {
        None
    }

    /// Starting point for solves: the MD estimate pulled into the interior.
    fn initial_guess(&self, psi_hat: &AuxVector) -> Vec<f64>;

    /// Asymptotic covariance of `sqrt(n) * (psi_hat - psi(theta))`.
    fn aux_covariance(&self, data: &Self::Data, psi_hat: &AuxVector) -> Result<DMatrix<f64>>;

    /// Frequentist covariance of the MD estimator (not scaled by n).
    fn md_covariance(&self, data: &Self::Data, psi_hat: &AuxVector) -> Result<DMatrix<f64>>;

    fn lt_problem(&self, data: &Self::Data, psi_hat: &AuxVector) -> Result<LtProblem>;

    /// Observed dataset for replication stream `seed`.
    fn observe(&self, seed: SeedSpec) -> Self::Data {
        let eps = self.innovations(seed);
        self.simulate(self.truth(), &eps)
    }
}

/// An observed dataset and its auxiliary statistics.
pub struct Observed<M: Model> {
    pub data: M::Data,
    pub psi_hat: AuxVector,
}

impl<M: Model> Observed<M> {
    pub fn new(model: &M, data: M::Data) -> Result<Self> {
        let psi_hat = model.aux_stats(&data)?;
        Ok(Self { data, psi_hat })
    }

    pub fn draw(model: &M, seed: SeedSpec) -> Result<Self> {
        Self::new(model, model.observe(seed))
    }
}
